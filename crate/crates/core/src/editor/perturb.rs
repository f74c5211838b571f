//! Deterministic stand-in edits used by the mock backend and QC fixtures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::error::EditorError;
use crate::fixtures::ValueNoise;
use crate::ingest::BBox;
use crate::rng;

/// Pixel rectangle, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x - self.x < self.w && y - self.y < self.h
    }
}

/// Side of the square blocks used for patch noise. Blocky noise keeps its
/// contrast through the QC blur.
const PATCH_BLOCK: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    Identity,
    /// Constant per-channel offset, clamped to 0..=255.
    DcShift(i16, i16, i16),
    /// Replaces the rectangle with blocky noise of amplitude `noise_amp`
    /// around mid-gray.
    LocalPatch {
        rect: Rect,
        noise_amp: u8,
    },
    /// Moves every pixel inside the box by a random amount in
    /// `[texture_amp / 2, texture_amp]`, away from the nearer clamp bound.
    InBoxEdit {
        bbox: BBox,
        texture_amp: u8,
    },
    /// Replaces the whole frame with a new scene that differs from the
    /// input at every pixel.
    GlobalRerender,
}

fn kind_seed(kind: &PerturbKind) -> u64 {
    let label = serde_json::to_string(kind).expect("perturbation serializes");
    rng::derive_seed(0x5eed, &label)
}

pub fn mock_perturb(image: &ImageBuffer, kind: &PerturbKind) -> Result<ImageBuffer, EditorError> {
    let (w, h) = (image.width(), image.height());
    let mut out = image.clone();
    match *kind {
        PerturbKind::Identity => {}
        PerturbKind::DcShift(dr, dg, db) => {
            let shift = [dr, dg, db];
            for px in out.data_mut().chunks_exact_mut(3) {
                for c in 0..3 {
                    px[c] = (px[c] as i16 + shift[c]).clamp(0, 255) as u8;
                }
            }
        }
        PerturbKind::LocalPatch { rect, noise_amp } => {
            if rect.w == 0 || rect.h == 0 || rect.x + rect.w > w || rect.y + rect.h > h {
                return Err(EditorError::Geometry(format!(
                    "patch {rect:?} does not fit in {w}x{h}"
                )));
            }
            let mut rng = rng::seeded(kind_seed(kind));
            let bx = rect.w.div_ceil(PATCH_BLOCK) as usize;
            let by = rect.h.div_ceil(PATCH_BLOCK) as usize;
            let amp = noise_amp as i16;
            let blocks: Vec<[u8; 3]> = (0..bx * by)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (128 + rng.random_range(-amp..=amp)).clamp(0, 255) as u8
                    })
                })
                .collect();
            let data = out.data_mut();
            for y in rect.y..rect.y + rect.h {
                for x in rect.x..rect.x + rect.w {
                    let b = ((y - rect.y) / PATCH_BLOCK) as usize * bx
                        + ((x - rect.x) / PATCH_BLOCK) as usize;
                    let i = (y as usize * w as usize + x as usize) * 3;
                    data[i..i + 3].copy_from_slice(&blocks[b]);
                }
            }
        }
        PerturbKind::InBoxEdit { bbox, texture_amp } => {
            bbox.validate().map_err(EditorError::Geometry)?;
            let (x0, y0, x1, y1) = bbox.to_pixels(w, h);
            let mut rng = rng::seeded(kind_seed(kind));
            let lo = (texture_amp / 2).max(1);
            let hi = texture_amp.max(lo);
            let data = out.data_mut();
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = (y as usize * w as usize + x as usize) * 3;
                    for v in &mut data[i..i + 3] {
                        let m = rng.random_range(lo..=hi);
                        *v = if *v < 128 {
                            v.saturating_add(m)
                        } else {
                            v.saturating_sub(m)
                        };
                    }
                }
            }
        }
        PerturbKind::GlobalRerender => {
            let seed = kind_seed(kind) ^ ((w as u64) << 32 | h as u64);
            let layers: Vec<ValueNoise> = (0..3)
                .map(|c| ValueNoise::new(w, h, 24, rng::derive_seed(seed, &format!("rerender{c}"))))
                .collect();
            let mut grain = rng::seeded(rng::derive_seed(seed, "rerender-grain"));
            let src = image.data();
            let data = out.data_mut();
            for y in 0..h {
                for x in 0..w {
                    let i = (y as usize * w as usize + x as usize) * 3;
                    let mut far = false;
                    for c in 0..3 {
                        let v = layers[c].at(x, y) * 255.0 + grain.random_range(-12.0..12.0);
                        data[i + c] = v.clamp(0.0, 255.0).round() as u8;
                        far |= data[i + c].abs_diff(src[i + c]) > 40;
                    }
                    if !far {
                        // too close to the input; push the first channel away
                        let v = src[i];
                        data[i] = if v < 128 { v + 64 } else { v - 64 };
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::textured_scene;
    use proptest::prelude::*;

    #[test]
    fn dc_shift_moves_every_sample_exactly() {
        let img = textured_scene(80, 64, 1);
        let out = mock_perturb(&img, &PerturbKind::DcShift(7, 7, 7)).unwrap();
        let sum: i64 = img
            .data()
            .iter()
            .zip(out.data())
            .map(|(a, b)| *b as i64 - *a as i64)
            .sum();
        assert_eq!(sum as f64 / img.data().len() as f64, 7.0);
    }

    #[test]
    fn dc_shift_clamps() {
        let img = ImageBuffer::new(64, 64, vec![250; 64 * 64 * 3]).unwrap();
        let out = mock_perturb(&img, &PerturbKind::DcShift(10, -300, 0)).unwrap();
        assert_eq!(out.pixel(3, 3), [255, 0, 250]);
    }

    #[test]
    fn in_box_edit_stays_in_box_and_exceeds_threshold() {
        let img = textured_scene(100, 80, 2);
        let bbox = BBox::new(0.3, 0.3, 0.3, 0.35).unwrap();
        assert!((bbox.area() - 0.105).abs() < 1e-12);
        let out = mock_perturb(
            &img,
            &PerturbKind::InBoxEdit {
                bbox,
                texture_amp: 40,
            },
        )
        .unwrap();
        let (x0, y0, x1, y1) = bbox.to_pixels(100, 80);
        let inside = Rect::new(x0, y0, x1 - x0, y1 - y0);
        for y in 0..80 {
            for x in 0..100 {
                let (a, b) = (img.pixel(x, y), out.pixel(x, y));
                if inside.contains(x, y) {
                    assert!((0..3).all(|c| a[c].abs_diff(b[c]) >= 20));
                } else {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn local_patch_is_confined_and_rejects_overflow() {
        let img = textured_scene(100, 80, 3);
        let rect = Rect::new(5, 10, 30, 20);
        let out = mock_perturb(
            &img,
            &PerturbKind::LocalPatch {
                rect,
                noise_amp: 90,
            },
        )
        .unwrap();
        for y in 0..80 {
            for x in 0..100 {
                if !rect.contains(x, y) {
                    assert_eq!(img.pixel(x, y), out.pixel(x, y));
                }
            }
        }
        assert_ne!(img, out);
        let bad = PerturbKind::LocalPatch {
            rect: Rect::new(90, 10, 20, 5),
            noise_amp: 10,
        };
        assert!(matches!(
            mock_perturb(&img, &bad),
            Err(EditorError::Geometry(_))
        ));
    }

    #[test]
    fn global_rerender_changes_every_pixel() {
        let img = textured_scene(128, 96, 4);
        let out = mock_perturb(&img, &PerturbKind::GlobalRerender).unwrap();
        let changed = img
            .pixels()
            .zip(out.pixels())
            .filter(|(a, b)| (0..3).any(|c| a[c].abs_diff(b[c]) > 12))
            .count();
        assert_eq!(changed, img.pixel_count());
        assert_eq!(
            out,
            mock_perturb(&img, &PerturbKind::GlobalRerender).unwrap()
        );
    }

    proptest! {
        #[test]
        fn identity_is_identity(w in 64u32..90, h in 64u32..90, seed in any::<u64>()) {
            let img = textured_scene(w, h, seed);
            prop_assert_eq!(mock_perturb(&img, &PerturbKind::Identity).unwrap(), img);
        }

        #[test]
        fn unclamped_dc_shift_mean_equals_shift(d in -20i16..=20, seed in any::<u64>()) {
            let img = textured_scene(64, 64, seed);
            let out = mock_perturb(&img, &PerturbKind::DcShift(d, -d, d / 2)).unwrap();
            for (c, want) in [d, -d, d / 2].into_iter().enumerate() {
                let total: i64 = img.pixels().zip(out.pixels()).map(|(a, b)| b[c] as i64 - a[c] as i64).sum();
                prop_assert_eq!(total, want as i64 * img.pixel_count() as i64);
            }
        }
    }
}
