//! Synthetic scenes for tests, benchmarks and the mock backend.
//!
//! Scenes are smooth value noise with fine grain, kept inside
//! [`SCENE_MIN`, `SCENE_MAX`] so any constant shift of up to 20 levels
//! stays clear of clamping.

use chrono::TimeZone;
use rand::Rng;

use crate::buffer::ImageBuffer;
use crate::curation::{placement, BaseImageRecord};
use crate::ingest::{BBox, CaptureContext, Category, DayNight, DayNightSource, DetectionRecord};
use crate::rng;

pub const SCENE_MIN: u8 = 20;
pub const SCENE_MAX: u8 = 235;

/// Bilinearly interpolated lattice noise in [0, 1).
pub struct ValueNoise {
    cell: u32,
    cols: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    pub fn new(width: u32, height: u32, cell: u32, seed: u64) -> Self {
        let cols = (width / cell + 2) as usize;
        let rows = (height / cell + 2) as usize;
        let mut rng = rng::seeded(seed);
        let lattice = (0..cols * rows).map(|_| rng.random::<f64>()).collect();
        Self {
            cell,
            cols,
            lattice,
        }
    }

    pub fn at(&self, x: u32, y: u32) -> f64 {
        let (gx, gy) = (x / self.cell, y / self.cell);
        let fx = (x % self.cell) as f64 / self.cell as f64;
        let fy = (y % self.cell) as f64 / self.cell as f64;
        let v = |i: u32, j: u32| self.lattice[j as usize * self.cols + i as usize];
        let top = v(gx, gy) * (1.0 - fx) + v(gx + 1, gy) * fx;
        let bottom = v(gx, gy + 1) * (1.0 - fx) + v(gx + 1, gy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn to_range(v: f64) -> u8 {
    let span = (SCENE_MAX - SCENE_MIN) as f64;
    (SCENE_MIN as f64 + v.clamp(0.0, 1.0) * span).round() as u8
}

/// Daytime color scene: per-channel coarse and fine noise plus grain.
pub fn textured_scene(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let layers: Vec<(ValueNoise, ValueNoise)> = (0..3)
        .map(|c| {
            (
                ValueNoise::new(
                    width,
                    height,
                    32,
                    rng::derive_seed(seed, &format!("coarse{c}")),
                ),
                ValueNoise::new(
                    width,
                    height,
                    6,
                    rng::derive_seed(seed, &format!("fine{c}")),
                ),
            )
        })
        .collect();
    let mut grain = rng::seeded(rng::derive_seed(seed, "grain"));
    ImageBuffer::from_fn(width, height, |x, y| {
        let mut px = [0u8; 3];
        for (c, (coarse, fine)) in layers.iter().enumerate() {
            let g: f64 = grain.random_range(-0.04..0.04);
            px[c] = to_range(0.65 * coarse.at(x, y) + 0.35 * fine.at(x, y) + g);
        }
        px
    })
    .expect("fixture dimensions are valid")
}

/// Grayscale scene resembling an infrared night capture.
pub fn night_scene(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let coarse = ValueNoise::new(width, height, 32, rng::derive_seed(seed, "night-coarse"));
    let fine = ValueNoise::new(width, height, 6, rng::derive_seed(seed, "night-fine"));
    let mut grain = rng::seeded(rng::derive_seed(seed, "night-grain"));
    ImageBuffer::from_fn(width, height, |x, y| {
        let g: f64 = grain.random_range(-0.04..0.04);
        let v = to_range(0.6 * coarse.at(x, y) + 0.4 * fine.at(x, y) + g);
        [v, v, v]
    })
    .expect("fixture dimensions are valid")
}

/// Base record with a metadata day/night flag and, if `month` is given,
/// a timestamp on the 10th of that month.
pub fn base_record(
    id: &str,
    species: &str,
    day_night: DayNight,
    month: Option<u32>,
    bbox: BBox,
) -> BaseImageRecord {
    let ts = month.map(|m| chrono::Utc.with_ymd_and_hms(2021, m, 10, 12, 0, 0).unwrap());
    BaseImageRecord {
        image_id: id.into(),
        species: species.into(),
        detection: DetectionRecord {
            image_id: id.into(),
            bbox,
            confidence: 0.95,
            category: Category::Animal,
        },
        context: CaptureContext::new(species, ts, Some(day_night), None),
        day_night,
        day_night_source: DayNightSource::Metadata,
        placement: placement(&bbox),
    }
}

/// Scene matching a record's day/night label, seeded by its id.
pub fn scene_for(record: &BaseImageRecord, width: u32, height: u32) -> ImageBuffer {
    let seed = rng::derive_seed(0, &record.image_id);
    match record.day_night {
        DayNight::Day => textured_scene(width, height, seed),
        DayNight::Night => night_scene(width, height, seed),
    }
}
