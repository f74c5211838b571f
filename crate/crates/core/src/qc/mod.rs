//! Scene-drift quality control.
//!
//! The change mask is built from raw pixel differences: threshold, label
//! 8-connected blobs, drop speckle, keep only blobs touching the detector
//! box, dilate. Scoring then runs on Gaussian-blurred pixels outside the
//! mask and outside the top/bottom timestamp margins, and the day/night
//! gates turn the three scores into a verdict.

pub mod blur;
pub mod components;
pub mod morphology;
pub mod ssim;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::buffer::ImageBuffer;
use crate::error::QcError;
use crate::ingest::{BBox, DayNight};

pub use components::{connected_components, Blob, Labeling};

/// Which area the mask fraction is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskDenominator {
    /// Image minus the edge margins, the same region that is scored.
    #[default]
    ScoredRegion,
    WholeImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcParams {
    /// A pixel counts as changed when its largest channel difference
    /// exceeds this (8-bit units).
    pub diff_threshold: u8,
    /// Blobs smaller than this fraction of the image are dropped as noise.
    pub min_blob_fraction: f64,
    pub min_dilation_radius: f64,
    /// Dilation radius as a fraction of the image diagonal.
    pub dilation_diagonal_fraction: f64,
    pub max_mask_fraction: f64,
    pub mask_denominator: MaskDenominator,
    /// Fraction of rows excluded at the top and at the bottom.
    pub edge_margin_fraction: f64,
    pub blur_radius: f64,
    /// Kernel half-width in units of sigma.
    pub blur_truncate: f64,
    pub ssim_window: usize,
    pub day_norm_mae_max: f64,
    pub day_ssim_min: f64,
    pub night_raw_mae_max: f64,
}

impl Default for QcParams {
    fn default() -> Self {
        Self {
            diff_threshold: 12,
            min_blob_fraction: 0.0005,
            min_dilation_radius: 5.0,
            dilation_diagonal_fraction: 0.02,
            max_mask_fraction: 0.70,
            mask_denominator: MaskDenominator::ScoredRegion,
            edge_margin_fraction: 0.06,
            blur_radius: 2.0,
            blur_truncate: 3.0,
            ssim_window: 7,
            day_norm_mae_max: 7.0,
            day_ssim_min: 0.85,
            night_raw_mae_max: 5.0,
        }
    }
}

impl QcParams {
    pub fn validate(&self) -> Result<(), QcError> {
        let positive = [
            ("diff_threshold", self.diff_threshold as f64),
            ("min_blob_fraction", self.min_blob_fraction),
            ("min_dilation_radius", self.min_dilation_radius),
            (
                "dilation_diagonal_fraction",
                self.dilation_diagonal_fraction,
            ),
            ("blur_radius", self.blur_radius),
            ("blur_truncate", self.blur_truncate),
            ("day_norm_mae_max", self.day_norm_mae_max),
            ("day_ssim_min", self.day_ssim_min),
            ("night_raw_mae_max", self.night_raw_mae_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QcError::Params(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.max_mask_fraction > 0.0 && self.max_mask_fraction < 1.0) {
            return Err(QcError::Params(
                "max_mask_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(0.0..0.5).contains(&self.edge_margin_fraction) {
            return Err(QcError::Params(
                "edge_margin_fraction must lie in [0, 0.5)".into(),
            ));
        }
        if self.ssim_window % 2 == 0 {
            return Err(QcError::Params("ssim_window must be odd".into()));
        }
        Ok(())
    }

    pub fn dilation_radius(&self, width: u32, height: u32) -> f64 {
        let diagonal = (width as f64).hypot(height as f64);
        self.min_dilation_radius
            .max(self.dilation_diagonal_fraction * diagonal)
    }

    /// Rows excluded at each of the top and bottom edges.
    pub fn margin_rows(&self, height: u32) -> u32 {
        ((self.edge_margin_fraction * height as f64).round() as u32).min(height / 2)
    }

    /// Short stable hash of the parameter set, stored with every verdict.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("params serialize");
        Sha256::digest(&canonical)[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Dilated, box-anchored change mask.
#[derive(Debug, Clone)]
pub struct ChangeMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
    /// Masked share of the scored region (or whole image, per params).
    pub area_fraction: f64,
    /// Blobs that survived the size and anchor filters.
    pub blob_count: usize,
    pub discarded_small: usize,
    pub discarded_unanchored: usize,
    pub anchored: bool,
    pub dilation_radius: f64,
    pub margin_rows: u32,
}

impl ChangeMask {
    pub fn summary(&self) -> MaskSummary {
        MaskSummary {
            area_fraction: self.area_fraction,
            blob_count: self.blob_count,
            anchored: self.anchored,
        }
    }

    fn in_scored_rows(&self, y: u32) -> bool {
        y >= self.margin_rows && y < self.height - self.margin_rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub area_fraction: f64,
    pub blob_count: usize,
    pub anchored: bool,
}

fn check_pair(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), QcError> {
    if !a.same_dimensions(b) {
        return Err(QcError::Geometry(format!(
            "original is {}x{}, edit is {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Per-pixel change plane: largest absolute channel difference above the
/// threshold.
pub fn changed_pixels(original: &ImageBuffer, edit: &ImageBuffer, threshold: u8) -> Vec<bool> {
    original
        .data()
        .chunks_exact(3)
        .zip(edit.data().chunks_exact(3))
        .map(|(a, b)| {
            let d = a[0]
                .abs_diff(b[0])
                .max(a[1].abs_diff(b[1]))
                .max(a[2].abs_diff(b[2]));
            d > threshold
        })
        .collect()
}

pub fn diff_mask(
    original: &ImageBuffer,
    edit: &ImageBuffer,
    bbox: &BBox,
    params: &QcParams,
) -> Result<ChangeMask, QcError> {
    check_pair(original, edit)?;
    bbox.validate().map_err(QcError::Geometry)?;
    let (w, h) = (original.width(), original.height());
    let changed = changed_pixels(original, edit, params.diff_threshold);
    let labeling = connected_components(&changed, w, h);

    let min_area = params.min_blob_fraction * (w as f64 * h as f64);
    let mut touches_box = vec![false; labeling.blobs.len() + 1];
    let (bx0, by0, bx1, by1) = bbox.to_pixels(w, h);
    for y in by0..by1 {
        for x in bx0..bx1 {
            touches_box[labeling.labels[(y * w + x) as usize] as usize] = true;
        }
    }
    let mut keep = vec![false; labeling.blobs.len() + 1];
    let (mut small, mut unanchored, mut kept) = (0, 0, 0);
    for b in &labeling.blobs {
        if (b.area as f64) < min_area {
            small += 1;
        } else if !touches_box[b.label as usize] {
            unanchored += 1;
        } else {
            keep[b.label as usize] = true;
            kept += 1;
        }
    }

    let radius = params.dilation_radius(w, h);
    let retained: Vec<bool> = labeling.labels.iter().map(|&l| keep[l as usize]).collect();
    let bits = if kept == 0 {
        retained
    } else {
        morphology::dilate_disk(&retained, w, h, radius)
    };

    let mut mask = ChangeMask {
        width: w,
        height: h,
        bits,
        area_fraction: 0.0,
        blob_count: kept,
        discarded_small: small,
        discarded_unanchored: unanchored,
        anchored: kept > 0,
        dilation_radius: radius,
        margin_rows: params.margin_rows(h),
    };
    let (masked, region) = match params.mask_denominator {
        MaskDenominator::WholeImage => (
            mask.bits.iter().filter(|&&b| b).count(),
            w as usize * h as usize,
        ),
        MaskDenominator::ScoredRegion => {
            let rows = mask.margin_rows..h - mask.margin_rows;
            let region = rows.len() * w as usize;
            let start = (mask.margin_rows * w) as usize;
            let masked = mask.bits[start..start + region]
                .iter()
                .filter(|&&b| b)
                .count();
            (masked, region)
        }
    };
    mask.area_fraction = if region == 0 {
        1.0
    } else {
        masked as f64 / region as f64
    };
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub raw_mae: f64,
    pub norm_mae: f64,
    pub ssim: f64,
    pub scored_pixel_count: usize,
    pub ssim_window_count: usize,
}

/// Scores the scene region of a pair. `None` when nothing is left to score:
/// no scene pixels, or no SSIM window that lies entirely in the scene.
pub fn scene_scores(
    original: &ImageBuffer,
    edit: &ImageBuffer,
    mask: &ChangeMask,
    params: &QcParams,
) -> Result<Option<SceneScore>, QcError> {
    check_pair(original, edit)?;
    let (w, h) = (original.width(), original.height());
    if mask.width != w || mask.height != h {
        return Err(QcError::Geometry(
            "mask does not match the image pair".into(),
        ));
    }

    let scene: Vec<bool> = mask
        .bits
        .chunks_exact(w as usize)
        .enumerate()
        .flat_map(|(y, row)| {
            let scored = mask.in_scored_rows(y as u32);
            row.iter().map(move |&m| scored && !m)
        })
        .collect();
    let n = scene.iter().filter(|&&s| s).count();
    if n == 0 {
        return Ok(None);
    }

    let taps = blur::kernel(params.blur_radius, params.blur_truncate);
    let a = blur::blur_rgb(original.data(), w, h, &taps);
    let b = blur::blur_rgb(edit.data(), w, h, &taps);

    // fixed-point sums are exact integers
    let mut abs_sum = 0u64;
    let mut signed = [0i64; 3];
    let pixels = || {
        a.chunks_exact(3)
            .zip(b.chunks_exact(3))
            .zip(&scene)
            .filter(|(_, &s)| s)
            .map(|(p, _)| p)
    };
    for (pa, pb) in pixels() {
        for c in 0..3 {
            let d = pb[c] as i64 - pa[c] as i64;
            abs_sum += d.unsigned_abs();
            signed[c] += d;
        }
    }
    let scale = blur::SCALE as f64;
    let samples = (3 * n) as f64;
    let raw_mae = abs_sum as f64 / samples / scale;
    let offsets = signed.map(|s| s as f64 / n as f64);
    let mut centered = 0.0f64;
    for (pa, pb) in pixels() {
        for c in 0..3 {
            let d = pb[c] as f64 - pa[c] as f64;
            centered += (d - offsets[c]).abs();
        }
    }
    let norm_mae = centered / samples / scale;

    let (la, lb) = (ssim::luma(&a, blur::SCALE), ssim::luma(&b, blur::SCALE));
    let Some((ssim, windows)) = ssim::mean_ssim(&la, &lb, &scene, w, h, params.ssim_window) else {
        return Ok(None);
    };
    Ok(Some(SceneScore {
        raw_mae,
        norm_mae,
        ssim,
        scored_pixel_count: n,
        ssim_window_count: windows,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    Pass,
    GlobalRerender,
    DayGateFail,
    NightGateFail,
    NoScenePixels,
}

/// Which threshold arm(s) held.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GatePath {
    NormMaeOnly,
    SsimOnly,
    Both,
    NightMae,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub pass: bool,
    pub reason: FailReason,
    pub gate_path: GatePath,
    pub score: Option<SceneScore>,
    pub mask: MaskSummary,
}

/// Applies the area bound and the day/night thresholds. Comparisons are
/// inclusive.
pub fn gate(
    score: Option<&SceneScore>,
    mask: &MaskSummary,
    day_night: DayNight,
    params: &QcParams,
) -> QcVerdict {
    let verdict = |pass, reason, gate_path| QcVerdict {
        pass,
        reason,
        gate_path,
        score: score.copied(),
        mask: *mask,
    };
    if mask.area_fraction > params.max_mask_fraction {
        return verdict(false, FailReason::GlobalRerender, GatePath::None);
    }
    let Some(s) = score else {
        return verdict(false, FailReason::NoScenePixels, GatePath::None);
    };
    match day_night {
        DayNight::Day => {
            let norm_ok = s.norm_mae <= params.day_norm_mae_max;
            let ssim_ok = s.ssim >= params.day_ssim_min;
            match (norm_ok, ssim_ok) {
                (true, true) => verdict(true, FailReason::Pass, GatePath::Both),
                (true, false) => verdict(true, FailReason::Pass, GatePath::NormMaeOnly),
                (false, true) => verdict(true, FailReason::Pass, GatePath::SsimOnly),
                (false, false) => verdict(false, FailReason::DayGateFail, GatePath::None),
            }
        }
        DayNight::Night => {
            if s.raw_mae <= params.night_raw_mae_max {
                verdict(true, FailReason::Pass, GatePath::NightMae)
            } else {
                verdict(false, FailReason::NightGateFail, GatePath::None)
            }
        }
    }
}

/// Mask, score and gate one original/edit pair.
pub fn evaluate_pair(
    original: &ImageBuffer,
    edit: &ImageBuffer,
    bbox: &BBox,
    day_night: DayNight,
    params: &QcParams,
) -> Result<QcVerdict, QcError> {
    let mask = diff_mask(original, edit, bbox, params)?;
    let score = scene_scores(original, edit, &mask, params)?;
    Ok(gate(score.as_ref(), &mask.summary(), day_night, params))
}
