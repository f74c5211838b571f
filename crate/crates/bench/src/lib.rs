//! Shared inputs for the benchmarks.

use wildsynth_core::editor::{mock_perturb, PerturbKind};
use wildsynth_core::fixtures::textured_scene;
use wildsynth_core::{BBox, ImageBuffer};

pub const FULL_HD: (u32, u32) = (1920, 1080);

pub fn detection_box() -> BBox {
    BBox::new(0.35, 0.3, 0.3, 0.35).expect("valid box")
}

/// A textured scene and an in-box edit of it.
pub fn edited_pair(width: u32, height: u32, seed: u64) -> (ImageBuffer, ImageBuffer) {
    let scene = textured_scene(width, height, seed);
    let edit = mock_perturb(
        &scene,
        &PerturbKind::InBoxEdit {
            bbox: detection_box(),
            texture_amp: 48,
        },
    )
    .expect("in-box edit");
    (scene, edit)
}
