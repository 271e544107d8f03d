//! Fixtures shared by the stage benchmarks.

use fsnav_core::evaluation::{render_scene, resample_to_map, synthetic_corpus};
use fsnav_core::imaging::{CropMeta, NETWORK_INPUT};
use fsnav_core::{ByteImage, FreespaceMap};

/// Rendered frames of a fixed synthetic corpus and their map-space truth.
pub fn fixture(count: usize) -> Vec<(ByteImage, FreespaceMap)> {
    synthetic_corpus(count, 7)
        .iter()
        .map(|s| {
            let r = render_scene(s).expect("corpus scenes render");
            let crop = CropMeta::bottom_two_thirds(r.rgb.width(), r.rgb.height(), NETWORK_INPUT)
                .expect("standard camera crops");
            let mask = resample_to_map(&r.truth, &crop);
            (r.rgb, mask)
        })
        .collect()
}
