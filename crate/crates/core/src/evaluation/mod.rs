//! Verification helpers: synthetic scenes, mIoU, the poly learning-rate
//! schedule and the two-ReLU form of ReLU6.

mod scene;

use serde::{Deserialize, Serialize};

pub use scene::{
    render_scene, resample_to_map, standard_camera, synthetic_corpus, GroundBorder, Rect, SceneRender, SceneSpec,
};

use crate::error::{Error, Result};
use crate::freespace::FreespaceMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub free: f64,
    pub obstacle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: f64,
    pub per_class_iou: ClassIou,
    pub frame_count: usize,
}

impl MetricReport {
    /// Per-class IoUs averaged over frames; `miou` is their mean.
    pub fn average(reports: &[MetricReport]) -> MetricReport {
        let frames: usize = reports.iter().map(|r| r.frame_count).sum();
        if frames == 0 {
            return MetricReport {
                miou: 0.0,
                per_class_iou: ClassIou {
                    free: 0.0,
                    obstacle: 0.0,
                },
                frame_count: 0,
            };
        }
        let weighted = |f: fn(&MetricReport) -> f64| {
            reports.iter().map(|r| f(r) * r.frame_count as f64).sum::<f64>() / frames as f64
        };
        let free = weighted(|r| r.per_class_iou.free);
        let obstacle = weighted(|r| r.per_class_iou.obstacle);
        MetricReport {
            miou: (free + obstacle) / 2.0,
            per_class_iou: ClassIou { free, obstacle },
            frame_count: frames,
        }
    }
}

/// Intersection-over-union per class, averaged over the two classes. A class
/// absent from both masks scores 1.
pub fn miou(pred: &FreespaceMap, gt: &FreespaceMap) -> Result<MetricReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    // counts[pred][gt]
    let mut counts = [[0usize; 2]; 2];
    for (&p, &g) in pred.cells().iter().zip(gt.cells()) {
        counts[p as usize][g as usize] += 1;
    }
    let iou = |c: usize| {
        let inter = counts[c][c];
        let union = counts[c][0] + counts[c][1] + counts[0][c] + counts[1][c] - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    };
    let (obstacle, free) = (iou(0), iou(1));
    Ok(MetricReport {
        miou: (free + obstacle) / 2.0,
        per_class_iou: ClassIou { free, obstacle },
        frame_count: 1,
    })
}

pub const POLY_BASE_LR: f64 = 0.0006;
pub const POLY_EPOCHS: f64 = 1000.0;
pub const POLY_POWER: f64 = 0.9;

/// `0.0006 · ((1000 − epoch) / 1000)^0.9` for `epoch` in `[0, 1000]`.
pub fn poly_lr(epoch: f64) -> Result<f64> {
    if !(0.0..=POLY_EPOCHS).contains(&epoch) {
        return Err(Error::Domain(format!("epoch {epoch} outside [0, 1000]")));
    }
    Ok(POLY_BASE_LR * ((POLY_EPOCHS - epoch) / POLY_EPOCHS).powf(POLY_POWER))
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// ReLU6 expressed with two plain ReLUs: `ReLU(x) − ReLU(x − 6)`.
#[inline]
pub fn relu6_rewrite(x: f64) -> f64 {
    relu(x) - relu(x - 6.0)
}
