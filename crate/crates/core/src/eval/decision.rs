//! Late fusion of detections from independently run single-modality
//! detectors.

use crate::bbox::{iou, nms, sort_by_score, BBox, Detection};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionFusionConfig {
    /// Boxes overlapping a cluster seed at least this much join its cluster.
    pub merge_iou: f64,
    /// Suppression threshold applied to the merged boxes.
    pub nms_iou: f64,
}

impl Default for DecisionFusionConfig {
    fn default() -> Self {
        DecisionFusionConfig {
            merge_iou: 0.5,
            nms_iou: 0.3,
        }
    }
}

impl DecisionFusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("merge_iou", self.merge_iou), ("nms_iou", self.nms_iou)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Pools every list, then repeatedly takes the best remaining box as a seed,
/// gathers all remaining boxes overlapping it by at least `merge_iou`, and
/// replaces the group with its score-weighted mean box carrying the group's
/// maximum score. The merged boxes are finally suppressed with `nms_iou`.
pub fn decision_fuse(lists: &[Vec<Detection>], config: &DecisionFusionConfig) -> Result<Vec<Detection>> {
    config.validate()?;
    let mut pool: Vec<Detection> = lists.iter().flatten().copied().collect();
    sort_by_score(&mut pool);
    let mut used = vec![false; pool.len()];
    let mut merged = Vec::new();
    for i in 0..pool.len() {
        if used[i] {
            continue;
        }
        let seed = pool[i].bbox;
        let mut acc = [0.0; 4];
        let mut weight = 0.0;
        for j in i..pool.len() {
            if used[j] || iou(&seed, &pool[j].bbox) < config.merge_iou {
                continue;
            }
            used[j] = true;
            let d = &pool[j];
            // zero-score members still count when the whole cluster scores 0
            let w = d.score.max(0.0);
            for (a, v) in acc.iter_mut().zip([d.bbox.x, d.bbox.y, d.bbox.x2(), d.bbox.y2()]) {
                *a += w * v;
            }
            weight += w;
        }
        let bbox = if weight > 0.0 {
            BBox::from_corners(acc[0] / weight, acc[1] / weight, acc[2] / weight, acc[3] / weight)
        } else {
            seed
        };
        merged.push(Detection::new(bbox, pool[i].score));
    }
    Ok(nms(&merged, config.nms_iou))
}
