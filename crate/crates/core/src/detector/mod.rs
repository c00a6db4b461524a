//! ROI sampling, the joint detection loss, training and inference.

mod config;
mod infer;
mod input;
mod loss;
mod sampling;
mod train;

use std::fs;
use std::path::Path;

pub use config::{Architecture, DetectConfig, PipelineConfig, TrainConfig};
pub use infer::{detect, detect_with_proposals, StageTiming};
pub use input::{image_tensor, scaled_dims, to_input_frame, InputNorm};
pub use loss::{batch_loss, bbox_loss, classification_loss, joint_loss, BatchLoss, PROB_FLOOR};
pub use sampling::{
    denormalize_target, normalize_target, sample_rois, target_statistics, RoiSample, SamplerConfig,
};
pub use train::{prepare_images, regression_statistics, train, LogRow, TrainImage, TrainLog};

use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};
use crate::image::ensure_parent;

/// `image_id,x,y,w,h,score` rows under a header.
pub fn detections_csv(rows: &[(String, Detection)]) -> String {
    let mut s = String::from("image_id,x,y,w,h,score\n");
    for (id, d) in rows {
        let b = d.bbox;
        s.push_str(&format!("{id},{},{},{},{},{}\n", b.x, b.y, b.w, b.h, d.score));
    }
    s
}

pub fn save_detections(rows: &[(String, Detection)], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, detections_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<(String, Detection)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("image_id")) {
            continue;
        }
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: expected image_id,x,y,w,h,score", i + 1),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad());
        }
        let v: Vec<f64> = cols[1..]
            .iter()
            .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        out.push((
            cols[0].trim().to_string(),
            Detection::new(BBox::new(v[0], v[1], v[2], v[3]), v[4]),
        ));
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Vec<(String, Detection)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections(&text, path)
}
