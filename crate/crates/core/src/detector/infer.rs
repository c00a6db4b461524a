//! End-to-end inference on one fused image.

use std::time::Instant;

use crate::bbox::{decode_delta, nms, BBox, Detection};
use crate::detector::config::DetectConfig;
use crate::detector::input::{image_tensor, to_input_frame, InputNorm};
use crate::detector::sampling::denormalize_target;
use crate::error::Result;
use crate::image::FusedImage;
use crate::nn::Network;
use crate::proposals::{selective_search, SelectiveSearchConfig};
use crate::scalar::Scalar;

/// Wall-clock seconds spent per stage on one image.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTiming {
    pub proposal: f64,
    pub network: f64,
    pub overall: f64,
}

/// Scores `proposals`, applies the target-class box regression, clips to
/// the image, drops scores not above the threshold and suppresses
/// overlaps. Output is sorted by descending score.
pub fn detect_with_proposals<T: Scalar>(
    network: &Network<T>,
    image: &FusedImage,
    proposals: &[BBox],
    config: &DetectConfig,
) -> Result<Vec<Detection>> {
    config.validate()?;
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    let input = image_tensor::<T>(image, config.input_scale, false, &InputNorm::of(network))?;
    let features = network.feature_extractor(&input)?;
    let rois: Vec<BBox> = proposals
        .iter()
        .map(|p| to_input_frame(p, config.input_scale, false, input.dim(3)))
        .collect();
    let pooled = network.roi_pool(&features, &rois)?;
    let (probs, deltas) = network.heads(&pooled)?;
    let k = network.num_classes();
    let (mean, std) = network.bbox_normalization();
    let (w, h) = (image.width() as f64, image.height() as f64);
    let mut dets = Vec::new();
    for (r, p) in proposals.iter().enumerate() {
        let score = probs.data()[r * k + 1].to_f64_lossy();
        if !(score > config.score_threshold) {
            continue;
        }
        let raw: [f64; 4] = std::array::from_fn(|j| deltas.data()[r * 4 * k + 4 + j].to_f64_lossy());
        let (b, _) = decode_delta(p, &denormalize_target(&raw, &mean, &std));
        let b = b.clip(w, h);
        if b.is_valid() {
            dets.push(Detection::new(b, score));
        }
    }
    Ok(nms(&dets, config.nms_iou))
}

/// Proposal generation followed by [`detect_with_proposals`], timed.
pub fn detect<T: Scalar>(
    network: &Network<T>,
    image: &FusedImage,
    proposal_config: &SelectiveSearchConfig,
    config: &DetectConfig,
) -> Result<(Vec<Detection>, StageTiming)> {
    let start = Instant::now();
    let proposals = selective_search(image, proposal_config)?;
    let proposal = start.elapsed().as_secs_f64();
    let net_start = Instant::now();
    let dets = detect_with_proposals(network, image, &proposals.boxes, config)?;
    let network_time = net_start.elapsed().as_secs_f64();
    Ok((
        dets,
        StageTiming {
            proposal,
            network: network_time,
            overall: start.elapsed().as_secs_f64(),
        },
    ))
}
