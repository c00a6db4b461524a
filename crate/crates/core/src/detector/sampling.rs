//! Minibatch ROI sampling and regression-target statistics.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bbox::{encode_delta, iou, BBox, BBoxDelta};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub rois_per_image: usize,
    pub fg_fraction: f64,
    /// Foreground when the best IoU with a ground-truth box is at least this.
    pub fg_iou_threshold: f64,
    /// Background when the best IoU lies in `[lo, hi)`.
    pub bg_iou_range: (f64, f64),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            rois_per_image: 64,
            fg_fraction: 0.25,
            fg_iou_threshold: 0.5,
            bg_iou_range: (0.1, 0.5),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if self.rois_per_image == 0 {
            return Err(Error::Config("rois_per_image must be positive".into()));
        }
        if !(self.fg_fraction > 0.0 && self.fg_fraction < 1.0) {
            return Err(Error::Config(format!("fg_fraction {} outside (0, 1)", self.fg_fraction)));
        }
        let (lo, hi) = self.bg_iou_range;
        if !unit(self.fg_iou_threshold) || !unit(lo) || !unit(hi) || lo > hi {
            return Err(Error::Config("IoU thresholds must lie in [0, 1] with bg lo <= hi".into()));
        }
        Ok(())
    }
}

/// One training ROI with label `u` (0 background, 1 target).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSample {
    pub roi: BBox,
    pub label: usize,
    /// Raw (unnormalised) regression target; present iff `label == 1`.
    pub target: Option<BBoxDelta>,
}

fn best_match(b: &BBox, gts: &[BBox]) -> Option<(f64, usize)> {
    gts.iter()
        .enumerate()
        .map(|(i, g)| (iou(b, g), i))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
}

/// Draws exactly `rois_per_image` ROIs from the ground-truth boxes plus
/// `proposals`: up to `fg_fraction` foreground, the rest background. When
/// too few eligible ROIs exist the chosen ones are repeated, with a warning.
pub fn sample_rois<R: Rng + ?Sized>(
    proposals: &[BBox],
    gts: &[BBox],
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<RoiSample>> {
    config.validate()?;
    let mut fg = Vec::new();
    let mut bg = Vec::new();
    for b in gts.iter().chain(proposals).filter(|b| b.is_valid()) {
        let (best, gi) = best_match(b, gts).unwrap_or((0.0, 0));
        if best >= config.fg_iou_threshold {
            fg.push(RoiSample {
                roi: *b,
                label: 1,
                target: Some(encode_delta(b, &gts[gi])),
            });
        } else if best >= config.bg_iou_range.0 && best < config.bg_iou_range.1 {
            bg.push(RoiSample {
                roi: *b,
                label: 0,
                target: None,
            });
        }
    }
    let n = config.rois_per_image;
    let fg_quota = ((config.fg_fraction * n as f64).round() as usize).min(fg.len());
    fg.shuffle(rng);
    bg.shuffle(rng);
    let mut out: Vec<RoiSample> = fg[..fg_quota].to_vec();
    let bg_take = (n - fg_quota).min(bg.len());
    out.extend_from_slice(&bg[..bg_take]);
    if out.len() < n {
        if out.is_empty() {
            return Err(Error::Input("image has neither foreground nor background ROIs".into()));
        }
        log::warn!(
            "only {} eligible ROIs ({} fg, {} bg); padding to {n} by repetition",
            out.len(),
            fg_quota,
            bg_take
        );
        // repeat background when there is any, keeping the foreground share
        let pool: Vec<RoiSample> = if bg_take > 0 { out[fg_quota..].to_vec() } else { out.clone() };
        let mut i = 0;
        while out.len() < n {
            out.push(pool[i % pool.len()]);
            i += 1;
        }
    }
    Ok(out)
}

/// Per-coordinate mean and standard deviation of regression targets. A zero
/// deviation becomes 1 so normalisation stays finite.
pub fn target_statistics(targets: &[BBoxDelta]) -> ([f64; 4], [f64; 4]) {
    if targets.is_empty() {
        return ([0.0; 4], [1.0; 4]);
    }
    let n = targets.len() as f64;
    let mut mean = [0.0; 4];
    for t in targets {
        for (m, v) in mean.iter_mut().zip(t.to_array()) {
            *m += v / n;
        }
    }
    let mut std = [0.0; 4];
    for t in targets {
        for ((s, v), m) in std.iter_mut().zip(t.to_array()).zip(mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    (mean, std.map(|v| if v > 1e-12 { v.sqrt() } else { 1.0 }))
}

pub fn normalize_target(t: &BBoxDelta, mean: &[f64; 4], std: &[f64; 4]) -> [f64; 4] {
    let a = t.to_array();
    std::array::from_fn(|i| (a[i] - mean[i]) / std[i])
}

pub fn denormalize_target(v: &[f64; 4], mean: &[f64; 4], std: &[f64; 4]) -> BBoxDelta {
    BBoxDelta::from_array(std::array::from_fn(|i| v[i] * std[i] + mean[i]))
}
