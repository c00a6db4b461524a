//! Max pooling: dense windows and ROI bins.

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::nn::conv::output_size;
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Sentinel argmax for ROI bins that cover no feature-map cell.
pub const EMPTY_BIN: usize = usize::MAX;

/// Max pooling without padding. Returns the pooled tensor and, for every
/// output cell, the flat index of the winning input element.
pub fn maxpool_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<usize>)> {
    if input.shape().len() != 4 {
        return Err(Error::Config(format!("max-pool expects NCHW input, got {:?}", input.shape())));
    }
    let (n, c, h, w) = (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
    let (oh, ow) = match (output_size(h, kernel, stride, 0), output_size(w, kernel, stride, 0)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Config(format!(
                "max-pool window {kernel}x{kernel}/{stride} exceeds {h}x{w} input"
            )))
        }
    };
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let x = input.data();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..kernel {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for idx in row..row + kernel {
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.data_mut()[o] = x[best];
                argmax[o] = best;
                o += 1;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if output_grad.len() != argmax.len() {
        return Err(Error::Internal("max-pool backward: argmax does not match gradient".into()));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&g, &idx) in output_grad.data().iter().zip(argmax) {
        dx.data_mut()[idx] += g;
    }
    Ok(dx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiPoolSpec {
    pub bins_h: usize,
    pub bins_w: usize,
    /// Feature-map resolution over input-image resolution.
    pub spatial_scale: f64,
}

impl Default for RoiPoolSpec {
    fn default() -> Self {
        RoiPoolSpec {
            bins_h: 6,
            bins_w: 6,
            spatial_scale: 1.0 / 16.0,
        }
    }
}

impl RoiPoolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins_h == 0 || self.bins_w == 0 {
            return Err(Error::Config("ROI pooling grid must be non-empty".into()));
        }
        if !(self.spatial_scale > 0.0 && self.spatial_scale <= 1.0) {
            return Err(Error::Config(format!(
                "ROI pooling spatial scale {} outside (0, 1]",
                self.spatial_scale
            )));
        }
        Ok(())
    }

    /// Feature-map cell range `[start, end)` of every bin along one axis, for
    /// an ROI spanning `[lo, hi]` (inclusive input pixels) on a map of `size` cells.
    fn bins(&self, lo: f64, hi: f64, bins: usize, size: usize) -> Vec<(usize, usize)> {
        let clamp = |v: f64| v.max(0.0).min(size as f64 - 1.0);
        let start = clamp((lo * self.spatial_scale).round());
        let end = clamp((hi * self.spatial_scale).round());
        let extent = (end - start + 1.0).max(1.0);
        let bin = extent / bins as f64;
        (0..bins)
            .map(|b| {
                let s = ((b as f64 * bin).floor() + start).clamp(0.0, size as f64) as usize;
                let e = (((b + 1) as f64 * bin).ceil() + start).clamp(0.0, size as f64) as usize;
                (s, e)
            })
            .collect()
    }
}

/// Pools every ROI of a `1 x C x H x W` feature map into a `C x bins_h x bins_w`
/// grid by max. ROIs are in input-image pixels; bins that fall outside the map
/// produce 0 and record [`EMPTY_BIN`].
pub fn roi_pool_forward<T: Scalar>(
    feature_map: &Tensor<T>,
    rois: &[BBox],
    spec: &RoiPoolSpec,
) -> Result<(Tensor<T>, Vec<usize>)> {
    spec.validate()?;
    if feature_map.shape().len() != 4 || feature_map.dim(0) != 1 {
        return Err(Error::Config(format!(
            "ROI pooling expects a 1xCxHxW map, got {:?}",
            feature_map.shape()
        )));
    }
    let (c, h, w) = (feature_map.dim(1), feature_map.dim(2), feature_map.dim(3));
    let (bh, bw) = (spec.bins_h, spec.bins_w);
    let per_roi = c * bh * bw;
    let mut out = Tensor::zeros(&[rois.len(), c, bh, bw]);
    let mut argmax = vec![EMPTY_BIN; rois.len() * per_roi];
    let x = feature_map.data();
    for (r, roi) in rois.iter().enumerate() {
        let rows = spec.bins(roi.y, roi.y + roi.h - 1.0, bh, h);
        let cols = spec.bins(roi.x, roi.x + roi.w - 1.0, bw, w);
        for ch in 0..c {
            let plane = ch * h * w;
            for (by, &(ys, ye)) in rows.iter().enumerate() {
                for (bx, &(xs, xe)) in cols.iter().enumerate() {
                    let o = r * per_roi + (ch * bh + by) * bw + bx;
                    if ys >= ye || xs >= xe {
                        continue;
                    }
                    let mut best = plane + ys * w + xs;
                    for yy in ys..ye {
                        for xx in xs..xe {
                            let idx = plane + yy * w + xx;
                            if x[idx] > x[best] {
                                best = idx;
                            }
                        }
                    }
                    out.data_mut()[o] = x[best];
                    argmax[o] = best;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn roi_pool_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    argmax: &[usize],
    feature_shape: &[usize],
) -> Result<Tensor<T>> {
    if output_grad.len() != argmax.len() {
        return Err(Error::Internal("ROI pool backward: argmax does not match gradient".into()));
    }
    let mut dx = Tensor::zeros(feature_shape);
    for (&g, &idx) in output_grad.data().iter().zip(argmax) {
        if idx != EMPTY_BIN {
            dx.data_mut()[idx] += g;
        }
    }
    Ok(dx)
}
