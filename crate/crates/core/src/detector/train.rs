//! The SGD training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bbox::{encode_delta, iou, BBox, BBoxDelta};
use crate::dataset::Sample;
use crate::detector::config::TrainConfig;
use crate::detector::input::{image_tensor, to_input_frame, InputNorm};
use crate::detector::loss::batch_loss;
use crate::detector::sampling::{normalize_target, sample_rois, target_statistics, SamplerConfig};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::image::FusedImage;
use crate::nn::{Network, Sgd};
use crate::proposals::{selective_search, SelectiveSearchConfig};
use crate::scalar::Scalar;

/// A fused training image with its proposals and ground truth.
#[derive(Debug, Clone)]
pub struct TrainImage {
    pub image_id: String,
    pub image: FusedImage,
    pub proposals: Vec<BBox>,
    pub gts: Vec<BBox>,
}

/// Fuses every sample for `mode` and runs proposal generation, in parallel
/// across images; output order follows `samples`.
pub fn prepare_images(samples: &[Sample], mode: FusionMode, ss: &SelectiveSearchConfig) -> Result<Vec<TrainImage>> {
    samples
        .par_iter()
        .map(|s| {
            let image = s.fused(mode)?;
            let proposals = selective_search(&image, ss)?.boxes;
            Ok(TrainImage {
                image_id: s.image_id(),
                image,
                proposals,
                gts: s.gts.iter().map(|g| g.bbox).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    /// Number of completed updates.
    pub iteration: u64,
    pub l_cls: f64,
    pub l_bbox: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub bbox_mean: [f64; 4],
    pub bbox_std: [f64; 4],
}

impl TrainLog {
    /// `iteration,l_cls,l_bbox,lr` rows, preceded by comment lines with the
    /// regression-target normalisation.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# bbox_target_mean={:?}\n# bbox_target_std={:?}\niteration,l_cls,l_bbox,lr\n",
            self.bbox_mean, self.bbox_std
        );
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.iteration, r.l_cls, r.l_bbox, r.lr));
        }
        s
    }
}

/// Mean/std of the regression targets of every foreground candidate.
pub fn regression_statistics(images: &[TrainImage], sampler: &SamplerConfig) -> ([f64; 4], [f64; 4]) {
    let mut targets: Vec<BBoxDelta> = Vec::new();
    for img in images {
        for b in img.gts.iter().chain(&img.proposals) {
            let best = img
                .gts
                .iter()
                .map(|g| (iou(b, g), g))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((v, g)) = best {
                if v >= sampler.fg_iou_threshold {
                    targets.push(encode_delta(b, g));
                }
            }
        }
    }
    target_statistics(&targets)
}

fn diagnostic<T: Scalar>(network: &Network<T>, iteration: u64, what: &str) -> Error {
    let norms: Vec<String> = network
        .layer_norms()
        .into_iter()
        .map(|(n, v)| format!("{n}={v:.4e}"))
        .collect();
    Error::Numerical(format!("{what} at iteration {iteration}; layer norms: {}", norms.join(", ")))
}

/// Trains `network` in place. Deterministic for a fixed `config.seed`.
/// `on_step` runs after every update, e.g. to write checkpoints.
pub fn train<T: Scalar>(
    network: &mut Network<T>,
    images: &[TrainImage],
    config: &TrainConfig,
    input_scale: f64,
    mut on_step: impl FnMut(&LogRow, &Network<T>) -> Result<()>,
) -> Result<TrainLog> {
    config.validate()?;
    if images.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let (mean, std) = regression_statistics(images, &config.sampler);
    network.set_bbox_normalization(mean, std);
    log::info!("box target mean {mean:?} std {std:?}");
    if config.estimate_input_norm {
        let n = InputNorm::estimate(images.iter().map(|i| &i.image));
        network.set_input_normalization(n.mean, n.std);
        log::info!("input plane mean {:?} std {:?}", n.mean, n.std);
    }
    let norm = InputNorm::of(network);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::<T>::new(config.sgd.clone())?;
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut cursor = order.len();
    let mut rows = Vec::with_capacity(config.iterations as usize);

    for it in 0..config.iterations {
        let mut inputs = Vec::with_capacity(config.images_per_batch);
        let mut rois: Vec<Vec<BBox>> = Vec::with_capacity(config.images_per_batch);
        let mut labels = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..config.images_per_batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let img = &images[order[cursor]];
            cursor += 1;
            let flip = config.flip && rng.gen_bool(0.5);
            let tensor = image_tensor::<T>(&img.image, input_scale, flip, &norm)?;
            let input_width = tensor.dim(3);
            let samples = sample_rois(&img.proposals, &img.gts, &config.sampler, &mut rng)?;
            rois.push(
                samples
                    .iter()
                    .map(|s| to_input_frame(&s.roi, input_scale, flip, input_width))
                    .collect(),
            );
            for s in &samples {
                labels.push(s.label);
                targets.push(s.target.map(|mut t| {
                    if flip {
                        t.tx = -t.tx;
                    }
                    normalize_target(&t, &mean, &std)
                }));
            }
            inputs.push(tensor);
        }
        let batch: Vec<_> = inputs.iter().zip(&rois).map(|(t, r)| (t, r.as_slice())).collect();
        let fwd = network.forward_train(&batch, &mut rng).map_err(|e| match e {
            Error::Numerical(m) => diagnostic(network, it, &m),
            other => other,
        })?;
        let loss = batch_loss(&fwd.cls_logits, &fwd.bbox_deltas, &labels, &targets, config.lambda)?;
        if !loss.total.is_finite() {
            return Err(diagnostic(network, it, "non-finite loss"));
        }
        network.backward(fwd, &loss.cls_grad, loss.bbox_grad.as_ref())?;
        let lr = {
            let mut params = network.params_with_grad();
            sgd.step(params.iter_mut().map(|(n, t)| (n.as_str(), &mut **t)), it)?
        };
        network.zero_grad();
        let row = LogRow {
            iteration: it + 1,
            l_cls: loss.l_cls,
            l_bbox: loss.l_bbox,
            lr,
        };
        rows.push(row);
        on_step(&row, network)?;
    }
    Ok(TrainLog {
        rows,
        bbox_mean: mean,
        bbox_std: std,
    })
}
