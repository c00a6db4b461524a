//! The detection network: a convolutional feature extractor, ROI pooling and
//! a fully connected trunk feeding a classification and a box-regression head.

use rand::Rng;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::nn::activation::{dropout_backward, dropout_forward, relu_backward, relu_forward, softmax};
use crate::nn::conv::{conv2d_backward, conv2d_forward, output_size};
use crate::nn::fc::{fc_backward, fc_forward};
use crate::nn::layers::{LayerKind, LayerSpec, LayerTable};
use crate::nn::lrn::{lrn_backward, lrn_forward, LrnParams};
use crate::nn::pool::{maxpool_backward, maxpool_forward, roi_pool_backward, roi_pool_forward, RoiPoolSpec};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Weight initialisation used when no weights file is loaded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightInit {
    /// `N(0, std)` for every weight, zero biases.
    Gaussian { std: f64 },
    /// `N(0, 2 / fan_in)` for conv and hidden FC layers; the heads use
    /// `N(0, 0.01)` (classifier) and `N(0, 0.001)` (box regressor).
    He,
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit::Gaussian { std: 0.01 }
    }
}

#[derive(Debug, Clone)]
enum Stage<T> {
    Conv {
        name: String,
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: usize,
        pad: usize,
        relu: bool,
    },
    Relu {
        name: String,
    },
    Lrn {
        name: String,
        params: LrnParams,
    },
    MaxPool {
        name: String,
        kernel: usize,
        stride: usize,
    },
}

impl<T> Stage<T> {
    fn name(&self) -> &str {
        match self {
            Stage::Conv { name, .. }
            | Stage::Relu { name }
            | Stage::Lrn { name, .. }
            | Stage::MaxPool { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Dense<T> {
    name: String,
    weight: Tensor<T>,
    bias: Tensor<T>,
    relu: bool,
    dropout: Option<f64>,
}

#[derive(Debug)]
enum StageCache<T> {
    Conv { input: Tensor<T>, output: Option<Tensor<T>> },
    Relu { output: Tensor<T> },
    Lrn { input: Tensor<T>, output: Tensor<T>, scale: Tensor<T> },
    MaxPool { input_shape: Vec<usize>, argmax: Vec<usize> },
}

#[derive(Debug)]
struct DenseCache<T> {
    input: Tensor<T>,
    output: Option<Tensor<T>>,
    mask: Option<Vec<T>>,
}

#[derive(Debug)]
struct ImageTape<T> {
    stages: Vec<StageCache<T>>,
    feature_shape: Vec<usize>,
    argmax: Vec<usize>,
    rois: usize,
}

/// Saved state of a training forward pass over a minibatch of images.
#[derive(Debug)]
pub struct TrainForward<T> {
    images: Vec<ImageTape<T>>,
    hidden: Vec<DenseCache<T>>,
    trunk_output: Tensor<T>,
    /// Classification logits, `R x 2`.
    pub cls_logits: Tensor<T>,
    /// Box deltas, `R x 8` (four per class).
    pub bbox_deltas: Tensor<T>,
}

/// Feature extractor plus ROI heads, generic over the element type.
#[derive(Debug, Clone)]
pub struct Network<T> {
    table: LayerTable,
    stages: Vec<Stage<T>>,
    roi: RoiPoolSpec,
    hidden: Vec<Dense<T>>,
    cls: Dense<T>,
    bbox: Dense<T>,
    bbox_mean: Tensor<T>,
    bbox_std: Tensor<T>,
    input_mean: Tensor<T>,
    input_std: Tensor<T>,
}

fn chain_error(prev: &LayerSpec, next: &LayerSpec, detail: String) -> Error {
    Error::Config(format!(
        "layers {} -> {} are inconsistent: {detail}",
        prev.name, next.name
    ))
}

fn init_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    Tensor::randn(shape, std, rng)
}

impl<T: Scalar> Network<T> {
    /// Builds a network from a layer table, validating that consecutive rows
    /// agree on channel counts.
    pub fn build<R: Rng + ?Sized>(table: &LayerTable, init: WeightInit, rng: &mut R) -> Result<Self> {
        let layers = &table.layers;
        if layers.is_empty() {
            return Err(Error::Config("layer table is empty".into()));
        }
        let roi_at = layers
            .iter()
            .position(|l| l.kind == LayerKind::RoiPool)
            .ok_or_else(|| Error::Config("layer table has no roipool layer".into()))?;
        if roi_at == 0 {
            return Err(Error::Config("roipool needs a feature extractor before it".into()));
        }

        let std_for = |fan_in: usize, head: Option<f64>| match init {
            WeightInit::Gaussian { std } => std,
            WeightInit::He => head.unwrap_or((2.0 / fan_in as f64).sqrt()),
        };

        let mut stages = Vec::new();
        let mut channels = layers[0].in_channels;
        let mut stride_product = 1usize;
        let mut prev: Option<&LayerSpec> = None;
        for l in &layers[..roi_at] {
            if l.in_channels != channels {
                let p = prev.unwrap_or(l);
                return Err(chain_error(
                    p,
                    l,
                    format!("{} expects {} input channels, previous layer gives {channels}", l.name, l.in_channels),
                ));
            }
            match l.kind {
                LayerKind::Conv => {
                    let (kh, kw) = l.kernel;
                    if l.stride == 0 || kh == 0 || kw == 0 {
                        return Err(Error::Config(format!("layer {}: zero kernel or stride", l.name)));
                    }
                    let fan_in = l.in_channels * kh * kw;
                    stages.push(Stage::Conv {
                        name: l.name.clone(),
                        weight: init_tensor(&[l.out_channels, l.in_channels, kh, kw], std_for(fan_in, None), rng),
                        bias: Tensor::zeros(&[l.out_channels]).with_requires_grad(true),
                        stride: l.stride,
                        pad: l.pad,
                        relu: l.relu,
                    });
                    channels = l.out_channels;
                    stride_product *= l.stride;
                }
                LayerKind::Lrn => {
                    if l.out_channels != l.in_channels {
                        return Err(Error::Config(format!("layer {}: LRN cannot change channel count", l.name)));
                    }
                    let params = l.lrn.unwrap_or_default();
                    if params.local_size < 1 {
                        return Err(Error::Config(format!("layer {}: LRN local_size must be >= 1", l.name)));
                    }
                    stages.push(Stage::Lrn {
                        name: l.name.clone(),
                        params,
                    });
                }
                LayerKind::MaxPool => {
                    if l.out_channels != l.in_channels || l.kernel.0 != l.kernel.1 || l.stride == 0 {
                        return Err(Error::Config(format!(
                            "layer {}: max-pool must keep channels and use a square window",
                            l.name
                        )));
                    }
                    stages.push(Stage::MaxPool {
                        name: l.name.clone(),
                        kernel: l.kernel.0,
                        stride: l.stride,
                    });
                    stride_product *= l.stride;
                }
                LayerKind::Relu => stages.push(Stage::Relu { name: l.name.clone() }),
                other => {
                    return Err(Error::Config(format!(
                        "layer {}: {} is not allowed in the feature extractor",
                        l.name,
                        other.as_str()
                    )))
                }
            }
            prev = Some(l);
        }

        let roi_layer = &layers[roi_at];
        if roi_layer.in_channels != channels {
            return Err(chain_error(
                prev.expect("roi_at > 0"),
                roi_layer,
                format!("roipool expects {} channels, feature map has {channels}", roi_layer.in_channels),
            ));
        }
        let roi = RoiPoolSpec {
            bins_h: roi_layer.kernel.0,
            bins_w: roi_layer.kernel.1,
            spatial_scale: 1.0 / stride_product as f64,
        };
        roi.validate()?;

        let fcs: Vec<&LayerSpec> = layers[roi_at + 1..]
            .iter()
            .filter(|l| l.kind != LayerKind::Softmax)
            .collect();
        if let Some(bad) = fcs.iter().find(|l| l.kind != LayerKind::Fc) {
            return Err(Error::Config(format!(
                "layer {}: only fc layers may follow roipool (activation and dropout are columns)",
                bad.name
            )));
        }
        if fcs.len() < 2 {
            return Err(Error::Config("need classification and box-regression fc heads after roipool".into()));
        }
        let (trunk, heads) = fcs.split_at(fcs.len() - 2);
        let mut width = channels * roi.bins_h * roi.bins_w;
        let mut prev = roi_layer;
        let mut hidden = Vec::new();
        for l in trunk {
            if l.in_channels != width {
                return Err(chain_error(prev, l, format!("{} expects {} inputs, gets {width}", l.name, l.in_channels)));
            }
            if let Some(rate) = l.dropout {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("layer {}: dropout rate {rate} outside [0, 1)", l.name)));
                }
            }
            hidden.push(Dense {
                name: l.name.clone(),
                weight: init_tensor(&[l.out_channels, l.in_channels], std_for(l.in_channels, None), rng),
                bias: Tensor::zeros(&[l.out_channels]).with_requires_grad(true),
                relu: l.relu,
                dropout: l.dropout,
            });
            width = l.out_channels;
            prev = l;
        }
        let (cls_spec, bbox_spec) = (heads[0], heads[1]);
        for h in [cls_spec, bbox_spec] {
            if h.in_channels != width {
                return Err(chain_error(prev, h, format!("{} expects {} inputs, gets {width}", h.name, h.in_channels)));
            }
        }
        if cls_spec.out_channels < 2 {
            return Err(Error::Config(format!("layer {}: classifier needs at least 2 outputs", cls_spec.name)));
        }
        if bbox_spec.out_channels != 4 * cls_spec.out_channels {
            return Err(Error::Config(format!(
                "layer {}: box head needs 4 outputs per class ({}), has {}",
                bbox_spec.name,
                4 * cls_spec.out_channels,
                bbox_spec.out_channels
            )));
        }
        let head = |l: &LayerSpec, std: f64, rng: &mut R| Dense {
            name: l.name.clone(),
            weight: init_tensor(&[l.out_channels, l.in_channels], std_for(l.in_channels, Some(std)), rng),
            bias: Tensor::zeros(&[l.out_channels]).with_requires_grad(true),
            relu: false,
            dropout: None,
        };
        let cls = head(cls_spec, 0.01, rng);
        let bbox = head(bbox_spec, 0.001, rng);

        Ok(Network {
            table: table.clone(),
            stages,
            roi,
            hidden,
            cls,
            bbox,
            bbox_mean: Tensor::zeros(&[4]),
            bbox_std: Tensor::full(&[4], T::one()),
            input_mean: Tensor::full(&[3], T::from_f64_lossy(127.5)),
            input_std: Tensor::full(&[3], T::from_f64_lossy(127.5)),
        })
    }

    pub fn table(&self) -> &LayerTable {
        &self.table
    }

    pub fn roi_spec(&self) -> &RoiPoolSpec {
        &self.roi
    }

    pub fn num_classes(&self) -> usize {
        self.cls.weight.dim(0)
    }

    /// Channels of the final feature map.
    pub fn feature_channels(&self) -> usize {
        self.roi_input_channels()
    }

    fn roi_input_channels(&self) -> usize {
        self.stages
            .iter()
            .rev()
            .find_map(|s| match s {
                Stage::Conv { weight, .. } => Some(weight.dim(0)),
                _ => None,
            })
            .unwrap_or(3)
    }

    pub fn cls_outputs(&self) -> usize {
        self.cls.weight.dim(0)
    }

    pub fn bbox_outputs(&self) -> usize {
        self.bbox.weight.dim(0)
    }

    /// Spatial size of the final feature map for an `h x w` input, or `None`
    /// when the input is too small for some layer.
    pub fn feature_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (mut h, mut w) = (h, w);
        for s in &self.stages {
            match s {
                Stage::Conv { weight, stride, pad, .. } => {
                    h = output_size(h, weight.dim(2), *stride, *pad)?;
                    w = output_size(w, weight.dim(3), *stride, *pad)?;
                }
                Stage::MaxPool { kernel, stride, .. } => {
                    h = output_size(h, *kernel, *stride, 0)?;
                    w = output_size(w, *kernel, *stride, 0)?;
                }
                _ => {}
            }
        }
        Some((h, w))
    }

    /// Per-coordinate mean and std used to normalise box-regression targets.
    pub fn bbox_normalization(&self) -> ([f64; 4], [f64; 4]) {
        let f = |t: &Tensor<T>| std::array::from_fn(|i| t.data()[i].to_f64_lossy());
        (f(&self.bbox_mean), f(&self.bbox_std))
    }

    pub fn set_bbox_normalization(&mut self, mean: [f64; 4], std: [f64; 4]) {
        for i in 0..4 {
            self.bbox_mean.data_mut()[i] = T::from_f64_lossy(mean[i]);
            self.bbox_std.data_mut()[i] = T::from_f64_lossy(std[i]);
        }
    }

    /// Per-plane (B, G, R) mean and std subtracted from and dividing raw
    /// pixel values before the first layer. Defaults map `[0, 255]` to `[-1, 1]`.
    pub fn input_normalization(&self) -> ([f64; 3], [f64; 3]) {
        let f = |t: &Tensor<T>| std::array::from_fn(|i| t.data()[i].to_f64_lossy());
        (f(&self.input_mean), f(&self.input_std))
    }

    pub fn set_input_normalization(&mut self, mean: [f64; 3], std: [f64; 3]) {
        for i in 0..3 {
            self.input_mean.data_mut()[i] = T::from_f64_lossy(mean[i]);
            self.input_std.data_mut()[i] = T::from_f64_lossy(std[i]);
        }
    }

    fn run_stages(&self, image: &Tensor<T>, stop_after: Option<&str>, mut tape: Option<&mut Vec<StageCache<T>>>) -> Result<Tensor<T>> {
        if image.shape().len() != 4 || image.dim(1) != self.table.layers[0].in_channels {
            return Err(Error::Config(format!(
                "network expects N x {} x H x W input, got {:?}",
                self.table.layers[0].in_channels,
                image.shape()
            )));
        }
        let mut x = image.clone();
        for stage in &self.stages {
            let (y, cache) = match stage {
                Stage::Conv { name, weight, bias, stride, pad, relu } => {
                    let z = conv2d_forward(name, &x, weight, bias, *stride, *pad)?;
                    if *relu {
                        let y = relu_forward(&z);
                        let out = tape.is_some().then(|| y.clone());
                        (y, StageCache::Conv { input: x, output: out })
                    } else {
                        (z, StageCache::Conv { input: x, output: None })
                    }
                }
                Stage::Relu { .. } => {
                    let y = relu_forward(&x);
                    let out = if tape.is_some() { y.clone() } else { Tensor::zeros(&[0]) };
                    (y, StageCache::Relu { output: out })
                }
                Stage::Lrn { params, .. } => {
                    let (y, scale) = lrn_forward(&x, params)?;
                    let out = if tape.is_some() { y.clone() } else { Tensor::zeros(&[0]) };
                    (y, StageCache::Lrn { input: x, output: out, scale })
                }
                Stage::MaxPool { name, kernel, stride } => {
                    let (y, argmax) = maxpool_forward(&x, *kernel, *stride)
                        .map_err(|e| Error::Config(format!("layer {name}: {e}")))?;
                    (y, StageCache::MaxPool { input_shape: x.shape().to_vec(), argmax })
                }
            };
            if let Some(t) = tape.as_mut() {
                t.push(cache);
            }
            x = y;
            if stop_after == Some(stage.name()) {
                break;
            }
        }
        Ok(x)
    }

    /// Runs the convolutional feature extractor on a `1 x C x H x W` image.
    pub fn feature_extractor(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.run_stages(image, None, None)?;
        out.ensure_finite("feature extractor output")?;
        Ok(out)
    }

    /// Activations after the named feature-extractor layer.
    pub fn activations(&self, image: &Tensor<T>, layer: &str) -> Result<Tensor<T>> {
        if !self.stages.iter().any(|s| s.name() == layer) {
            return Err(Error::Config(format!("unknown feature-extractor layer {layer:?}")));
        }
        self.run_stages(image, Some(layer), None)
    }

    pub fn roi_pool(&self, features: &Tensor<T>, rois: &[BBox]) -> Result<Tensor<T>> {
        Ok(roi_pool_forward(features, rois, &self.roi)?.0)
    }

    fn trunk(&self, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = pooled.clone();
        for d in &self.hidden {
            x = fc_forward(&d.name, &x, &d.weight, &d.bias)?;
            if d.relu {
                x = relu_forward(&x);
            }
        }
        Ok(x)
    }

    /// Inference heads: class probabilities `R x K` and box deltas `R x 4K`
    /// (still in normalised target units).
    pub fn heads(&self, pooled: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let x = self.trunk(pooled)?;
        let logits = fc_forward(&self.cls.name, &x, &self.cls.weight, &self.cls.bias)?;
        let deltas = fc_forward(&self.bbox.name, &x, &self.bbox.weight, &self.bbox.bias)?;
        let probs = softmax(&logits);
        probs.ensure_finite("class probabilities")?;
        deltas.ensure_finite("box deltas")?;
        Ok((probs, deltas))
    }

    /// Training forward over several images, each with its own ROIs. The ROI
    /// rows of all images are concatenated in order for the heads.
    pub fn forward_train<R: Rng + ?Sized>(&self, batch: &[(&Tensor<T>, &[BBox])], rng: &mut R) -> Result<TrainForward<T>> {
        let mut images = Vec::with_capacity(batch.len());
        let mut pooled_rows: Vec<T> = Vec::new();
        let mut total = 0;
        let per_roi = self.roi_input_channels() * self.roi.bins_h * self.roi.bins_w;
        for (image, rois) in batch {
            let mut stages = Vec::with_capacity(self.stages.len());
            let features = self.run_stages(image, None, Some(&mut stages))?;
            features.ensure_finite("feature extractor output")?;
            let (pooled, argmax) = roi_pool_forward(&features, rois, &self.roi)?;
            pooled_rows.extend_from_slice(pooled.data());
            total += rois.len();
            images.push(ImageTape {
                stages,
                feature_shape: features.shape().to_vec(),
                argmax,
                rois: rois.len(),
            });
        }
        let mut x = Tensor::from_vec(&[total, per_roi], pooled_rows)?;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for d in &self.hidden {
            let z = fc_forward(&d.name, &x, &d.weight, &d.bias)?;
            let mut y = if d.relu { relu_forward(&z) } else { z };
            let output = d.relu.then(|| y.clone());
            let mut mask = None;
            if let Some(rate) = d.dropout {
                let (dropped, m) = dropout_forward(&y, rate, rng)?;
                y = dropped;
                mask = Some(m);
            }
            hidden.push(DenseCache { input: x, output, mask });
            x = y;
        }
        let cls_logits = fc_forward(&self.cls.name, &x, &self.cls.weight, &self.cls.bias)?;
        let bbox_deltas = fc_forward(&self.bbox.name, &x, &self.bbox.weight, &self.bbox.bias)?;
        cls_logits.ensure_finite("classification logits")?;
        bbox_deltas.ensure_finite("box deltas")?;
        Ok(TrainForward {
            images,
            hidden,
            trunk_output: x,
            cls_logits,
            bbox_deltas,
        })
    }

    /// Back-propagates head gradients and accumulates parameter gradients.
    ///
    /// Passing `None` for `bbox_grad` means the box head had no gradient path
    /// this step: its parameters receive no gradient at all.
    pub fn backward(&mut self, fwd: TrainForward<T>, cls_grad: &Tensor<T>, bbox_grad: Option<&Tensor<T>>) -> Result<()> {
        if cls_grad.shape() != fwd.cls_logits.shape() {
            return Err(Error::Internal("classification gradient shape mismatch".into()));
        }
        let g = fc_backward(&self.cls.name, cls_grad, &fwd.trunk_output, &self.cls.weight)?;
        self.cls.weight.accumulate_grad(g.weight.data());
        self.cls.bias.accumulate_grad(g.bias.data());
        let mut dx = g.input;
        if let Some(bg) = bbox_grad {
            if bg.shape() != fwd.bbox_deltas.shape() {
                return Err(Error::Internal("box gradient shape mismatch".into()));
            }
            let g = fc_backward(&self.bbox.name, bg, &fwd.trunk_output, &self.bbox.weight)?;
            self.bbox.weight.accumulate_grad(g.weight.data());
            self.bbox.bias.accumulate_grad(g.bias.data());
            dx.data_mut().iter_mut().zip(g.input.data()).for_each(|(a, b)| *a += *b);
        }
        for (d, cache) in self.hidden.iter_mut().zip(fwd.hidden).rev() {
            if let Some(mask) = &cache.mask {
                dx = dropout_backward(&dx, mask);
            }
            if let Some(out) = &cache.output {
                dx = relu_backward(&dx, out);
            }
            let g = fc_backward(&d.name, &dx, &cache.input, &d.weight)?;
            d.weight.accumulate_grad(g.weight.data());
            d.bias.accumulate_grad(g.bias.data());
            dx = g.input;
        }

        let per_roi = self.roi_input_channels() * self.roi.bins_h * self.roi.bins_w;
        let mut offset = 0;
        for tape in fwd.images {
            let rows = &dx.data()[offset * per_roi..(offset + tape.rois) * per_roi];
            offset += tape.rois;
            let pooled_grad = Tensor::from_vec(&[tape.rois, per_roi], rows.to_vec())?;
            let mut grad = roi_pool_backward(&pooled_grad, &tape.argmax, &tape.feature_shape)?;
            if tape.stages.len() != self.stages.len() {
                return Err(Error::Internal("forward tape does not match the network".into()));
            }
            for (i, (stage, cache)) in self.stages.iter_mut().zip(tape.stages).enumerate().rev() {
                grad = match (stage, cache) {
                    (Stage::Conv { name, weight, bias, stride, pad, relu }, StageCache::Conv { input, output }) => {
                        if *relu {
                            let out = output.ok_or_else(|| Error::Internal(format!("layer {name}: missing saved activation")))?;
                            grad = relu_backward(&grad, &out);
                        }
                        let g = conv2d_backward(name, &grad, &input, weight, *stride, *pad, i > 0)?;
                        weight.accumulate_grad(g.weight.data());
                        bias.accumulate_grad(g.bias.data());
                        match g.input {
                            Some(t) => t,
                            None => break,
                        }
                    }
                    (Stage::Relu { .. }, StageCache::Relu { output }) => relu_backward(&grad, &output),
                    (Stage::Lrn { params, .. }, StageCache::Lrn { input, output, scale }) => {
                        lrn_backward(&grad, &input, &output, &scale, params)?
                    }
                    (Stage::MaxPool { .. }, StageCache::MaxPool { input_shape, argmax }) => {
                        maxpool_backward(&grad, &argmax, &input_shape)?
                    }
                    (stage, _) => {
                        return Err(Error::Internal(format!("layer {}: saved forward state has the wrong kind", stage.name())))
                    }
                };
            }
        }
        Ok(())
    }

    /// Every named tensor, parameters and normalisation buffers alike, in a
    /// stable order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for s in &self.stages {
            if let Stage::Conv { name, weight, bias, .. } = s {
                out.push((format!("{name}.weight"), weight));
                out.push((format!("{name}.bias"), bias));
            }
        }
        for d in self.hidden.iter().chain([&self.cls, &self.bbox]) {
            out.push((format!("{}.weight", d.name), &d.weight));
            out.push((format!("{}.bias", d.name), &d.bias));
        }
        out.push(("bbox_norm.mean".into(), &self.bbox_mean));
        out.push(("bbox_norm.std".into(), &self.bbox_std));
        out.push(("input_norm.mean".into(), &self.input_mean));
        out.push(("input_norm.std".into(), &self.input_std));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            if let Stage::Conv { name, weight, bias, .. } = s {
                out.push((format!("{name}.weight"), weight));
                out.push((format!("{name}.bias"), bias));
            }
        }
        for d in self.hidden.iter_mut().chain([&mut self.cls, &mut self.bbox]) {
            out.push((format!("{}.weight", d.name), &mut d.weight));
            out.push((format!("{}.bias", d.name), &mut d.bias));
        }
        out.push(("bbox_norm.mean".into(), &mut self.bbox_mean));
        out.push(("bbox_norm.std".into(), &mut self.bbox_std));
        out.push(("input_norm.mean".into(), &mut self.input_mean));
        out.push(("input_norm.std".into(), &mut self.input_std));
        out
    }

    /// Trainable parameters that received a gradient in the last backward pass.
    pub fn params_with_grad(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.named_tensors_mut()
            .into_iter()
            .filter(|(_, t)| t.requires_grad() && t.grad().is_some())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for (_, t) in self.named_tensors_mut() {
            t.clear_grad();
        }
    }

    /// L2 norm of every named tensor, for diagnostics.
    pub fn layer_norms(&self) -> Vec<(String, f64)> {
        self.named_tensors().into_iter().map(|(n, t)| (n, t.l2_norm())).collect()
    }

    pub fn feature_layer_names(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.name()).collect()
    }
}
