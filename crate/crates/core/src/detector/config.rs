//! Training, detection and pipeline settings read from `key=value` files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::parse_entries;
use crate::detector::sampling::SamplerConfig;
use crate::error::{Error, Result};
use crate::nn::{LayerTable, SgdConfig, WeightInit};
use crate::proposals::SelectiveSearchConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub sgd: SgdConfig,
    /// Weight of the box-regression term.
    pub lambda: f64,
    pub images_per_batch: usize,
    pub sampler: SamplerConfig,
    /// Random horizontal flips of training images.
    pub flip: bool,
    /// Standardise each input plane with statistics of the training images
    /// instead of the fixed `[0, 255]` to `[-1, 1]` map.
    pub estimate_input_norm: bool,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 40_000,
            sgd: SgdConfig::default(),
            lambda: 1.0,
            images_per_batch: 2,
            sampler: SamplerConfig::default(),
            flip: true,
            estimate_input_norm: true,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        self.sampler.validate()?;
        if self.images_per_batch == 0 {
            return Err(Error::Config("images_per_batch must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda {} must be finite and non-negative", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    /// Detections must score strictly above this.
    pub score_threshold: f64,
    pub nms_iou: f64,
    /// Resize factor applied to the image before the network; boxes are
    /// mapped back to original pixels.
    pub input_scale: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            score_threshold: 0.05,
            nms_iou: 0.3,
            input_scale: 1.0,
        }
    }
}

impl DetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score_threshold) || !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::Config("score threshold and NMS IoU must lie in [0, 1]".into()));
        }
        if !(self.input_scale > 0.0) || !self.input_scale.is_finite() {
            return Err(Error::Config(format!("input scale {} must be positive", self.input_scale)));
        }
        Ok(())
    }
}

/// Network shape selection.
#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Vggm,
    Desk,
    File(PathBuf),
}

impl Architecture {
    pub fn table(&self) -> Result<LayerTable> {
        match self {
            Architecture::Vggm => Ok(LayerTable::vggm()),
            Architecture::Desk => Ok(LayerTable::desk()),
            Architecture::File(p) => LayerTable::load(p),
        }
    }

    fn as_text(&self) -> String {
        match self {
            Architecture::Vggm => "vggm".into(),
            Architecture::Desk => "desk".into(),
            Architecture::File(p) => p.display().to_string(),
        }
    }
}

/// Everything one run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    pub detect: DetectConfig,
    pub proposals: SelectiveSearchConfig,
    pub architecture: Architecture,
    pub init: WeightInit,
    /// Original-video frames between sampled frames.
    pub frame_stride: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            detect: DetectConfig::default(),
            proposals: SelectiveSearchConfig::default(),
            architecture: Architecture::Vggm,
            init: WeightInit::default(),
            frame_stride: 5,
        }
    }
}

fn parse_schedule(s: &str) -> Result<Vec<(u64, f64)>> {
    s.split(',')
        .map(|step| {
            let (it, lr) = step
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("schedule step {step:?} is not iteration:rate")))?;
            let it = it.trim().parse().map_err(|_| Error::Config(format!("bad schedule iteration {it:?}")))?;
            let lr = lr.trim().parse().map_err(|_| Error::Config(format!("bad schedule rate {lr:?}")))?;
            Ok((it, lr))
        })
        .collect()
}

impl PipelineConfig {
    /// Settings tuned for CPU training on the synthetic suites: the narrow
    /// network, He initialisation, a larger learning rate and background
    /// sampling down to zero overlap.
    pub fn desk() -> Self {
        let mut c = PipelineConfig {
            architecture: Architecture::Desk,
            init: WeightInit::He,
            ..Default::default()
        };
        c.train.iterations = 2000;
        c.train.sgd.learning_rate = 0.005;
        c.train.sgd.schedule = vec![(0, 0.005), (1500, 0.0005)];
        // background may come from anywhere, so static decoys far from the
        // target are seen as negatives
        c.train.sampler.bg_iou_range = (0.0, 0.5);
        c
    }

    /// Overrides defaults with the keys in `text`; unknown keys are errors.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for e in parse_entries(text)? {
            if e.section.is_some() {
                return Err(Error::Config(format!("line {}: sections are not used here", e.line)));
            }
            let t = &mut self.train;
            match e.key.as_str() {
                "iterations" => t.iterations = e.parse()?,
                "learning_rate" => t.sgd.learning_rate = e.parse()?,
                "lr_schedule" => t.sgd.schedule = parse_schedule(&e.value)?,
                "momentum" => t.sgd.momentum = e.parse()?,
                "weight_decay" => t.sgd.weight_decay = e.parse()?,
                "lambda" => t.lambda = e.parse()?,
                "images_per_batch" => t.images_per_batch = e.parse()?,
                "rois_per_image" => t.sampler.rois_per_image = e.parse()?,
                "fg_fraction" => t.sampler.fg_fraction = e.parse()?,
                "fg_iou_threshold" => t.sampler.fg_iou_threshold = e.parse()?,
                "bg_iou_range" => t.sampler.bg_iou_range = e.parse_range()?,
                "flip" => t.flip = e.parse()?,
                "estimate_input_norm" => t.estimate_input_norm = e.parse()?,
                "checkpoint_every" => t.checkpoint_every = e.parse()?,
                "seed" => t.seed = e.parse()?,
                "score_threshold" => self.detect.score_threshold = e.parse()?,
                "nms_iou" => self.detect.nms_iou = e.parse()?,
                "input_scale" => self.detect.input_scale = e.parse()?,
                "ss_sigma" => self.proposals.sigma = e.parse()?,
                "ss_k" => {
                    self.proposals.ks = e
                        .value
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| Error::Config(format!("line {}: bad k {v:?}", e.line))))
                        .collect::<Result<_>>()?
                }
                "ss_min_size" => self.proposals.min_size = e.parse()?,
                "architecture" => {
                    self.architecture = match e.value.as_str() {
                        "vggm" => Architecture::Vggm,
                        "desk" => Architecture::Desk,
                        path => Architecture::File(PathBuf::from(path)),
                    }
                }
                "init" => {
                    self.init = match e.value.as_str() {
                        "he" => WeightInit::He,
                        "gaussian" => WeightInit::default(),
                        other => {
                            let std = other
                                .strip_prefix("gaussian:")
                                .and_then(|s| s.parse().ok())
                                .ok_or_else(|| Error::Config(format!("line {}: bad init {other:?}", e.line)))?;
                            WeightInit::Gaussian { std }
                        }
                    }
                }
                "frame_stride" => self.frame_stride = e.parse()?,
                _ => return Err(e.unknown()),
            }
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = PipelineConfig::default();
        c.apply_text(&text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.detect.validate()?;
        self.proposals.validate()?;
        if self.frame_stride == 0 {
            return Err(Error::Config("frame_stride must be positive".into()));
        }
        Ok(())
    }

    /// Text form accepted by [`PipelineConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let schedule: Vec<String> = t.sgd.schedule.iter().map(|(i, lr)| format!("{i}:{lr}")).collect();
        let ks: Vec<String> = self.proposals.ks.iter().map(f64::to_string).collect();
        let init = match self.init {
            WeightInit::He => "he".to_string(),
            WeightInit::Gaussian { std } => format!("gaussian:{std}"),
        };
        [
            format!("iterations={}", t.iterations),
            format!("learning_rate={}", t.sgd.learning_rate),
            format!("lr_schedule={}", schedule.join(",")),
            format!("momentum={}", t.sgd.momentum),
            format!("weight_decay={}", t.sgd.weight_decay),
            format!("lambda={}", t.lambda),
            format!("images_per_batch={}", t.images_per_batch),
            format!("rois_per_image={}", t.sampler.rois_per_image),
            format!("fg_fraction={}", t.sampler.fg_fraction),
            format!("fg_iou_threshold={}", t.sampler.fg_iou_threshold),
            format!("bg_iou_range={}..{}", t.sampler.bg_iou_range.0, t.sampler.bg_iou_range.1),
            format!("flip={}", t.flip),
            format!("estimate_input_norm={}", t.estimate_input_norm),
            format!("checkpoint_every={}", t.checkpoint_every),
            format!("seed={}", t.seed),
            format!("score_threshold={}", self.detect.score_threshold),
            format!("nms_iou={}", self.detect.nms_iou),
            format!("input_scale={}", self.detect.input_scale),
            format!("ss_sigma={}", self.proposals.sigma),
            format!("ss_k={}", ks.join(",")),
            format!("ss_min_size={}", self.proposals.min_size),
            format!("architecture={}", self.architecture.as_text()),
            format!("init={init}"),
            format!("frame_stride={}", self.frame_stride),
        ]
        .join("\n")
            + "\n"
    }
}
