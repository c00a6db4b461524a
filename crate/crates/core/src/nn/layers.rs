//! Layer tables: the architecture description a [`Network`](super::Network) is
//! built from, plus its plain-text form.
//!
//! One row per layer, whitespace separated, `-` for an empty cell:
//!
//! ```text
//! # name   kind     in     out   kernel stride pad act   dropout
//! conv1    conv     3      96    7x7    2      0   relu  -
//! norm1    lrn      96     96    -      -      -   -     -
//! pool1    maxpool  96     96    3x3    2      -   -     -
//! ...
//! roipool  roipool  512    512   6x6    -      -   -     -
//! fc6      fc       18432  4096  -      -      -   relu  0.5
//! ```
//!
//! The last two `fc` rows are the classification and box-regression heads and
//! both read the output of the row before them.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::lrn::LrnParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Lrn,
    MaxPool,
    Relu,
    Fc,
    Dropout,
    RoiPool,
    Softmax,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::Lrn => "lrn",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Relu => "relu",
            LayerKind::Fc => "fc",
            LayerKind::Dropout => "dropout",
            LayerKind::RoiPool => "roipool",
            LayerKind::Softmax => "softmax",
        }
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "conv" => LayerKind::Conv,
            "lrn" => LayerKind::Lrn,
            "maxpool" | "max-pool" | "pool" => LayerKind::MaxPool,
            "relu" => LayerKind::Relu,
            "fc" => LayerKind::Fc,
            "dropout" => LayerKind::Dropout,
            "roipool" | "roi-pool" => LayerKind::RoiPool,
            "softmax" => LayerKind::Softmax,
            other => return Err(Error::Config(format!("unknown layer kind {other:?}"))),
        })
    }
}

/// One row of a layer table.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub pad: usize,
    /// ReLU applied to this layer's output (the table's activation column).
    pub relu: bool,
    /// Dropout applied after the activation, training only.
    pub dropout: Option<f64>,
    pub lrn: Option<LrnParams>,
}

impl LayerSpec {
    fn new(name: &str, kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            name: name.to_string(),
            kind,
            in_channels,
            out_channels,
            kernel: (1, 1),
            stride: 1,
            pad: 0,
            relu: false,
            dropout: None,
            lrn: None,
        }
    }

    pub fn conv(name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec {
            kernel: (kernel, kernel),
            stride,
            pad,
            relu: true,
            ..Self::new(name, LayerKind::Conv, cin, cout)
        }
    }

    pub fn lrn(name: &str, channels: usize) -> Self {
        LayerSpec {
            lrn: Some(LrnParams::default()),
            ..Self::new(name, LayerKind::Lrn, channels, channels)
        }
    }

    pub fn maxpool(name: &str, channels: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kernel: (kernel, kernel),
            stride,
            ..Self::new(name, LayerKind::MaxPool, channels, channels)
        }
    }

    pub fn roipool(name: &str, channels: usize, bins: usize) -> Self {
        LayerSpec {
            kernel: (bins, bins),
            ..Self::new(name, LayerKind::RoiPool, channels, channels)
        }
    }

    pub fn fc(name: &str, cin: usize, cout: usize) -> Self {
        Self::new(name, LayerKind::Fc, cin, cout)
    }

    pub fn with_relu(mut self) -> Self {
        self.relu = true;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = Some(rate);
        self
    }
}

/// Ordered list of layer rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTable {
    pub layers: Vec<LayerSpec>,
}

impl LayerTable {
    /// The full-size VGG-M backbone with ROI pooling and two heads.
    ///
    /// The ROI pooling row carries the conv5 channel count and a 6x6 grid, so
    /// FC6 consumes `512 * 6 * 6 = 18432` features.
    pub fn vggm() -> Self {
        Self::vggm_shaped([96, 256, 512, 512, 512], 4096, 1024)
    }

    /// Same layer sequence, kernels and strides as [`LayerTable::vggm`] with
    /// narrow widths, sized for CPU training on small synthetic images.
    pub fn desk() -> Self {
        Self::vggm_shaped([16, 32, 48, 48, 48], 256, 128)
    }

    /// VGG-M layer sequence with configurable widths.
    pub fn vggm_shaped(conv: [usize; 5], fc6: usize, fc7: usize) -> Self {
        let bins = 6;
        LayerTable {
            layers: vec![
                LayerSpec::conv("conv1", 3, conv[0], 7, 2, 0),
                LayerSpec::lrn("norm1", conv[0]),
                LayerSpec::maxpool("pool1", conv[0], 3, 2),
                LayerSpec::conv("conv2", conv[0], conv[1], 5, 2, 1),
                LayerSpec::lrn("norm2", conv[1]),
                LayerSpec::maxpool("pool2", conv[1], 3, 2),
                LayerSpec::conv("conv3", conv[1], conv[2], 3, 1, 1),
                LayerSpec::conv("conv4", conv[2], conv[3], 3, 1, 1),
                LayerSpec::conv("conv5", conv[3], conv[4], 3, 1, 1),
                LayerSpec::roipool("roipool", conv[4], bins),
                LayerSpec::fc("fc6", conv[4] * bins * bins, fc6)
                    .with_relu()
                    .with_dropout(0.5),
                LayerSpec::fc("fc7", fc6, fc7).with_relu().with_dropout(0.5),
                LayerSpec::fc("cls", fc7, 2),
                LayerSpec::fc("bbox", fc7, 8),
            ],
        }
    }

    pub fn get(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 9 {
                return Err(Error::Config(format!(
                    "layer table line {}: expected 9 columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let at = |what: &str| format!("layer table line {} ({what})", lineno + 1);
            let kind: LayerKind = cols[1].parse()?;
            let count = |s: &str, what: &str| -> Result<usize> {
                if s == "-" {
                    return Ok(0);
                }
                s.parse().map_err(|_| Error::Config(format!("{}: bad number {s:?}", at(what))))
            };
            let kernel = if cols[4] == "-" {
                (1, 1)
            } else {
                let (h, w) = cols[4]
                    .split_once(['x', 'X', '*'])
                    .ok_or_else(|| Error::Config(format!("{}: kernel must look like 3x3", at("kernel"))))?;
                (count(h, "kernel")?, count(w, "kernel")?)
            };
            let relu = match cols[7] {
                "-" => false,
                "relu" => true,
                other => return Err(Error::Config(format!("{}: unknown activation {other:?}", at("act")))),
            };
            let dropout = match cols[8] {
                "-" => None,
                s => Some(s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: bad dropout rate {s:?}", at("dropout")))
                })?),
            };
            let stride = if cols[5] == "-" { 1 } else { count(cols[5], "stride")? };
            layers.push(LayerSpec {
                name: cols[0].to_string(),
                kind,
                in_channels: count(cols[2], "in")?,
                out_channels: count(cols[3], "out")?,
                kernel,
                stride,
                pad: count(cols[6], "pad")?,
                relu,
                dropout,
                lrn: (kind == LayerKind::Lrn).then(LrnParams::default),
            });
        }
        Ok(LayerTable { layers })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# name kind in out kernel stride pad act dropout\n");
        for l in &self.layers {
            let has_kernel = matches!(l.kind, LayerKind::Conv | LayerKind::MaxPool | LayerKind::RoiPool);
            let has_stride = matches!(l.kind, LayerKind::Conv | LayerKind::MaxPool);
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {} {}",
                l.name,
                l.kind.as_str(),
                l.in_channels,
                l.out_channels,
                if has_kernel { format!("{}x{}", l.kernel.0, l.kernel.1) } else { "-".into() },
                if has_stride { l.stride.to_string() } else { "-".into() },
                if l.kind == LayerKind::Conv { l.pad.to_string() } else { "-".into() },
                if l.relu { "relu" } else { "-" },
                l.dropout.map_or("-".to_string(), |d| d.to_string()),
            );
        }
        out
    }
}
