//! Frame differencing and channel-stacking fusion.
//!
//! The fused network input places the MWIR frame in the red plane, the motion
//! image in green and the visible frame in blue. Pixel values are copied, never
//! blended.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{FusedImage, ImagePlane};

/// Input configuration of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionMode {
    VisibleOnly,
    MwirOnly,
    MotionOnly,
    VisibleMwir,
    ThreeChannel,
    /// Late fusion of the three single-modality detectors. Evaluation only.
    DecisionLevel,
}

impl FusionMode {
    pub const ALL: [FusionMode; 6] = [
        FusionMode::VisibleOnly,
        FusionMode::MwirOnly,
        FusionMode::MotionOnly,
        FusionMode::VisibleMwir,
        FusionMode::ThreeChannel,
        FusionMode::DecisionLevel,
    ];

    /// Modes that produce pixels (everything except decision-level fusion).
    pub const PIXEL: [FusionMode; 5] = [
        FusionMode::VisibleOnly,
        FusionMode::MwirOnly,
        FusionMode::MotionOnly,
        FusionMode::VisibleMwir,
        FusionMode::ThreeChannel,
    ];

    /// Command-line spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::VisibleOnly => "visible",
            FusionMode::MwirOnly => "mwir",
            FusionMode::MotionOnly => "motion",
            FusionMode::VisibleMwir => "visible-mwir",
            FusionMode::ThreeChannel => "three-channel",
            FusionMode::DecisionLevel => "decision",
        }
    }

    /// Row label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            FusionMode::VisibleOnly => "Visible",
            FusionMode::MwirOnly => "MWIR",
            FusionMode::MotionOnly => "Motion",
            FusionMode::VisibleMwir => "Visible-MWIR",
            FusionMode::ThreeChannel => "3-Channels",
            FusionMode::DecisionLevel => "Decision-level Fusion",
        }
    }

    pub fn is_pixel_mode(self) -> bool {
        self != FusionMode::DecisionLevel
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "visible" | "visible-only" | "vi" => FusionMode::VisibleOnly,
            "mwir" | "mwir-only" => FusionMode::MwirOnly,
            "motion" | "motion-only" => FusionMode::MotionOnly,
            "visible-mwir" => FusionMode::VisibleMwir,
            "three-channel" | "three-channels" | "3-channels" => FusionMode::ThreeChannel,
            "decision" | "decision-level" => FusionMode::DecisionLevel,
            _ => return Err(Error::Config(format!("unknown fusion mode {s:?}"))),
        })
    }
}

/// Absolute frame difference plus the frame indices it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionImage {
    pub base: ImagePlane,
    pub from_frame: usize,
    pub to_frame: usize,
}

/// `|current - previous|` per pixel.
pub fn compute_motion(current: &ImagePlane, previous: &ImagePlane) -> Result<ImagePlane> {
    if current.dims() != previous.dims() {
        return Err(Error::Input(format!(
            "motion needs equal frame sizes, got {:?} and {:?}",
            current.dims(),
            previous.dims()
        )));
    }
    let values = current
        .values()
        .iter()
        .zip(previous.values())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    ImagePlane::new(current.width(), current.height(), values)
}

/// Motion image between two sampled frames with their indices recorded.
pub fn motion_between(
    current: &ImagePlane,
    current_index: usize,
    previous: &ImagePlane,
    previous_index: usize,
) -> Result<MotionImage> {
    Ok(MotionImage {
        base: compute_motion(current, previous)?,
        from_frame: previous_index,
        to_frame: current_index,
    })
}

/// Stacks the planes `mode` needs into a B, G, R image.
pub fn fuse(
    visible: Option<&ImagePlane>,
    mwir: Option<&ImagePlane>,
    motion: Option<&ImagePlane>,
    mode: FusionMode,
    source_frame_index: usize,
) -> Result<FusedImage> {
    let need = |plane: Option<&ImagePlane>, name: &str| {
        plane.cloned().ok_or_else(|| Error::Input(format!("{mode} fusion needs the {name} plane")))
    };
    let planes = match mode {
        FusionMode::VisibleOnly => {
            let v = need(visible, "visible")?;
            [v.clone(), v.clone(), v]
        }
        FusionMode::MwirOnly => {
            let m = need(mwir, "mwir")?;
            [m.clone(), m.clone(), m]
        }
        FusionMode::MotionOnly => {
            let m = need(motion, "motion")?;
            [m.clone(), m.clone(), m]
        }
        FusionMode::VisibleMwir => {
            let v = need(visible, "visible")?;
            let m = need(mwir, "mwir")?;
            [v.clone(), v, m]
        }
        FusionMode::ThreeChannel => [
            need(visible, "visible")?,
            need(motion, "motion")?,
            need(mwir, "mwir")?,
        ],
        FusionMode::DecisionLevel => {
            return Err(Error::Input(
                "decision-level fusion combines detector outputs and has no pixel form".into(),
            ))
        }
    };
    if planes.iter().any(|p| p.dims() != planes[0].dims()) {
        return Err(Error::Input(format!(
            "{mode} fusion needs equal plane sizes, got {:?}",
            planes.iter().map(|p| p.dims()).collect::<Vec<_>>()
        )));
    }
    Ok(FusedImage {
        planes,
        mode,
        source_frame_index,
    })
}
