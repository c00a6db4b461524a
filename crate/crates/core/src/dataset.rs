//! On-disk dataset layout and ingestion.
//!
//! ```text
//! <root>/manifest.txt                  one "<sequence> <train|test>" per line
//! <root>/<sequence>/visible/NNNNNN.png original-video frame index in the name
//! <root>/<sequence>/mwir/NNNNNN.png
//! <root>/<sequence>/gt.csv             frame_index,x,y,w,h,class
//! ```
//!
//! Visible and MWIR frames must already be registered and equal in size.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::bbox::{BBox, GroundTruthBox};
use crate::error::{Error, Result};
use crate::fusion::{fuse, motion_between, FusionMode, MotionImage};
use crate::image::{FusedImage, ImagePlane};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const GT_FILE: &str = "gt.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Input(format!("unknown split tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sequence: String,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(seq), Some(tag), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Input(format!("manifest line {}: expected '<sequence> <split>'", i + 1)));
            };
            entries.push(ManifestEntry {
                sequence: seq.to_string(),
                split: tag.parse()?,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} {}\n", e.sequence, e.split))
            .collect()
    }

    pub fn sequences(&self, split: Split) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(move |e| e.split == split)
            .map(|e| e.sequence.as_str())
    }
}

/// One sampled frame with its predecessor difference and ground truth.
#[derive(Debug, Clone)]
pub struct Sample {
    pub sequence: String,
    pub split: Split,
    pub frame_index: usize,
    pub visible: ImagePlane,
    pub mwir: ImagePlane,
    pub motion: MotionImage,
    pub gts: Vec<GroundTruthBox>,
}

impl Sample {
    pub fn image_id(&self) -> String {
        image_id(&self.sequence, self.frame_index)
    }

    pub fn fused(&self, mode: FusionMode) -> Result<FusedImage> {
        fuse(
            Some(&self.visible),
            Some(&self.mwir),
            Some(&self.motion.base),
            mode,
            self.frame_index,
        )
    }

    pub fn dims(&self) -> (usize, usize) {
        self.visible.dims()
    }
}

pub fn image_id(sequence: &str, frame_index: usize) -> String {
    format!("{sequence}/{frame_index:06}")
}

pub fn frame_file_name(frame_index: usize) -> String {
    format!("{frame_index:06}.png")
}

/// Frame index -> path for every `NNNNNN.png` in `dir`.
fn list_frames(dir: &Path) -> Result<BTreeMap<usize, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let index: usize = stem
            .parse()
            .map_err(|_| Error::Input(format!("frame file name is not an index: {}", path.display())))?;
        out.insert(index, path);
    }
    Ok(out)
}

/// Parses `frame_index,x,y,w,h,class` rows; a header row is allowed. A
/// non-numeric class name maps to class 1 (the single target class).
pub fn parse_gt_csv(text: &str, sequence: &str, path: &Path) -> Result<BTreeMap<usize, Vec<GroundTruthBox>>> {
    let mut out: BTreeMap<usize, Vec<GroundTruthBox>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("frame")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Input(format!("{} line {}: expected frame_index,x,y,w,h,class", path.display(), i + 1));
        if cols.len() != 6 {
            return Err(bad());
        }
        let frame: usize = cols[0].parse().map_err(|_| bad())?;
        let nums: Vec<f64> = cols[1..5]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3]);
        if !bbox.is_valid() {
            return Err(Error::Input(format!("{} line {}: box has no area", path.display(), i + 1)));
        }
        let class_id = cols[5].parse::<u32>().unwrap_or(1);
        out.entry(frame).or_default().push(GroundTruthBox {
            bbox,
            class_id,
            image_id: image_id(sequence, frame),
        });
    }
    Ok(out)
}

pub fn gt_csv(rows: &[(usize, BBox, u32)]) -> String {
    let mut s = String::from("frame_index,x,y,w,h,class\n");
    for (frame, b, class) in rows {
        s.push_str(&format!("{frame},{},{},{},{},{class}\n", b.x, b.y, b.w, b.h));
    }
    s
}

/// Loads one sequence directory. Frames are sampled every `frame_stride`
/// original frames starting at the first one; the first sampled frame has no
/// predecessor and yields no sample.
pub fn load_sequence(root: &Path, sequence: &str, split: Split, frame_stride: usize) -> Result<Vec<Sample>> {
    if frame_stride == 0 {
        return Err(Error::Config("frame stride must be at least 1".into()));
    }
    let dir = root.join(sequence);
    let visible = list_frames(&dir.join("visible"))?;
    let mwir = list_frames(&dir.join("mwir"))?;
    if visible.len() != mwir.len() || !visible.keys().eq(mwir.keys()) {
        return Err(Error::Input(format!(
            "sequence {sequence}: {} visible frames but {} MWIR frames, or their indices differ",
            visible.len(),
            mwir.len()
        )));
    }
    let Some(&first) = visible.keys().next() else {
        return Ok(Vec::new());
    };
    let sampled: Vec<usize> = visible
        .keys()
        .copied()
        .filter(|i| (i - first) % frame_stride == 0)
        .collect();
    let gt_path = dir.join(GT_FILE);
    let gt_text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let gts = parse_gt_csv(&gt_text, sequence, &gt_path)?;

    let frames: Vec<(usize, ImagePlane, ImagePlane)> = sampled
        .par_iter()
        .map(|&i| {
            let v = ImagePlane::load_png(&visible[&i])?;
            let m = ImagePlane::load_png(&mwir[&i])?;
            if v.dims() != m.dims() {
                return Err(Error::Input(format!(
                    "sequence {sequence} frame {i}: visible {:?} and MWIR {:?} differ in size",
                    v.dims(),
                    m.dims()
                )));
            }
            Ok((i, v, m))
        })
        .collect::<Result<_>>()?;

    frames
        .windows(2)
        .map(|pair| {
            let (prev_i, prev_v, _) = &pair[0];
            let (i, v, m) = &pair[1];
            Ok(Sample {
                sequence: sequence.to_string(),
                split,
                frame_index: *i,
                visible: v.clone(),
                mwir: m.clone(),
                motion: motion_between(v, *i, prev_v, *prev_i)?,
                gts: gts.get(i).cloned().unwrap_or_default(),
            })
        })
        .collect()
}

/// Ground truth of every sample image in `split`, keyed by image id, without
/// decoding any frame. Sampled images with no boxes map to an empty list.
pub fn load_ground_truth(
    root: &Path,
    manifest: &Manifest,
    split: Split,
    frame_stride: usize,
) -> Result<BTreeMap<String, Vec<GroundTruthBox>>> {
    if frame_stride == 0 {
        return Err(Error::Config("frame stride must be at least 1".into()));
    }
    let mut out = BTreeMap::new();
    for sequence in manifest.sequences(split) {
        let dir = root.join(sequence);
        let frames = list_frames(&dir.join("visible"))?;
        let gt_path = dir.join(GT_FILE);
        let gt_text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        let mut gts = parse_gt_csv(&gt_text, sequence, &gt_path)?;
        let Some(&first) = frames.keys().next() else {
            continue;
        };
        for &i in frames.keys().filter(|&&i| i != first && (i - first) % frame_stride == 0) {
            out.insert(image_id(sequence, i), gts.remove(&i).unwrap_or_default());
        }
    }
    Ok(out)
}

/// Every sample of every manifest sequence, in manifest order.
pub fn ingest_dataset(root: &Path, manifest: &Manifest, frame_stride: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for entry in &manifest.entries {
        out.extend(load_sequence(root, &entry.sequence, entry.split, frame_stride)?);
    }
    Ok(out)
}

/// Writes one sequence in the dataset layout.
pub fn write_sequence(
    root: &Path,
    sequence: &str,
    frames: &[(usize, &ImagePlane, &ImagePlane)],
    gts: &[(usize, BBox, u32)],
) -> Result<()> {
    let dir = root.join(sequence);
    for sub in ["visible", "mwir"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    frames.par_iter().try_for_each(|(i, v, m)| {
        v.save_png(&dir.join("visible").join(frame_file_name(*i)))?;
        m.save_png(&dir.join("mwir").join(frame_file_name(*i)))
    })?;
    let gt_path = dir.join(GT_FILE);
    fs::write(&gt_path, gt_csv(gts)).map_err(|e| Error::io(&gt_path, e))
}
