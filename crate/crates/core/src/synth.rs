//! Deterministic synthetic visible/MWIR sequences with exact ground truth.
//!
//! A static background is rendered once per sequence for each modality. One
//! textured rectangular target moves across it at constant velocity,
//! reflecting off the frame edges. In the visible plane the target is the
//! background shifted by `visible_contrast * 255`; in the MWIR plane it is
//! the background plus `thermal_contrast * 255`. Optional decoys are static
//! hot rectangles present only in MWIR. Every frame of both modalities gets
//! independent Gaussian pixel noise.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::bbox::{BBox, GroundTruthBox};
use crate::config::parse_entries;
use crate::dataset::{image_id, write_sequence, Manifest, ManifestEntry, Split, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::proposals::gaussian_blur;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundTexture {
    Flat,
    /// Static smooth random texture.
    Noise,
    /// Linear ramp plus low-frequency undulation.
    TerrainGradient,
}

impl BackgroundTexture {
    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundTexture::Flat => "flat",
            BackgroundTexture::Noise => "noise",
            BackgroundTexture::TerrainGradient => "terrain-gradient",
        }
    }
}

impl FromStr for BackgroundTexture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(BackgroundTexture::Flat),
            "noise" => Ok(BackgroundTexture::Noise),
            "terrain-gradient" | "terrain_gradient" => Ok(BackgroundTexture::TerrainGradient),
            _ => Err(Error::Config(format!("unknown background texture {s:?}"))),
        }
    }
}

/// Fully resolved parameters of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub background: BackgroundTexture,
    /// Standard deviation of the static background texture, in levels.
    pub texture_std: f64,
    /// Target width and height in pixels.
    pub target_size: (usize, usize),
    pub visible_contrast: f64,
    pub thermal_contrast: f64,
    /// Pixels per generated frame.
    pub velocity: (f64, f64),
    pub frames: usize,
    /// Original-video frame spacing between generated frames.
    pub frame_step: usize,
    pub noise_sigma: f64,
    pub decoys: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let (tw, th) = self.target_size;
        if tw == 0 || th == 0 || tw > self.width || th > self.height {
            return Err(Error::Input(format!(
                "target {tw}x{th} does not fit a {}x{} frame",
                self.width, self.height
            )));
        }
        for (name, c) in [("visible", self.visible_contrast), ("thermal", self.thermal_contrast)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Config(format!("{name} contrast {c} outside [0, 1]")));
            }
        }
        if self.frame_step == 0 || !(self.noise_sigma >= 0.0) || !(self.texture_std >= 0.0) {
            return Err(Error::Config("frame step must be positive and noise levels non-negative".into()));
        }
        if !self.velocity.0.is_finite() || !self.velocity.1.is_finite() {
            return Err(Error::Config("velocity must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    pub name: String,
    pub spec: SceneSpec,
    /// Original-video index of each generated frame.
    pub frame_indices: Vec<usize>,
    pub visible: Vec<ImagePlane>,
    pub mwir: Vec<ImagePlane>,
    pub gt: Vec<Vec<GroundTruthBox>>,
    /// Noise-free static backgrounds.
    pub visible_background: Vec<f64>,
    pub mwir_background: Vec<f64>,
    pub decoy_boxes: Vec<BBox>,
}

fn smooth_noise(rng: &mut ChaCha8Rng, w: usize, h: usize, blur: f64, std: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let raw: Vec<f64> = (0..w * h).map(|_| normal.sample(rng)).collect();
    let mut s = gaussian_blur(&raw, w, h, blur);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s.len() as f64).sqrt();
    let scale = if sd > 0.0 { std / sd } else { 0.0 };
    s.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    s
}

fn background(rng: &mut ChaCha8Rng, spec: &SceneSpec, base: f64) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    match spec.background {
        BackgroundTexture::Flat => vec![base; w * h],
        BackgroundTexture::Noise => smooth_noise(rng, w, h, 2.0, spec.texture_std)
            .into_iter()
            .map(|v| base + v)
            .collect(),
        BackgroundTexture::TerrainGradient => {
            let slope = rng.gen_range(-1.0..1.0) * spec.texture_std * 2.0;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let freq = rng.gen_range(1.0..3.0);
            (0..w * h)
                .map(|p| {
                    let (x, y) = ((p % w) as f64 / w as f64, (p / w) as f64 / h as f64);
                    base + slope * (y - 0.5) + spec.texture_std * (freq * std::f64::consts::TAU * x + phase).sin()
                })
                .collect()
        }
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Renders one sequence. Identical specs give identical output.
pub fn generate(spec: &SceneSpec) -> Result<SyntheticSequence> {
    generate_named(spec, "seq")
}

fn generate_named(spec: &SceneSpec, name: &str) -> Result<SyntheticSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let (tw, th) = spec.target_size;

    let vis_base = rng.gen_range(80.0..160.0);
    let vis_bg = background(&mut rng, spec, vis_base);
    let mwir_base = rng.gen_range(40.0..70.0);
    let mwir_bg: Vec<f64> = smooth_noise(&mut rng, w, h, 6.0, 6.0)
        .into_iter()
        .map(|v| mwir_base + v)
        .collect();
    // shift away from saturation
    let sign = if vis_base > 128.0 { -1.0 } else { 1.0 };
    let stripe_period = rng.gen_range(4.0..10.0);

    // same footprint as the target, so a single MWIR frame cannot tell them apart
    let decoy_boxes: Vec<BBox> = (0..spec.decoys)
        .map(|_| {
            BBox::new(
                rng.gen_range(0..=w - tw) as f64,
                rng.gen_range(0..=h - th) as f64,
                tw as f64,
                th as f64,
            )
        })
        .collect();

    let mut x = rng.gen_range(0.0..=(w - tw) as f64);
    let mut y = rng.gen_range(0.0..=(h - th) as f64);
    let (mut vx, mut vy) = spec.velocity;
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let heat = spec.thermal_contrast * 255.0;

    let mut out = SyntheticSequence {
        name: name.to_string(),
        spec: spec.clone(),
        frame_indices: Vec::with_capacity(spec.frames),
        visible: Vec::with_capacity(spec.frames),
        mwir: Vec::with_capacity(spec.frames),
        gt: Vec::with_capacity(spec.frames),
        visible_background: vis_bg.clone(),
        mwir_background: mwir_bg.clone(),
        decoy_boxes: decoy_boxes.clone(),
    };
    for f in 0..spec.frames {
        let bx = x.round() as usize;
        let by = y.round() as usize;
        let target = BBox::new(bx as f64, by as f64, tw as f64, th as f64);
        let mut vis = vis_bg.clone();
        let mut mw = mwir_bg.clone();
        for d in &decoy_boxes {
            for yy in d.y as usize..d.y2() as usize {
                for xx in d.x as usize..d.x2() as usize {
                    mw[yy * w + xx] += heat;
                }
            }
        }
        for yy in by..by + th {
            for xx in bx..bx + tw {
                // stripes in target coordinates; mean 1 so the mean shift is the contrast
                let phase = ((xx - bx) as f64 + 0.5 * (yy - by) as f64) / stripe_period;
                let pattern = 1.0 + 0.5 * (std::f64::consts::TAU * phase).sin();
                vis[yy * w + xx] += sign * spec.visible_contrast * 255.0 * pattern;
                mw[yy * w + xx] = mwir_bg[yy * w + xx] + heat;
            }
        }
        let render = |plane: Vec<f64>, rng: &mut ChaCha8Rng| {
            let values = plane
                .into_iter()
                .map(|v| {
                    let n = if spec.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                    to_u8(v + n)
                })
                .collect();
            ImagePlane::new(w, h, values)
        };
        out.visible.push(render(vis, &mut rng)?);
        out.mwir.push(render(mw, &mut rng)?);
        let frame_index = f * spec.frame_step;
        out.frame_indices.push(frame_index);
        out.gt.push(vec![GroundTruthBox {
            bbox: target,
            class_id: 1,
            image_id: image_id(name, frame_index),
        }]);

        x += vx;
        y += vy;
        let (max_x, max_y) = ((w - tw) as f64, (h - th) as f64);
        if x < 0.0 || x > max_x {
            vx = -vx;
            x = x.clamp(0.0, max_x);
        }
        if y < 0.0 || y > max_y {
            vy = -vy;
            y = y.clamp(0.0, max_y);
        }
    }
    Ok(out)
}

/// Parameter ranges from which a [`SceneSpec`] is drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTemplate {
    pub background: BackgroundTexture,
    pub texture_std: f64,
    pub size: (usize, usize),
    pub visible_contrast: (f64, f64),
    pub thermal_contrast: (f64, f64),
    pub speed: (f64, f64),
    pub decoys: (usize, usize),
    pub noise_sigma: f64,
}

impl Default for SceneTemplate {
    fn default() -> Self {
        SceneTemplate {
            background: BackgroundTexture::Noise,
            texture_std: 8.0,
            size: (48, 64),
            visible_contrast: (0.25, 0.4),
            thermal_contrast: (0.5, 0.6),
            speed: (3.0, 6.0),
            decoys: (0, 0),
            noise_sigma: 4.0,
        }
    }
}

/// A named suite: frame geometry, split rule and one or more scene templates
/// used round-robin across sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteProfile {
    pub name: String,
    pub sequences: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub frame_step: usize,
    /// Every `test_every`-th sequence (1-based) goes to the test split.
    pub test_every: usize,
    pub scenes: Vec<SceneTemplate>,
}

impl SuiteProfile {
    pub const BUILTIN: [&'static str; 4] = ["easy", "camouflage", "small-target", "mixed"];

    fn base(name: &str, scenes: Vec<SceneTemplate>) -> Self {
        SuiteProfile {
            name: name.to_string(),
            sequences: 20,
            frames: 40,
            width: 320,
            height: 240,
            frame_step: 5,
            test_every: 5,
            scenes,
        }
    }

    pub fn easy() -> Self {
        Self::base("easy", vec![SceneTemplate::default()])
    }

    /// Targets nearly invisible in the visible band over a busy texture, hot
    /// in MWIR, with static hot decoys that only motion separates from them.
    pub fn camouflage() -> Self {
        Self::base(
            "camouflage",
            vec![SceneTemplate {
                background: BackgroundTexture::Noise,
                texture_std: 18.0,
                size: (40, 64),
                visible_contrast: (0.04, 0.05),
                thermal_contrast: (0.5, 0.6),
                speed: (10.0, 16.0),
                decoys: (2, 3),
                noise_sigma: 4.0,
            }],
        )
    }

    pub fn small_target() -> Self {
        Self::base(
            "small-target",
            vec![SceneTemplate {
                size: (8, 16),
                speed: (1.0, 3.0),
                ..SceneTemplate::default()
            }],
        )
    }

    pub fn mixed() -> Self {
        let mut scenes = Vec::new();
        scenes.extend(Self::easy().scenes);
        scenes.extend(Self::camouflage().scenes);
        scenes.extend(Self::small_target().scenes);
        scenes.push(SceneTemplate {
            background: BackgroundTexture::TerrainGradient,
            texture_std: 15.0,
            size: (24, 48),
            ..SceneTemplate::default()
        });
        Self::base("mixed", scenes)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "easy" => Ok(Self::easy()),
            "camouflage" => Ok(Self::camouflage()),
            "small-target" | "small_target" => Ok(Self::small_target()),
            "mixed" => Ok(Self::mixed()),
            _ => Err(Error::Config(format!(
                "unknown profile {name:?}; expected one of {}",
                Self::BUILTIN.join(", ")
            ))),
        }
    }

    /// Reads a profile from `key=value` text. Top-level keys set the suite;
    /// each `[scene]` section adds a template.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = SuiteProfile::base("custom", Vec::new());
        let mut block = 0;
        for e in parse_entries(text)? {
            match e.section.as_deref() {
                None => match e.key.as_str() {
                    "name" => p.name = e.value.clone(),
                    "sequences" => p.sequences = e.parse()?,
                    "frames" => p.frames = e.parse()?,
                    "width" => p.width = e.parse()?,
                    "height" => p.height = e.parse()?,
                    "frame_step" => p.frame_step = e.parse()?,
                    "test_every" => p.test_every = e.parse()?,
                    _ => return Err(e.unknown()),
                },
                Some("scene") => {
                    if e.block != block {
                        block = e.block;
                        p.scenes.push(SceneTemplate::default());
                    }
                    let s = p.scenes.last_mut().expect("scene pushed above");
                    match e.key.as_str() {
                        "background" => s.background = e.value.parse()?,
                        "texture_std" => s.texture_std = e.parse()?,
                        "size" => s.size = e.parse_range()?,
                        "visible_contrast" => s.visible_contrast = e.parse_range()?,
                        "thermal_contrast" => s.thermal_contrast = e.parse_range()?,
                        "speed" => s.speed = e.parse_range()?,
                        "decoys" => s.decoys = e.parse_range()?,
                        "noise_sigma" => s.noise_sigma = e.parse()?,
                        _ => return Err(e.unknown()),
                    }
                }
                Some(other) => return Err(Error::Config(format!("line {}: unknown section [{other}]", e.line))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Text form accepted by [`SuiteProfile::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "name={}\nsequences={}\nframes={}\nwidth={}\nheight={}\nframe_step={}\ntest_every={}\n",
            self.name, self.sequences, self.frames, self.width, self.height, self.frame_step, self.test_every
        );
        for t in &self.scenes {
            s.push_str(&format!(
                "\n[scene]\nbackground={}\ntexture_std={}\nsize={}..{}\nvisible_contrast={}..{}\nthermal_contrast={}..{}\nspeed={}..{}\ndecoys={}..{}\nnoise_sigma={}\n",
                t.background.as_str(),
                t.texture_std,
                t.size.0,
                t.size.1,
                t.visible_contrast.0,
                t.visible_contrast.1,
                t.thermal_contrast.0,
                t.thermal_contrast.1,
                t.speed.0,
                t.speed.1,
                t.decoys.0,
                t.decoys.1,
                t.noise_sigma
            ));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenes.is_empty() {
            return Err(Error::Config(format!("profile {} has no [scene] section", self.name)));
        }
        if self.frames < 2 || self.test_every < 2 || self.frame_step == 0 {
            return Err(Error::Config("profile needs frames >= 2, test_every >= 2, frame_step >= 1".into()));
        }
        for s in &self.scenes {
            if s.size.0 == 0 || s.size.1 > self.width.min(self.height) {
                return Err(Error::Input(format!(
                    "target sizes {:?} do not fit {}x{} frames",
                    s.size, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn split_of(&self, index: usize) -> Split {
        if (index + 1) % self.test_every == 0 {
            Split::Test
        } else {
            Split::Train
        }
    }

    pub fn sequence_name(&self, index: usize) -> String {
        format!("{}_{index:03}", self.name)
    }

    /// Draws the concrete scene of sequence `index` from a stream of `seed`
    /// that depends only on the pair.
    pub fn scene(&self, seed: u64, index: usize) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let t = &self.scenes[index % self.scenes.len()];
        let range = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let tw = rng.gen_range(t.size.0..=t.size.1);
        let th = rng.gen_range(t.size.0..=t.size.1);
        let speed = range(&mut rng, t.speed);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        SceneSpec {
            width: self.width,
            height: self.height,
            background: t.background,
            texture_std: t.texture_std,
            target_size: (tw, th),
            visible_contrast: range(&mut rng, t.visible_contrast),
            thermal_contrast: range(&mut rng, t.thermal_contrast),
            velocity: (speed * angle.cos(), speed * angle.sin()),
            frames: self.frames,
            frame_step: self.frame_step,
            noise_sigma: t.noise_sigma,
            decoys: rng.gen_range(t.decoys.0..=t.decoys.1),
            seed: rng.gen(),
        }
    }
}

impl fmt::Display for SuiteProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub manifest: Manifest,
    pub frames_written: usize,
}

/// Generates every sequence of `profile` under `out_dir` in the dataset
/// layout and writes the manifest.
pub fn generate_suite(profile: &SuiteProfile, out_dir: &Path, seed: u64) -> Result<SuiteSummary> {
    profile.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let written: Vec<usize> = (0..profile.sequences)
        .into_par_iter()
        .map(|i| {
            let name = profile.sequence_name(i);
            let seq = generate_named(&profile.scene(seed, i), &name)?;
            let frames: Vec<_> = seq
                .frame_indices
                .iter()
                .zip(seq.visible.iter().zip(&seq.mwir))
                .map(|(&fi, (v, m))| (fi, v, m))
                .collect();
            let gts: Vec<_> = seq
                .frame_indices
                .iter()
                .zip(&seq.gt)
                .flat_map(|(&fi, g)| g.iter().map(move |b| (fi, b.bbox, b.class_id)))
                .collect();
            write_sequence(out_dir, &name, &frames, &gts)?;
            Ok(frames.len())
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        entries: (0..profile.sequences)
            .map(|i| ManifestEntry {
                sequence: profile.sequence_name(i),
                split: profile.split_of(i),
            })
            .collect(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    let profile_path = out_dir.join("profile.txt");
    fs::write(&profile_path, profile.to_text()).map_err(|e| Error::io(&profile_path, e))?;
    Ok(SuiteSummary {
        manifest,
        frames_written: written.iter().sum(),
    })
}
