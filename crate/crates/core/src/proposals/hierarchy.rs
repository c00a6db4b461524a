//! Region descriptors and bottom-up hierarchical grouping.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::image::FusedImage;
use crate::proposals::segment::{gaussian_blur, Segmentation};

pub const COLOR_BINS: usize = 25;
pub const ORIENTATIONS: usize = 8;
pub const TEXTURE_BINS: usize = 10;
pub const COLOR_LEN: usize = 3 * COLOR_BINS;
pub const TEXTURE_LEN: usize = 3 * ORIENTATIONS * TEXTURE_BINS;

/// One region with its L1-normalised colour and texture histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub id: usize,
    pub pixel_count: usize,
    /// Pixel-aligned extent: covers whole pixels `[x, x + w) x [y, y + h)`.
    pub bounding_box: BBox,
    pub color_histogram: Vec<f64>,
    pub texture_histogram: Vec<f64>,
}

impl Segment {
    /// Pixel-count-weighted combination of two regions.
    pub fn merge(a: &Segment, b: &Segment, id: usize) -> Segment {
        let n = (a.pixel_count + b.pixel_count) as f64;
        let (wa, wb) = (a.pixel_count as f64 / n, b.pixel_count as f64 / n);
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect();
        Segment {
            id,
            pixel_count: a.pixel_count + b.pixel_count,
            bounding_box: a.bounding_box.union_box(&b.bounding_box),
            color_histogram: mix(&a.color_histogram, &b.color_histogram),
            texture_histogram: mix(&a.texture_histogram, &b.texture_histogram),
        }
    }
}

fn color_bin(v: u8) -> usize {
    usize::from(v) * COLOR_BINS / 256
}

/// Per pixel, the 24 texture-histogram slots it votes into: for each channel
/// and each of 8 orientations, the rectified directional derivative of the
/// sigma-1 smoothed channel, quantised into 10 bins over `[0, channel max]`.
fn texture_slots(image: &FusedImage) -> Vec<[u16; 3 * ORIENTATIONS]> {
    let (w, h) = (image.width(), image.height());
    let mut slots = vec![[0u16; 3 * ORIENTATIONS]; w * h];
    let dirs: Vec<(f64, f64)> = (0..ORIENTATIONS)
        .map(|o| {
            let t = o as f64 * 2.0 * PI / ORIENTATIONS as f64;
            (t.cos(), t.sin())
        })
        .collect();
    for (c, plane) in image.planes.iter().enumerate() {
        let raw: Vec<f64> = plane.values().iter().map(|&v| f64::from(v)).collect();
        let s = gaussian_blur(&raw, w, h, 1.0);
        let at = |x: usize, y: usize| s[y * w + x];
        let mut resp = vec![[0.0f64; ORIENTATIONS]; w * h];
        let mut max = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
                let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
                for (o, &(cx, sy)) in dirs.iter().enumerate() {
                    let r = (gx * cx + gy * sy).max(0.0);
                    resp[y * w + x][o] = r;
                    max = max.max(r);
                }
            }
        }
        for (p, r) in resp.iter().enumerate() {
            for o in 0..ORIENTATIONS {
                let bin = if max > 0.0 {
                    ((r[o] / max * TEXTURE_BINS as f64) as usize).min(TEXTURE_BINS - 1)
                } else {
                    0
                };
                slots[p][c * ORIENTATIONS + o] = ((c * ORIENTATIONS + o) * TEXTURE_BINS + bin) as u16;
            }
        }
    }
    slots
}

/// Builds one [`Segment`] per label of `seg`.
pub fn describe_segments(image: &FusedImage, seg: &Segmentation) -> Result<Vec<Segment>> {
    let (w, h) = (image.width(), image.height());
    if (seg.width, seg.height) != (w, h) || seg.labels.len() != w * h {
        return Err(Error::Internal("segmentation does not match image size".into()));
    }
    let texture = texture_slots(image);
    let mut counts = vec![0usize; seg.count];
    let mut bounds = vec![(usize::MAX, usize::MAX, 0usize, 0usize); seg.count];
    let mut color = vec![vec![0.0; COLOR_LEN]; seg.count];
    let mut tex = vec![vec![0.0; TEXTURE_LEN]; seg.count];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let l = seg.labels[p];
            counts[l] += 1;
            let b = &mut bounds[l];
            *b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
            for (c, plane) in image.planes.iter().enumerate() {
                color[l][c * COLOR_BINS + color_bin(plane.values()[p])] += 1.0;
            }
            for &slot in &texture[p] {
                tex[l][usize::from(slot)] += 1.0;
            }
        }
    }
    Ok((0..seg.count)
        .map(|l| {
            let n = counts[l] as f64;
            let (x1, y1, x2, y2) = bounds[l];
            Segment {
                id: l,
                pixel_count: counts[l],
                bounding_box: BBox::from_corners(x1 as f64, y1 as f64, (x2 + 1) as f64, (y2 + 1) as f64),
                color_histogram: color[l].iter().map(|v| v / (3.0 * n)).collect(),
                texture_histogram: tex[l].iter().map(|v| v / (3.0 * ORIENTATIONS as f64 * n)).collect(),
            }
        })
        .collect())
}

/// Label pairs that touch under 8-connectivity, each as `(lower, higher)`.
pub fn adjacent_pairs(seg: &Segmentation) -> BTreeSet<(usize, usize)> {
    let (w, h) = (seg.width, seg.height);
    let mut pairs = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = seg.labels[y * w + x];
            if x + 1 < w {
                add(l, seg.labels[y * w + x + 1]);
            }
            if y + 1 < h {
                add(l, seg.labels[(y + 1) * w + x]);
                if x + 1 < w {
                    add(l, seg.labels[(y + 1) * w + x + 1]);
                }
                if x > 0 {
                    add(l, seg.labels[(y + 1) * w + x - 1]);
                }
            }
        }
    }
    pairs
}

/// Weights of the four similarity terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityWeights {
    pub color: f64,
    pub texture: f64,
    pub size: f64,
    pub fill: f64,
}

impl Default for SimilarityWeights {
    fn default() -> Self {
        SimilarityWeights {
            color: 1.0,
            texture: 1.0,
            size: 1.0,
            fill: 1.0,
        }
    }
}

pub fn histogram_intersection(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.min(*y)).sum()
}

pub fn color_similarity(a: &Segment, b: &Segment) -> f64 {
    histogram_intersection(&a.color_histogram, &b.color_histogram)
}

pub fn texture_similarity(a: &Segment, b: &Segment) -> f64 {
    histogram_intersection(&a.texture_histogram, &b.texture_histogram)
}

/// Favours merging small regions first.
pub fn size_similarity(a: &Segment, b: &Segment, image_size: usize) -> f64 {
    1.0 - (a.pixel_count + b.pixel_count) as f64 / image_size as f64
}

/// Favours pairs whose union fills its bounding box.
pub fn fill_similarity(a: &Segment, b: &Segment, image_size: usize) -> f64 {
    let bb = a.bounding_box.union_box(&b.bounding_box).area();
    1.0 - (bb - a.pixel_count as f64 - b.pixel_count as f64) / image_size as f64
}

pub fn similarity_weighted(a: &Segment, b: &Segment, image_size: usize, w: &SimilarityWeights) -> f64 {
    w.color * color_similarity(a, b)
        + w.texture * texture_similarity(a, b)
        + w.size * size_similarity(a, b, image_size)
        + w.fill * fill_similarity(a, b, image_size)
}

/// Sum of the four terms with unit weights.
pub fn similarity(a: &Segment, b: &Segment, image_size: usize) -> f64 {
    similarity_weighted(a, b, image_size, &SimilarityWeights::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeRecord {
    pub a: usize,
    pub b: usize,
    pub new_id: usize,
    pub similarity: f64,
}

/// Highest score first, then lower ids.
#[derive(Debug, Clone, Copy)]
struct PairKey {
    score: f64,
    a: usize,
    b: usize,
}

impl PartialEq for PairKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for PairKey {}

impl PartialOrd for PairKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PairKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

/// Every region ever formed, plus the merge history. Regions keep their index
/// as id; merged regions are appended.
#[derive(Debug, Clone)]
pub struct RegionHierarchy {
    pub segments: Vec<Segment>,
    pub merge_log: Vec<MergeRecord>,
    image_size: usize,
    weights: SimilarityWeights,
    active: Vec<bool>,
    active_count: usize,
    neighbours: Vec<BTreeSet<usize>>,
    scores: BTreeMap<(usize, usize), f64>,
    queue: BTreeSet<PairKey>,
}

impl RegionHierarchy {
    pub fn new(
        segments: Vec<Segment>,
        pairs: &BTreeSet<(usize, usize)>,
        image_size: usize,
        weights: SimilarityWeights,
    ) -> Result<Self> {
        if segments.iter().enumerate().any(|(i, s)| s.id != i || s.pixel_count == 0) {
            return Err(Error::Internal("segment ids must be dense and regions non-empty".into()));
        }
        let n = segments.len();
        let mut h = RegionHierarchy {
            segments,
            merge_log: Vec::new(),
            image_size,
            weights,
            active: vec![true; n],
            active_count: n,
            neighbours: vec![BTreeSet::new(); n],
            scores: BTreeMap::new(),
            queue: BTreeSet::new(),
        };
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b {
                return Err(Error::Internal(format!("bad adjacency pair ({a}, {b})")));
            }
            h.link(a, b);
        }
        Ok(h)
    }

    pub fn from_segmentation(image: &FusedImage, seg: &Segmentation, weights: SimilarityWeights) -> Result<Self> {
        let segments = describe_segments(image, seg)?;
        Self::new(segments, &adjacent_pairs(seg), seg.width * seg.height, weights)
    }

    fn link(&mut self, a: usize, b: usize) {
        let (a, b) = (a.min(b), a.max(b));
        let score = similarity_weighted(&self.segments[a], &self.segments[b], self.image_size, &self.weights);
        self.neighbours[a].insert(b);
        self.neighbours[b].insert(a);
        self.scores.insert((a, b), score);
        self.queue.insert(PairKey { score, a, b });
    }

    fn unlink(&mut self, a: usize, b: usize) {
        let (a, b) = (a.min(b), a.max(b));
        self.neighbours[a].remove(&b);
        self.neighbours[b].remove(&a);
        if let Some(score) = self.scores.remove(&(a, b)) {
            self.queue.remove(&PairKey { score, a, b });
        }
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn active_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.segments.len()).filter(|&i| self.active[i])
    }

    /// Merges the most similar adjacent pair.
    pub fn merge_step(&mut self) -> Result<MergeRecord> {
        if self.active_count < 2 {
            return Err(Error::Internal("merge step needs at least two regions".into()));
        }
        let Some(best) = self.queue.first().copied() else {
            return Err(Error::Internal(format!(
                "{} regions remain but none are adjacent",
                self.active_count
            )));
        };
        let (a, b) = (best.a, best.b);
        let new_id = self.segments.len();
        let merged = Segment::merge(&self.segments[a], &self.segments[b], new_id);
        self.segments.push(merged);
        self.active.push(true);
        self.neighbours.push(BTreeSet::new());

        let mut around: BTreeSet<usize> = &self.neighbours[a] | &self.neighbours[b];
        around.remove(&a);
        around.remove(&b);
        for n in self.neighbours[a].clone() {
            self.unlink(a, n);
        }
        for n in self.neighbours[b].clone() {
            self.unlink(b, n);
        }
        self.active[a] = false;
        self.active[b] = false;
        self.active_count -= 1;
        for n in around {
            self.link(n, new_id);
        }
        let record = MergeRecord {
            a,
            b,
            new_id,
            similarity: best.score,
        };
        self.merge_log.push(record);
        Ok(record)
    }

    /// Merges until one region remains.
    pub fn run_to_completion(&mut self) -> Result<()> {
        while self.active_count > 1 {
            self.merge_step()?;
        }
        Ok(())
    }
}
