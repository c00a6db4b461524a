//! Graph-based image segmentation over a pixel grid.
//!
//! Pixels are graph nodes joined to their 8 neighbours with the Euclidean
//! distance between their (optionally smoothed) 3-channel values as the edge
//! weight. Edges are processed in ascending weight order and two components
//! merge when the edge is no heavier than either component's internal
//! difference plus `k / size`.

use crate::error::{Error, Result};
use crate::image::FusedImage;

/// Pixel label map produced by [`felzenszwalb_labels`]. Labels are dense,
/// numbered in raster order of each component's first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<usize>,
    pub count: usize,
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    threshold: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize, k: f64) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
            threshold: vec![k; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins two roots; the larger absorbs the smaller, the lower index on ties.
    fn join(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.size[a] > self.size[b] || (self.size[a] == self.size[b] && a < b) {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }
}

/// Separable Gaussian blur with edge clamping; `sigma == 0` copies.
pub fn gaussian_blur(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|v| *v /= total);

    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * values[y * width + clamp(x as isize + i as isize - radius, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(i, w)| w * tmp[clamp(y as isize + i as isize - radius, height) * width + x])
                .sum();
        }
    }
    out
}

fn validate(image: &FusedImage, k: f64, min_size: usize, sigma: f64) -> Result<()> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::Input("cannot segment an empty image".into()));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Config(format!("segmentation k must be positive, got {k}")));
    }
    if min_size == 0 {
        return Err(Error::Config("segmentation min_size must be at least 1".into()));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("segmentation sigma must be non-negative, got {sigma}")));
    }
    Ok(())
}

/// Segments `image` into connected regions.
pub fn felzenszwalb_labels(image: &FusedImage, k: f64, min_size: usize, sigma: f64) -> Result<Segmentation> {
    validate(image, k, min_size, sigma)?;
    let (w, h) = (image.width(), image.height());
    let channels: Vec<Vec<f64>> = image
        .planes
        .iter()
        .map(|p| {
            let raw: Vec<f64> = p.values().iter().map(|&v| f64::from(v)).collect();
            gaussian_blur(&raw, w, h, sigma)
        })
        .collect();
    let dist = |a: usize, b: usize| {
        channels
            .iter()
            .map(|c| (c[a] - c[b]).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(w * h * 4);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                edges.push((dist(p, p + 1), p, p + 1));
            }
            if y + 1 < h {
                edges.push((dist(p, p + w), p, p + w));
                if x + 1 < w {
                    edges.push((dist(p, p + w + 1), p, p + w + 1));
                }
                if x > 0 {
                    edges.push((dist(p, p + w - 1), p, p + w - 1));
                }
            }
        }
    }
    // stable: equal weights keep insertion order
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut sets = DisjointSet::new(w * h, k);
    for &(weight, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && weight <= sets.threshold[ra] && weight <= sets.threshold[rb] {
            let root = sets.join(ra, rb);
            sets.threshold[root] = weight + k / sets.size[root] as f64;
        }
    }
    for &(_, a, b) in &edges {
        let (ra, rb) = (sets.find(a), sets.find(b));
        if ra != rb && (sets.size[ra] < min_size || sets.size[rb] < min_size) {
            sets.join(ra, rb);
        }
    }

    let mut remap = vec![usize::MAX; w * h];
    let mut labels = Vec::with_capacity(w * h);
    let mut count = 0;
    for p in 0..w * h {
        let r = sets.find(p);
        if remap[r] == usize::MAX {
            remap[r] = count;
            count += 1;
        }
        labels.push(remap[r]);
    }
    Ok(Segmentation {
        width: w,
        height: h,
        labels,
        count,
    })
}
