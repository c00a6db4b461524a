//! Class-independent region proposals: graph-based initial segmentation
//! followed by greedy hierarchical grouping, emitting the box of every region
//! formed along the way.

mod hierarchy;
mod segment;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

pub use hierarchy::{
    adjacent_pairs, color_similarity, describe_segments, fill_similarity, histogram_intersection,
    similarity, similarity_weighted, size_similarity, texture_similarity, MergeRecord, RegionHierarchy,
    Segment, SimilarityWeights, COLOR_BINS, COLOR_LEN, ORIENTATIONS, TEXTURE_BINS, TEXTURE_LEN,
};
pub use segment::{felzenszwalb_labels, gaussian_blur, Segmentation};

use crate::bbox::{iou, BBox};
use crate::error::{Error, Result};
use crate::image::{ensure_parent, FusedImage};

/// Initial regions of `image` with their descriptors.
pub fn felzenszwalb_segment(image: &FusedImage, k: f64, min_size: usize, sigma: f64) -> Result<Vec<Segment>> {
    let seg = felzenszwalb_labels(image, k, min_size, sigma)?;
    describe_segments(image, &seg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSearchConfig {
    pub sigma: f64,
    /// One grouping pass per value; boxes are pooled.
    pub ks: Vec<f64>,
    pub min_size: usize,
    pub weights: SimilarityWeights,
}

impl Default for SelectiveSearchConfig {
    fn default() -> Self {
        SelectiveSearchConfig {
            sigma: 0.8,
            ks: vec![100.0],
            min_size: 50,
            weights: SimilarityWeights::default(),
        }
    }
}

impl SelectiveSearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() {
            return Err(Error::Config("selective search needs at least one k".into()));
        }
        let w = &self.weights;
        if [w.color, w.texture, w.size, w.fill].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("similarity weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Candidate boxes for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub boxes: Vec<BBox>,
    pub width: usize,
    pub height: usize,
}

impl ProposalSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// `x,y,w,h` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,w,h\n");
        for b in &self.boxes {
            s.push_str(&format!("{},{},{},{}\n", b.x, b.y, b.w, b.h));
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Fraction of `gts` covered by some proposal with IoU `>= threshold`.
    pub fn recall(&self, gts: &[BBox], threshold: f64) -> Option<f64> {
        if gts.is_empty() {
            return None;
        }
        let hit = gts
            .iter()
            .filter(|g| self.boxes.iter().any(|b| iou(b, g) >= threshold))
            .count();
        Some(hit as f64 / gts.len() as f64)
    }
}

/// Runs segmentation and grouping for each configured `k` and returns every
/// region box, first occurrence kept when boxes repeat.
pub fn selective_search(image: &FusedImage, config: &SelectiveSearchConfig) -> Result<ProposalSet> {
    config.validate()?;
    let mut seen = HashSet::new();
    let mut boxes = Vec::new();
    for &k in &config.ks {
        let seg = felzenszwalb_labels(image, k, config.min_size, config.sigma)?;
        let mut hierarchy = RegionHierarchy::from_segmentation(image, &seg, config.weights)?;
        hierarchy.run_to_completion()?;
        for s in &hierarchy.segments {
            let b = s.bounding_box;
            let key = [b.x, b.y, b.w, b.h].map(f64::to_bits);
            if seen.insert(key) {
                boxes.push(b);
            }
        }
    }
    Ok(ProposalSet {
        boxes,
        width: image.width(),
        height: image.height(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{fuse, FusionMode};
    use crate::image::ImagePlane;

    fn gray(p: &ImagePlane) -> FusedImage {
        fuse(Some(p), None, None, FusionMode::VisibleOnly, 0).unwrap()
    }

    #[test]
    fn constant_image_gives_whole_image() {
        let set = selective_search(&gray(&ImagePlane::filled(32, 24, 100)), &Default::default()).unwrap();
        assert_eq!(set.boxes, vec![BBox::new(0.0, 0.0, 32.0, 24.0)]);
    }

    #[test]
    fn two_touching_blobs_and_their_union() {
        let a = BBox::new(20.0, 20.0, 20.0, 20.0);
        let b = BBox::new(40.0, 20.0, 20.0, 20.0);
        let inside = |r: &BBox, x: usize, y: usize| {
            let (x, y) = (x as f64, y as f64);
            x >= r.x && x < r.x2() && y >= r.y && y < r.y2()
        };
        let img = ImagePlane::from_fn(100, 80, |x, y| {
            if inside(&a, x, y) {
                210
            } else if inside(&b, x, y) {
                170
            } else {
                40
            }
        });
        let set = selective_search(&gray(&img), &Default::default()).unwrap();
        for target in [a, b, a.union_box(&b)] {
            let best = set.boxes.iter().map(|p| iou(p, &target)).fold(0.0, f64::max);
            assert!(best >= 0.7, "{target:?} best IoU {best}");
        }
        assert!(set.boxes.iter().all(|p| p.is_valid() && p.x2() <= 100.0 && p.y2() <= 80.0));
    }

    #[test]
    fn segments_partition_the_image() {
        let img = gray(&ImagePlane::from_fn(40, 30, |x, y| ((x * 37 + y * 91) % 256) as u8));
        let segs = felzenszwalb_segment(&img, 100.0, 10, 0.8).unwrap();
        assert_eq!(segs.iter().map(|s| s.pixel_count).sum::<usize>(), 1200);
        for s in &segs {
            assert!((s.color_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!((s.texture_histogram.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let set = ProposalSet {
            boxes: vec![BBox::new(1.0, 2.0, 3.0, 4.0)],
            width: 10,
            height: 10,
        };
        assert_eq!(set.to_csv(), "x,y,w,h\n1,2,3,4\n");
        assert_eq!(set.recall(&[BBox::new(1.0, 2.0, 3.0, 4.0)], 0.5), Some(1.0));
    }
}
