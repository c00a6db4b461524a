//! Axis-aligned boxes, the regression parameterisation, IoU and NMS.

use crate::scalar::Scalar;

/// Box with top-left corner `(x, y)` and extents `w x h`, covering
/// `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite()
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.x2().min(other.x2()) - self.x.max(other.x);
        let ih = self.y2().min(other.y2()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Smallest box containing both.
    pub fn union_box(&self, other: &BBox) -> BBox {
        BBox::from_corners(
            self.x.min(other.x),
            self.y.min(other.y),
            self.x2().max(other.x2()),
            self.y2().max(other.y2()),
        )
    }

    /// Clips to `[0, width] x [0, height]`.
    pub fn clip(&self, width: f64, height: f64) -> BBox {
        let x1 = self.x.clamp(0.0, width);
        let y1 = self.y.clamp(0.0, height);
        let x2 = self.x2().clamp(0.0, width);
        let y2 = self.y2().clamp(0.0, height);
        BBox::from_corners(x1, y1, x2, y2)
    }

    pub fn scale(&self, s: f64) -> BBox {
        BBox::new(self.x * s, self.y * s, self.w * s, self.h * s)
    }
}

/// Intersection over union; 0 for degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Regression offsets of a box relative to a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBoxDelta {
    pub tx: f64,
    pub ty: f64,
    pub tw: f64,
    pub th: f64,
}

impl BBoxDelta {
    pub fn to_array(self) -> [f64; 4] {
        [self.tx, self.ty, self.tw, self.th]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        BBoxDelta {
            tx: a[0],
            ty: a[1],
            tw: a[2],
            th: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Centre shift in units of the proposal size, log-ratio of extents.
pub fn encode_delta(proposal: &BBox, gt: &BBox) -> BBoxDelta {
    let (pcx, pcy) = proposal.center();
    let (gcx, gcy) = gt.center();
    BBoxDelta {
        tx: (gcx - pcx) / proposal.w,
        ty: (gcy - pcy) / proposal.h,
        tw: (gt.w / proposal.w).ln(),
        th: (gt.h / proposal.h).ln(),
    }
}

/// Inverse of [`encode_delta`]. Extents below one pixel are clamped to 1 and
/// flagged by the returned bool.
pub fn decode_delta(proposal: &BBox, delta: &BBoxDelta) -> (BBox, bool) {
    let (pcx, pcy) = proposal.center();
    let cx = delta.tx * proposal.w + pcx;
    let cy = delta.ty * proposal.h + pcy;
    let mut w = proposal.w * delta.tw.exp();
    let mut h = proposal.h * delta.th.exp();
    let mut clamped = false;
    if !(w >= 1.0) {
        w = 1.0;
        clamped = true;
    }
    if !(h >= 1.0) {
        h = 1.0;
        clamped = true;
    }
    (BBox::new(cx - w / 2.0, cy - h / 2.0, w, h), clamped)
}

/// Scored box of the target class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f64,
    pub class_id: u32,
}

impl Detection {
    pub fn new(bbox: BBox, score: f64) -> Self {
        Detection {
            bbox,
            score,
            class_id: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub class_id: u32,
    pub image_id: String,
}

/// Sorts by descending score; ties keep their input order.
pub fn sort_by_score(dets: &mut [Detection]) {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
}

/// Greedy non-maximum suppression: keeps the best-scoring box and drops every
/// remaining box overlapping a kept one with IoU `>= iou_threshold`.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_by_score(&mut sorted);
    let mut keep: Vec<Detection> = Vec::new();
    for d in sorted {
        if keep.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_threshold) {
            keep.push(d);
        }
    }
    keep
}

/// Smooth-L1 of a scalar difference.
pub fn smooth_l1<T: Scalar>(d: T) -> T {
    let half = T::from_f64_lossy(0.5);
    if d.abs() < T::one() {
        half * d * d
    } else {
        d.abs() - half
    }
}

/// Derivative of [`smooth_l1`].
pub fn smooth_l1_grad<T: Scalar>(d: T) -> T {
    if d.abs() < T::one() {
        d
    } else {
        d.signum()
    }
}
