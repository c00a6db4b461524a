//! Detection matching, precision-recall curves, AP and top-1 precision.

use num_rational::Ratio;
use num_traits::Num;

use crate::bbox::{iou, sort_by_score, Detection, GroundTruthBox};
use crate::error::{Error, Result};

/// IoU at or above which a detection counts as a true positive.
pub const TP_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub detection: Detection,
    /// Index into the ground-truth list of the image.
    pub matched_gt: Option<usize>,
    /// Best IoU with any ground-truth box.
    pub iou: f64,
    pub is_true_positive: bool,
}

/// Greedy matching in descending score order: each detection takes the
/// unmatched ground-truth box it overlaps most, if that IoU is at least
/// `iou_threshold`. Later detections on an already matched box are false
/// positives.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Vec<MatchResult> {
    let mut sorted = dets.to_vec();
    sort_by_score(&mut sorted);
    let mut taken = vec![false; gts.len()];
    sorted
        .into_iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .map(|(i, g)| (i, iou(&d.bbox, &g.bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let best_free = gts
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .map(|(i, g)| (i, iou(&d.bbox, &g.bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match best_free {
                Some((i, v)) if v >= iou_threshold => {
                    taken[i] = true;
                    MatchResult {
                        detection: d,
                        matched_gt: Some(i),
                        iou: v,
                        is_true_positive: true,
                    }
                }
                _ => MatchResult {
                    detection: d,
                    matched_gt: None,
                    iou: best.map_or(0.0, |b| b.1),
                    is_true_positive: false,
                },
            }
        })
        .collect()
}

/// Number type the AP computation runs in. `f64` for reports, exact
/// rationals for verification.
pub trait ApScalar: Clone + PartialOrd + Num {
    fn from_count(n: usize) -> Self;
}

impl ApScalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
}

impl ApScalar for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }
}

/// Area interpolation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApMethod {
    /// Exact area under the monotone (running-max) precision envelope.
    #[default]
    AllPoints,
    /// Mean interpolated precision at recall 0, 0.1, ..., 1.
    ElevenPoint,
}

impl std::str::FromStr for ApMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-points" | "all_points" => Ok(ApMethod::AllPoints),
            "11-point" | "eleven-point" | "11_point" => Ok(ApMethod::ElevenPoint),
            _ => Err(Error::Config(format!("unknown AP method {s:?}"))),
        }
    }
}

/// Precision-recall points, one per distinct score threshold, from the
/// highest threshold down. Detections with equal scores enter together.
pub fn pr_points<N: ApScalar>(scored: &[(f64, bool)], total_gt: usize) -> Vec<(N, N)> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scored[order[i]].0;
        while i < order.len() && scored[order[i]].0 == s {
            tp += usize::from(scored[order[i]].1);
            seen += 1;
            i += 1;
        }
        points.push((
            N::from_count(tp) / N::from_count(total_gt),
            N::from_count(tp) / N::from_count(seen),
        ));
    }
    points
}

/// AP of scored detections (`(score, is_true_positive)`) against
/// `total_gt` ground-truth boxes.
pub fn average_precision_with<N: ApScalar>(scored: &[(f64, bool)], total_gt: usize, method: ApMethod) -> Result<N> {
    if total_gt == 0 {
        return Err(Error::Input("average precision needs at least one ground-truth box".into()));
    }
    let points = pr_points::<N>(scored, total_gt);
    // running max of precision from the right
    let mut envelope = points.clone();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        if envelope[i + 1].1 > envelope[i].1 {
            envelope[i].1 = envelope[i + 1].1.clone();
        }
    }
    Ok(match method {
        ApMethod::AllPoints => {
            let mut ap = N::zero();
            let mut prev = N::zero();
            for (r, p) in envelope {
                ap = ap + (r.clone() - prev) * p;
                prev = r;
            }
            ap
        }
        ApMethod::ElevenPoint => {
            let ten = N::from_count(10);
            let mut sum = N::zero();
            for k in 0..=10 {
                let level = N::from_count(k) / ten.clone();
                if let Some((_, p)) = envelope.iter().find(|(r, _)| *r >= level) {
                    sum = sum + p.clone();
                }
            }
            sum / N::from_count(11)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)`, recall non-decreasing.
    pub points: Vec<(f64, f64)>,
    pub ap: f64,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("recall,precision\n");
        for (r, p) in &self.points {
            s.push_str(&format!("{r},{p}\n"));
        }
        s
    }
}

/// PR curve and AP over match results pooled across a dataset.
pub fn average_precision(matches: &[MatchResult], total_gt: usize, method: ApMethod) -> Result<PrCurve> {
    let scored: Vec<(f64, bool)> = matches.iter().map(|m| (m.detection.score, m.is_true_positive)).collect();
    let ap = average_precision_with::<f64>(&scored, total_gt, method)?;
    Ok(PrCurve {
        points: pr_points::<f64>(&scored, total_gt),
        ap,
    })
}

/// Fraction of images whose highest-scoring detection overlaps the image's
/// single ground-truth box with IoU at least [`TP_IOU`]. Images without
/// detections count as misses.
pub fn top1_precision(images: &[(Vec<Detection>, Vec<GroundTruthBox>)]) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::Input("top-1 precision needs at least one image".into()));
    }
    let mut hits = 0;
    for (dets, gts) in images {
        let [gt] = gts.as_slice() else {
            return Err(Error::Input(format!(
                "top-1 precision needs exactly one ground-truth box per image, got {}",
                gts.len()
            )));
        };
        let top = dets.iter().fold(None::<&Detection>, |best, d| match best {
            Some(b) if b.score >= d.score => Some(b),
            _ => Some(d),
        });
        if top.is_some_and(|d| iou(&d.bbox, &gt.bbox) >= TP_IOU) {
            hits += 1;
        }
    }
    Ok(hits as f64 / images.len() as f64)
}
