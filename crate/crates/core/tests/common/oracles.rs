//! Independent reference implementations for the metric checks.

use fusedet::bbox::{iou, BBox};
use fusedet::eval::{average_precision_with, ApMethod};
use num_rational::Ratio;
use rand::Rng;

use super::gradcheck::rng;

/// IoU by counting covered unit pixels of integer boxes.
pub fn pixel_iou(a: &BBox, b: &BBox) -> f64 {
    let cover = |r: &BBox, x: i64, y: i64| {
        (x as f64) >= r.x && ((x + 1) as f64) <= r.x2() && (y as f64) >= r.y && ((y + 1) as f64) <= r.y2()
    };
    let (mut inter, mut uni) = (0u64, 0u64);
    for y in 0..64 {
        for x in 0..64 {
            let (ia, ib) = (cover(a, x, y), cover(b, x, y));
            inter += u64::from(ia && ib);
            uni += u64::from(ia || ib);
        }
    }
    if uni == 0 {
        0.0
    } else {
        inter as f64 / uni as f64
    }
}

/// Largest deviation between `iou` and pixel counting over `n` random pairs.
pub fn iou_max_error(seed: u64, n: usize) -> f64 {
    let mut r = rng(seed);
    let mut gen = || {
        let x = r.gen_range(0..40);
        let y = r.gen_range(0..40);
        BBox::new(x as f64, y as f64, r.gen_range(1..=24) as f64, r.gen_range(1..=24) as f64)
    };
    (0..n)
        .map(|_| {
            let (a, b) = (gen(), gen());
            (iou(&a, &b) - pixel_iou(&a, &b)).abs()
        })
        .fold(0.0, f64::max)
}

type Q = Ratio<i64>;

/// AP by enumerating every distinct score as a cut-off: each cut gives one
/// (recall, precision) point, precision is interpolated as the best
/// precision at any cut reaching at least that recall, and the area is
/// summed over the distinct recall levels.
pub fn brute_force_ap(scored: &[(f64, bool)], total_gt: usize) -> Q {
    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let g = total_gt as i64;
    let points: Vec<(Q, Q)> = thresholds
        .iter()
        .map(|&t| {
            let kept: Vec<_> = scored.iter().filter(|s| s.0 >= t).collect();
            let tp = kept.iter().filter(|s| s.1).count() as i64;
            (Q::new(tp, g), Q::new(tp, kept.len() as i64))
        })
        .collect();
    let mut recalls: Vec<Q> = points.iter().map(|p| p.0).collect();
    recalls.sort();
    recalls.dedup();
    let mut ap = Q::from_integer(0);
    let mut prev = Q::from_integer(0);
    for r in recalls {
        let interp = points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .max()
            .unwrap_or_else(|| Q::from_integer(0));
        ap += (r - prev) * interp;
        prev = r;
    }
    ap
}

/// Number of random instances (up to `max_dets` detections with tied
/// scores) on which the library AP differs from the brute force.
pub fn ap_mismatches(seed: u64, instances: usize, max_dets: usize) -> usize {
    let mut r = rng(seed);
    (0..instances)
        .filter(|_| {
            let n = r.gen_range(0..=max_dets);
            let scored: Vec<(f64, bool)> = (0..n)
                .map(|_| (f64::from(r.gen_range(0..8u8)) / 8.0, r.gen_bool(0.5)))
                .collect();
            let tp = scored.iter().filter(|s| s.1).count();
            let total_gt = tp + r.gen_range(0..4) + usize::from(tp == 0);
            let lib = average_precision_with::<Q>(&scored, total_gt, ApMethod::AllPoints).unwrap();
            lib != brute_force_ap(&scored, total_gt)
        })
        .count()
}
