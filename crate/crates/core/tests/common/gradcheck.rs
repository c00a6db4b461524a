//! Central finite-difference checks of every hand-written backward pass.
//! Each check returns the worst relative error over three random shapes.

use fusedet::bbox::{smooth_l1_grad, BBox};
use fusedet::detector::{batch_loss, bbox_loss, classification_loss};
use fusedet::nn::activation::{softmax, softmax_backward};
use fusedet::nn::conv::{conv2d_backward, conv2d_forward};
use fusedet::nn::fc::{fc_backward, fc_forward};
use fusedet::nn::lrn::{lrn_backward, lrn_forward};
use fusedet::nn::pool::{maxpool_backward, maxpool_forward, roi_pool_backward, roi_pool_forward};
use fusedet::nn::{LrnParams, RoiPoolSpec, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REL_TOL: f64 = 1e-3;
/// Denominator floor so entries that are both near zero compare absolutely.
const FLOOR: f64 = 1e-4;
const EPS: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Shuffled, well separated values so max-based ops have no near ties.
fn separated(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).unwrap()
}

fn numeric(at: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = at.clone();
    (0..at.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + EPS;
            let up = f(&probe);
            probe.data_mut()[i] = orig - EPS;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * EPS)
        })
        .collect()
}

pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
        .fold(0.0, f64::max)
}

/// Scalar objective `sum(y * proj)` and its gradient `proj`.
fn project(y: &Tensor<f64>, proj: &Tensor<f64>) -> f64 {
    y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

pub fn conv(seed: u64) -> f64 {
    let mut r = rng(seed);
    let shapes = [([1, 2, 6, 7], [3, 2, 3, 3], 1, 1), ([2, 3, 7, 5], [2, 3, 3, 2], 2, 0), ([1, 1, 8, 8], [4, 1, 5, 5], 2, 1)];
    let mut worst: f64 = 0.0;
    for (xs, ws, stride, pad) in shapes {
        let x = uniform(&xs, &mut r);
        let w = uniform(&ws, &mut r);
        let b = uniform(&[ws[0]], &mut r);
        let y = conv2d_forward("c", &x, &w, &b, stride, pad).unwrap();
        let proj = uniform(y.shape(), &mut r);
        let g = conv2d_backward("c", &proj, &x, &w, stride, pad, true).unwrap();
        let fx = |t: &Tensor<f64>| project(&conv2d_forward("c", t, &w, &b, stride, pad).unwrap(), &proj);
        let fw = |t: &Tensor<f64>| project(&conv2d_forward("c", &x, t, &b, stride, pad).unwrap(), &proj);
        let fb = |t: &Tensor<f64>| project(&conv2d_forward("c", &x, &w, t, stride, pad).unwrap(), &proj);
        worst = worst
            .max(rel_error(g.input.unwrap().data(), &numeric(&x, &fx)))
            .max(rel_error(g.weight.data(), &numeric(&w, &fw)))
            .max(rel_error(g.bias.data(), &numeric(&b, &fb)));
    }
    worst
}

pub fn lrn(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cases = [
        ([1, 5, 3, 3], LrnParams::default()),
        ([2, 7, 2, 3], LrnParams { local_size: 3, alpha: 0.5, beta: 0.75, k: 1.0 }),
        ([1, 4, 4, 2], LrnParams { local_size: 5, alpha: 2.0, beta: 0.6, k: 2.0 }),
    ];
    let mut worst: f64 = 0.0;
    for (xs, p) in cases {
        let x = uniform(&xs, &mut r);
        let (y, scale) = lrn_forward(&x, &p).unwrap();
        let proj = uniform(y.shape(), &mut r);
        let g = lrn_backward(&proj, &x, &y, &scale, &p).unwrap();
        let f = |t: &Tensor<f64>| project(&lrn_forward(t, &p).unwrap().0, &proj);
        worst = worst.max(rel_error(g.data(), &numeric(&x, &f)));
    }
    worst
}

pub fn maxpool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (xs, k, s) in [([1, 2, 7, 7], 3, 2), ([2, 1, 6, 5], 2, 2), ([1, 3, 5, 8], 3, 1)] {
        let x = separated(&xs, &mut r);
        let (y, arg) = maxpool_forward(&x, k, s).unwrap();
        let proj = uniform(y.shape(), &mut r);
        let g = maxpool_backward(&proj, &arg, x.shape()).unwrap();
        let f = |t: &Tensor<f64>| project(&maxpool_forward(t, k, s).unwrap().0, &proj);
        worst = worst.max(rel_error(g.data(), &numeric(&x, &f)));
    }
    worst
}

pub fn fc(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (rows, i, o) in [(1, 5, 3), (4, 7, 2), (3, 12, 6)] {
        let x = uniform(&[rows, i], &mut r);
        let w = uniform(&[o, i], &mut r);
        let b = uniform(&[o], &mut r);
        let y = fc_forward("f", &x, &w, &b).unwrap();
        let proj = uniform(y.shape(), &mut r);
        let g = fc_backward("f", &proj, &x, &w).unwrap();
        let fx = |t: &Tensor<f64>| project(&fc_forward("f", t, &w, &b).unwrap(), &proj);
        let fw = |t: &Tensor<f64>| project(&fc_forward("f", &x, t, &b).unwrap(), &proj);
        let fb = |t: &Tensor<f64>| project(&fc_forward("f", &x, &w, t).unwrap(), &proj);
        worst = worst
            .max(rel_error(g.input.data(), &numeric(&x, &fx)))
            .max(rel_error(g.weight.data(), &numeric(&w, &fw)))
            .max(rel_error(g.bias.data(), &numeric(&b, &fb)));
    }
    worst
}

/// Softmax backward, and mean NLL of the softmax wrt the logits.
pub fn softmax_nll(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (rows, k) in [(1, 2), (5, 2), (3, 4)] {
        let z = uniform(&[rows, k], &mut r);
        let proj = uniform(&[rows, k], &mut r);
        let p = softmax(&z);
        let g = softmax_backward(&proj, &p);
        let f = |t: &Tensor<f64>| project(&softmax(t), &proj);
        worst = worst.max(rel_error(g.data(), &numeric(&z, &f)));

        let labels: Vec<usize> = (0..rows).map(|_| r.gen_range(0..k)).collect();
        let deltas = Tensor::<f64>::zeros(&[rows, 4 * k]);
        let targets = vec![None; rows];
        let loss = batch_loss(&z, &deltas, &labels, &targets, 1.0).unwrap();
        let nll = |t: &Tensor<f64>| {
            let p = softmax(t);
            (0..rows)
                .map(|i| classification_loss(&p.data()[i * k..(i + 1) * k], labels[i]))
                .sum::<f64>()
                / rows as f64
        };
        worst = worst.max(rel_error(loss.cls_grad.data(), &numeric(&z, &nll)));
    }
    worst
}

pub fn smooth_l1_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for scale in [0.5, 2.0, 4.0] {
        // keep away from the |d| = 1 kink
        let t: [f64; 4] = std::array::from_fn(|_| loop {
            let v: f64 = r.gen_range(-scale..scale);
            if (v.abs() - 1.0).abs() > 0.05 {
                break v;
            }
        });
        let v = [0.0; 4];
        let analytic: Vec<f64> = t.iter().map(|&d| smooth_l1_grad(d)).collect();
        let at = Tensor::from_vec(&[4], t.to_vec()).unwrap();
        let f = |x: &Tensor<f64>| bbox_loss(&<[f64; 4]>::try_from(x.data()).unwrap(), &v);
        worst = worst.max(rel_error(&analytic, &numeric(&at, &f)));
    }
    worst
}

pub fn roi_pool(seed: u64) -> f64 {
    let mut r = rng(seed);
    let cases = [
        ([1, 2, 6, 8], RoiPoolSpec { bins_h: 2, bins_w: 2, spatial_scale: 1.0 }, 3),
        ([1, 3, 8, 8], RoiPoolSpec { bins_h: 3, bins_w: 2, spatial_scale: 0.5 }, 2),
        ([1, 1, 10, 12], RoiPoolSpec { bins_h: 6, bins_w: 6, spatial_scale: 1.0 / 16.0 }, 4),
    ];
    let mut worst: f64 = 0.0;
    for (fs, spec, n) in cases {
        let x = separated(&fs, &mut r);
        let (img_h, img_w) = (fs[2] as f64 / spec.spatial_scale, fs[3] as f64 / spec.spatial_scale);
        let rois: Vec<BBox> = (0..n)
            .map(|_| {
                let w = r.gen_range(img_w * 0.3..img_w * 0.9).floor();
                let h = r.gen_range(img_h * 0.3..img_h * 0.9).floor();
                BBox::new(r.gen_range(0.0..img_w - w).floor(), r.gen_range(0.0..img_h - h).floor(), w, h)
            })
            .collect();
        let (y, arg) = roi_pool_forward(&x, &rois, &spec).unwrap();
        let proj = uniform(y.shape(), &mut r);
        let g = roi_pool_backward(&proj, &arg, x.shape()).unwrap();
        let f = |t: &Tensor<f64>| project(&roi_pool_forward(t, &rois, &spec).unwrap().0, &proj);
        worst = worst.max(rel_error(g.data(), &numeric(&x, &f)));
    }
    worst
}

/// Full batch loss (classification plus gated box term) wrt logits and deltas.
pub fn joint_loss(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (rows, lambda) in [(2, 1.0), (6, 0.5), (4, 3.0)] {
        let k = 2;
        let z = uniform(&[rows, k], &mut r);
        let d = uniform(&[rows, 4 * k], &mut r);
        let labels: Vec<usize> = (0..rows).map(|i| if i == 0 { 1 } else { r.gen_range(0..k) }).collect();
        let targets: Vec<Option<[f64; 4]>> = labels
            .iter()
            .map(|&u| (u > 0).then(|| std::array::from_fn(|_| r.gen_range(-2.0..2.0))))
            .collect();
        let loss = batch_loss(&z, &d, &labels, &targets, lambda).unwrap();
        let total_z = |t: &Tensor<f64>| batch_loss(t, &d, &labels, &targets, lambda).unwrap().total;
        let total_d = |t: &Tensor<f64>| batch_loss(&z, t, &labels, &targets, lambda).unwrap().total;
        worst = worst
            .max(rel_error(loss.cls_grad.data(), &numeric(&z, &total_z)))
            .max(rel_error(loss.bbox_grad.unwrap().data(), &numeric(&d, &total_d)));
    }
    worst
}

pub const ALL: [(&str, fn(u64) -> f64); 8] = [
    ("conv", conv),
    ("lrn", lrn),
    ("maxpool", maxpool),
    ("fc", fc),
    ("softmax+nll", softmax_nll),
    ("smooth-l1", smooth_l1_check),
    ("roi-pool", roi_pool),
    ("joint-loss", joint_loss),
];
