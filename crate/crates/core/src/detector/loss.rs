//! Classification, box-regression and joint detection losses.

use crate::bbox::{smooth_l1, smooth_l1_grad};
use crate::error::{Error, Result};
use crate::nn::activation::softmax;
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood `-ln p[u]`.
pub fn classification_loss<T: Scalar>(p: &[T], u: usize) -> T {
    let floor = T::from_f64_lossy(PROB_FLOOR);
    -p[u].max(floor).ln()
}

/// Sum of smooth-L1 over the four box coordinates.
pub fn bbox_loss<T: Scalar>(t: &[T; 4], v: &[T; 4]) -> T {
    t.iter().zip(v).map(|(a, b)| smooth_l1(*a - *b)).sum()
}

/// `L_cls + lambda [u = 1] L_bbox`.
pub fn joint_loss<T: Scalar>(p: &[T], u: usize, t: &[T; 4], v: &[T; 4], lambda: T) -> T {
    let cls = classification_loss(p, u);
    if u == 1 {
        cls + lambda * bbox_loss(t, v)
    } else {
        cls
    }
}

/// Mean losses of a minibatch and their gradients w.r.t. the head outputs.
#[derive(Debug, Clone)]
pub struct BatchLoss<T> {
    pub l_cls: f64,
    pub l_bbox: f64,
    pub total: f64,
    pub cls_grad: Tensor<T>,
    /// `None` when no row has a box term (no foreground, or `lambda == 0`).
    pub bbox_grad: Option<Tensor<T>>,
}

/// Averages the joint loss over the `R` rows of `logits` (`R x K`) and
/// `deltas` (`R x 4K`). Row `r` with `labels[r] = u > 0` regresses the
/// `u`-th quadruple of `deltas` towards `targets[r]`.
pub fn batch_loss<T: Scalar>(
    logits: &Tensor<T>,
    deltas: &Tensor<T>,
    labels: &[usize],
    targets: &[Option<[f64; 4]>],
    lambda: f64,
) -> Result<BatchLoss<T>> {
    let r = labels.len();
    if logits.shape().len() != 2 || logits.dim(0) != r || targets.len() != r {
        return Err(Error::Internal(format!(
            "loss inputs disagree: logits {:?}, {} labels, {} targets",
            logits.shape(),
            r,
            targets.len()
        )));
    }
    let k = logits.dim(1);
    if deltas.shape() != [r, 4 * k] {
        return Err(Error::Internal(format!("box deltas {:?} do not match {r} x {}", deltas.shape(), 4 * k)));
    }
    let probs = softmax(logits);
    let inv_r = 1.0 / r.max(1) as f64;
    let inv_r_t = T::from_f64_lossy(inv_r);
    let lambda_t = T::from_f64_lossy(lambda);

    let mut l_cls = 0.0;
    let mut cls_grad = vec![T::zero(); r * k];
    for (i, &u) in labels.iter().enumerate() {
        if u >= k {
            return Err(Error::Internal(format!("label {u} out of range for {k} classes")));
        }
        let row = &probs.data()[i * k..(i + 1) * k];
        l_cls += classification_loss(row, u).to_f64_lossy();
        for c in 0..k {
            let onehot = if c == u { T::one() } else { T::zero() };
            cls_grad[i * k + c] = (row[c] - onehot) * inv_r_t;
        }
    }

    let mut l_bbox = 0.0;
    let mut bbox_grad = vec![T::zero(); r * 4 * k];
    let mut any_box = false;
    for (i, (&u, target)) in labels.iter().zip(targets).enumerate() {
        let (true, Some(v)) = (u > 0, target) else { continue };
        let base = i * 4 * k + 4 * u;
        let t: [T; 4] = std::array::from_fn(|j| deltas.data()[base + j]);
        let v: [T; 4] = v.map(T::from_f64_lossy);
        l_bbox += bbox_loss(&t, &v).to_f64_lossy();
        for j in 0..4 {
            bbox_grad[base + j] = lambda_t * smooth_l1_grad(t[j] - v[j]) * inv_r_t;
        }
        any_box = true;
    }
    l_cls *= inv_r;
    l_bbox *= inv_r;
    let bbox_grad = if any_box && lambda != 0.0 {
        Some(Tensor::from_vec(&[r, 4 * k], bbox_grad)?)
    } else {
        None
    };
    Ok(BatchLoss {
        l_cls,
        l_bbox,
        total: l_cls + lambda * l_bbox,
        cls_grad: Tensor::from_vec(&[r, k], cls_grad)?,
        bbox_grad,
    })
}
