use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU, gated on the forward *output*.
pub fn relu_backward<T: Scalar>(output_grad: &Tensor<T>, output: &Tensor<T>) -> Tensor<T> {
    let mut dx = output_grad.clone();
    dx.data_mut()
        .iter_mut()
        .zip(output.data())
        .for_each(|(g, &y)| {
            if y <= T::zero() {
                *g = T::zero();
            }
        });
    dx
}

/// Inverted dropout: kept activations are scaled by `1 / (1 - rate)` so the
/// inference path is the identity. Returns the per-element scale mask.
pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mut out = input.clone();
    out.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
    Ok((out, mask))
}

pub fn dropout_backward<T: Scalar>(output_grad: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut dx = output_grad.clone();
    dx.data_mut().iter_mut().zip(mask).for_each(|(g, &m)| *g *= m);
    dx
}

/// Row-wise softmax over an `R x K` tensor, max-shifted for stability.
pub fn softmax<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let k = input.shape().last().copied().unwrap_or(0);
    let mut out = input.clone();
    if k == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Gradient of softmax given upstream gradient and the softmax output.
pub fn softmax_backward<T: Scalar>(output_grad: &Tensor<T>, probs: &Tensor<T>) -> Tensor<T> {
    let k = probs.shape().last().copied().unwrap_or(0);
    let mut dx = Tensor::zeros(probs.shape());
    if k == 0 {
        return dx;
    }
    for ((d, g), p) in dx
        .data_mut()
        .chunks_mut(k)
        .zip(output_grad.data().chunks(k))
        .zip(probs.data().chunks(k))
    {
        let dot: T = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
        for i in 0..k {
            d[i] = p[i] * (g[i] - dot);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::{assert_close, finite_difference, rand_tensor};
    use rand::SeedableRng;

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&row(&[0.0, 0.0])).data(), &[0.5, 0.5]);
        assert_eq!(softmax(&row(&[1000.0, 1000.0])).data(), &[0.5, 0.5]);
        let p = softmax(&row(&[0.0, 3f64.ln()]));
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&[3, 4], &mut rng);
        let probe = rand_tensor(&[3, 4], &mut rng);
        let dx = softmax_backward(&probe, &softmax(&x));
        let fd = finite_difference(&x, |t| {
            softmax(t).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        });
        assert_close(dx.data(), &fd, 1e-3);
    }

    #[test]
    fn relu_gates_on_sign() {
        let x = row(&[-1.0, 0.0, 2.0]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&row(&[5.0, 5.0, 5.0]), &y).data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn dropout_scales_kept_units() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f64>::full(&[1, 1000], 1.0);
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = mask.iter().filter(|&&m| m > 0.0).count();
        assert!((400..600).contains(&kept));
        assert!(dropout_forward(&x, 1.0, &mut rng).is_err());
    }
}
