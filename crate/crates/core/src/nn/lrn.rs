//! Local response normalisation across channels.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub local_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            local_size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

impl LrnParams {
    fn validate(&self) -> Result<()> {
        if self.local_size < 1 {
            return Err(Error::Config("LRN local_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Channel window `[lo, hi)` centred on `c`.
    fn window(&self, c: usize, channels: usize) -> (usize, usize) {
        let pre = (self.local_size - 1) / 2;
        let lo = c.saturating_sub(pre);
        let hi = (c + self.local_size - pre).min(channels);
        (lo, hi)
    }
}

/// Returns `(output, scale)`; `scale` is kept for the backward pass.
pub fn lrn_forward<T: Scalar>(input: &Tensor<T>, params: &LrnParams) -> Result<(Tensor<T>, Tensor<T>)> {
    params.validate()?;
    if input.shape().len() != 4 {
        return Err(Error::Config(format!("LRN expects NCHW input, got {:?}", input.shape())));
    }
    let (n, c, plane) = (input.dim(0), input.dim(1), input.dim(2) * input.dim(3));
    let alpha_n = T::from_f64_lossy(params.alpha / params.local_size as f64);
    let k = T::from_f64_lossy(params.k);
    let neg_beta = T::from_f64_lossy(-params.beta);
    let mut scale = Tensor::full(input.shape(), k);
    let mut out = Tensor::zeros(input.shape());
    let x = input.data();
    for b in 0..n {
        let base = b * c * plane;
        for ch in 0..c {
            let (lo, hi) = params.window(ch, c);
            let s = &mut scale.data_mut()[base + ch * plane..base + (ch + 1) * plane];
            for j in lo..hi {
                let src = &x[base + j * plane..base + (j + 1) * plane];
                s.iter_mut().zip(src).for_each(|(s, &v)| *s += alpha_n * v * v);
            }
        }
    }
    for ((o, &v), &s) in out.data_mut().iter_mut().zip(x).zip(scale.data()) {
        *o = v * s.powf(neg_beta);
    }
    Ok((out, scale))
}

pub fn lrn_backward<T: Scalar>(
    output_grad: &Tensor<T>,
    input: &Tensor<T>,
    output: &Tensor<T>,
    scale: &Tensor<T>,
    params: &LrnParams,
) -> Result<Tensor<T>> {
    params.validate()?;
    if output_grad.shape() != input.shape() || scale.shape() != input.shape() {
        return Err(Error::Internal("LRN backward state does not match its input".into()));
    }
    let (n, c, plane) = (input.dim(0), input.dim(1), input.dim(2) * input.dim(3));
    let neg_beta = T::from_f64_lossy(-params.beta);
    let coeff = T::from_f64_lossy(2.0 * params.alpha * params.beta / params.local_size as f64);
    let dy = output_grad.data();
    // ratio_j = dy_j * y_j / scale_j
    let ratio: Vec<T> = dy
        .iter()
        .zip(output.data())
        .zip(scale.data())
        .map(|((&g, &y), &s)| g * y / s)
        .collect();
    let mut dx = Tensor::zeros(input.shape());
    let pre = (params.local_size - 1) / 2;
    for b in 0..n {
        let base = b * c * plane;
        for ch in 0..c {
            // channels j whose window contains ch
            let lo = (ch + pre + 1).saturating_sub(params.local_size);
            let hi = (ch + pre + 1).min(c);
            let d = &mut dx.data_mut()[base + ch * plane..base + (ch + 1) * plane];
            for p in 0..plane {
                let idx = base + ch * plane + p;
                let mut acc = T::zero();
                for j in lo..hi {
                    acc += ratio[base + j * plane + p];
                }
                d[p] = dy[idx] * scale.data()[idx].powf(neg_beta) - coeff * input.data()[idx] * acc;
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::{assert_close, finite_difference, rand_tensor};
    use rand::SeedableRng;

    #[test]
    fn zero_in_zero_out() {
        let (y, _) = lrn_forward(&Tensor::<f64>::zeros(&[1, 4, 2, 2]), &LrnParams::default()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_closed_form() {
        let p = LrnParams {
            local_size: 1,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        };
        let (y, _) = lrn_forward(&Tensor::<f64>::full(&[1, 1, 1, 1], 1.0), &p).unwrap();
        let expected = 1.0 / (2.0f64 + 1e-4).powf(0.75);
        assert!((y.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_local_size_is_config_error() {
        let p = LrnParams {
            local_size: 0,
            ..LrnParams::default()
        };
        assert!(matches!(
            lrn_forward(&Tensor::<f32>::zeros(&[1, 1, 1, 1]), &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        // exaggerated alpha so the cross-channel term matters
        let p = LrnParams {
            local_size: 3,
            alpha: 0.5,
            beta: 0.75,
            k: 1.0,
        };
        let x = rand_tensor(&[1, 6, 3, 2], &mut rng);
        let probe = rand_tensor(&[1, 6, 3, 2], &mut rng);
        let (y, s) = lrn_forward(&x, &p).unwrap();
        let dx = lrn_backward(&probe, &x, &y, &s, &p).unwrap();
        let fd = finite_difference(&x, |t| {
            let (y, _) = lrn_forward(t, &p).unwrap();
            y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        });
        assert_close(dx.data(), &fd, 1e-3);
    }
}
