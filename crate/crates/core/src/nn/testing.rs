//! Finite-difference helpers shared by the unit tests.

use rand::Rng;

use crate::nn::Tensor;

pub fn rand_tensor<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    let len = shape.iter().product();
    Tensor::from_vec(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences of `f` with respect to every entry of `at`, step 1e-4.
pub fn finite_difference(at: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let eps = 1e-4;
    let mut probe = at.clone();
    (0..at.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + eps;
            let up = f(&probe);
            probe.data_mut()[i] = orig - eps;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn assert_close(analytic: &[f64], numeric: &[f64], rel_tol: f64) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let diff = (a - n).abs();
        let scale = a.abs().max(n.abs());
        assert!(
            diff < 1e-7 || diff / scale < rel_tol,
            "entry {i}: analytic {a} vs numeric {n}"
        );
    }
}
