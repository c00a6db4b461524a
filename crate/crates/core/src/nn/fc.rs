//! Fully connected layers over `R x D` row batches.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

fn rows_and_dim<T: Scalar>(input: &Tensor<T>) -> (usize, usize) {
    let rows = input.shape().first().copied().unwrap_or(0);
    let dim = if rows == 0 { input.shape()[1..].iter().product() } else { input.len() / rows };
    (rows, dim)
}

/// `y = x W^T + b` with `W` of shape `out x D`. Inputs with more than two
/// axes are flattened per row.
pub fn fc_forward<T: Scalar>(
    name: &str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (rows, dim) = rows_and_dim(input);
    let (out, wdim) = (weight.dim(0), weight.dim(1));
    if dim != wdim || bias.len() != out {
        return Err(Error::Config(format!(
            "layer {name}: input width {dim} does not match weight {:?} / bias {}",
            weight.shape(),
            bias.len()
        )));
    }
    let mut y = Tensor::zeros(&[rows, out]);
    for row in y.data_mut().chunks_mut(out) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(
        rows,
        dim,
        out,
        T::one(),
        input.data(),
        dim as isize,
        1,
        weight.data(),
        1,
        dim as isize,
        T::one(),
        y.data_mut(),
        out as isize,
        1,
    );
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct FcGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fc_backward<T: Scalar>(
    name: &str,
    output_grad: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<FcGrads<T>> {
    let (rows, dim) = rows_and_dim(saved_input);
    let out = weight.dim(0);
    if output_grad.shape() != [rows, out] {
        return Err(Error::Internal(format!(
            "layer {name}: output gradient {:?} does not match forward output [{rows}, {out}]",
            output_grad.shape()
        )));
    }
    let dy = output_grad.data();
    let mut dw = Tensor::zeros(weight.shape());
    // dW = dY^T X
    T::gemm(
        out,
        rows,
        dim,
        T::one(),
        dy,
        1,
        out as isize,
        saved_input.data(),
        dim as isize,
        1,
        T::zero(),
        dw.data_mut(),
        dim as isize,
        1,
    );
    let mut db = Tensor::zeros(&[out]);
    for row in dy.chunks(out) {
        db.data_mut().iter_mut().zip(row).for_each(|(b, &g)| *b += g);
    }
    let mut dx = Tensor::zeros(saved_input.shape());
    // dX = dY W
    T::gemm(
        rows,
        out,
        dim,
        T::one(),
        dy,
        out as isize,
        1,
        weight.data(),
        dim as isize,
        1,
        T::zero(),
        dx.data_mut(),
        dim as isize,
        1,
    );
    Ok(FcGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
