//! 2-D cross-correlation over NCHW tensors, lowered to GEMM through im2col.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// Output length along one axis: `floor((input + 2*pad - kernel) / stride) + 1`.
///
/// `None` when the padded input is smaller than the kernel or the stride is zero.
pub fn output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }
}

fn geometry<T: Scalar>(
    name: &str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Geometry> {
    if input.shape().len() != 4 || weight.shape().len() != 4 {
        return Err(Error::Config(format!(
            "layer {name}: conv expects NCHW input and OIHW weight, got {:?} and {:?}",
            input.shape(),
            weight.shape()
        )));
    }
    let (c, h, w) = (input.dim(1), input.dim(2), input.dim(3));
    let (kc, kh, kw) = (weight.dim(1), weight.dim(2), weight.dim(3));
    if c != kc {
        return Err(Error::Config(format!(
            "layer {name}: input has {c} channels, kernel expects {kc}"
        )));
    }
    let out_h = output_size(h, kh, stride, pad);
    let out_w = output_size(w, kw, stride, pad);
    match (out_h, out_w) {
        (Some(out_h), Some(out_w)) => Ok(Geometry {
            channels: c,
            height: h,
            width: w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            pad,
            out_h,
            out_w,
        }),
        _ => Err(Error::Config(format!(
            "layer {name}: {h}x{w} input (pad {pad}) is smaller than the {kh}x{kw} kernel"
        ))),
    }
}

fn im2col<T: Scalar>(image: &[T], g: &Geometry, col: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.channels {
        let plane = &image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let dst = &mut col[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &Geometry, image: &mut [T]) {
    let positions = g.positions();
    for c in 0..g.channels {
        let plane = &mut image[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..g.kernel_h {
            for kj in 0..g.kernel_w {
                let row = (c * g.kernel_h + ki) * g.kernel_w + kj;
                let src = &col[row * positions..(row + 1) * positions];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let base = iy as usize * g.width;
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.width as isize {
                            plane[base + ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution (cross-correlation, no kernel flip) of an `N x C x H x W`
/// input with `O x C x kh x kw` weights and a length-`O` bias.
pub fn conv2d_forward<T: Scalar>(
    name: &str,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = geometry(name, input, weight, stride, pad)?;
    let out_c = weight.dim(0);
    if bias.len() != out_c {
        return Err(Error::Config(format!(
            "layer {name}: bias has {} entries for {out_c} output channels",
            bias.len()
        )));
    }
    let batch = input.dim(0);
    let (rows, positions) = (g.col_rows(), g.positions());
    let mut col = vec![T::zero(); rows * positions];
    let mut out = Tensor::zeros(&[batch, out_c, g.out_h, g.out_w]);
    let in_stride = g.channels * g.height * g.width;
    for n in 0..batch {
        im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &g, &mut col);
        let dst = &mut out.data_mut()[n * out_c * positions..(n + 1) * out_c * positions];
        for (o, chunk) in dst.chunks_mut(positions).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias.data()[o]);
        }
        T::gemm(
            out_c,
            rows,
            positions,
            T::one(),
            weight.data(),
            rows as isize,
            1,
            &col,
            positions as isize,
            1,
            T::one(),
            dst,
            positions as isize,
            1,
        );
    }
    Ok(out)
}

/// Gradients of a convolution with respect to its three operands.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for it (first layer of a network).
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    name: &str,
    output_grad: &Tensor<T>,
    saved_input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry(name, saved_input, weight, stride, pad)?;
    let out_c = weight.dim(0);
    let batch = saved_input.dim(0);
    if output_grad.shape() != [batch, out_c, g.out_h, g.out_w] {
        return Err(Error::Internal(format!(
            "layer {name}: output gradient {:?} does not match forward output {:?}",
            output_grad.shape(),
            [batch, out_c, g.out_h, g.out_w]
        )));
    }
    let (rows, positions) = (g.col_rows(), g.positions());
    let in_stride = g.channels * g.height * g.width;
    let mut col = vec![T::zero(); rows * positions];
    let mut dcol = vec![T::zero(); rows * positions];
    let mut dw = Tensor::zeros(weight.shape());
    let mut db = Tensor::zeros(&[out_c]);
    let mut dx = need_input_grad.then(|| Tensor::zeros(saved_input.shape()));

    for n in 0..batch {
        let dy = &output_grad.data()[n * out_c * positions..(n + 1) * out_c * positions];
        for (o, chunk) in dy.chunks(positions).enumerate() {
            db.data_mut()[o] += chunk.iter().copied().sum::<T>();
        }
        im2col(&saved_input.data()[n * in_stride..(n + 1) * in_stride], &g, &mut col);
        // dW += dY * col^T
        T::gemm(
            out_c,
            positions,
            rows,
            T::one(),
            dy,
            positions as isize,
            1,
            &col,
            1,
            positions as isize,
            T::one(),
            dw.data_mut(),
            rows as isize,
            1,
        );
        if let Some(dx) = dx.as_mut() {
            // dcol = W^T * dY
            T::gemm(
                rows,
                out_c,
                positions,
                T::one(),
                weight.data(),
                1,
                rows as isize,
                dy,
                positions as isize,
                1,
                T::zero(),
                &mut dcol,
                positions as isize,
                1,
            );
            col2im(&dcol, &g, &mut dx.data_mut()[n * in_stride..(n + 1) * in_stride]);
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
