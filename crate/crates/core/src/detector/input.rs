//! Conversion of fused images into network input tensors.

use image::imageops::{self, FilterType};

use crate::bbox::BBox;
use crate::error::Result;
use crate::image::FusedImage;
use crate::nn::{Network, Tensor};
use crate::scalar::Scalar;

/// Input size after scaling, at least one pixel per side.
pub fn scaled_dims(width: usize, height: usize, scale: f64) -> (usize, usize) {
    let s = |v: usize| ((v as f64 * scale).round() as usize).max(1);
    (s(width), s(height))
}

/// Per-plane affine map applied to raw pixel values: `(v - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputNorm {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for InputNorm {
    /// `[0, 255]` to `[-1, 1]` on every plane.
    fn default() -> Self {
        InputNorm {
            mean: [127.5; 3],
            std: [127.5; 3],
        }
    }
}

impl InputNorm {
    pub fn of<T: Scalar>(network: &Network<T>) -> Self {
        let (mean, std) = network.input_normalization();
        InputNorm { mean, std }
    }

    /// Mean and std of each plane over every pixel of `images`. A plane with
    /// a std below one intensity level gets std 1.
    pub fn estimate<'a>(images: impl IntoIterator<Item = &'a FusedImage>) -> Self {
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut n = 0.0;
        for img in images {
            for (c, plane) in img.planes.iter().enumerate() {
                for &v in plane.values() {
                    let v = f64::from(v);
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += (img.width() * img.height()) as f64;
        }
        if n == 0.0 {
            return Self::default();
        }
        let mean = sum.map(|s| s / n);
        let std = std::array::from_fn(|c| (sq[c] / n - mean[c] * mean[c]).max(0.0).sqrt().max(1.0));
        InputNorm { mean, std }
    }
}

/// `1 x 3 x H x W` tensor in B, G, R plane order with each plane normalised
/// by `norm`, optionally resized and mirrored.
pub fn image_tensor<T: Scalar>(image: &FusedImage, scale: f64, flip: bool, norm: &InputNorm) -> Result<Tensor<T>> {
    let (w, h) = scaled_dims(image.width(), image.height(), scale);
    let mut data = Vec::with_capacity(3 * w * h);
    for (c, plane) in image.planes.iter().enumerate() {
        let (mean, std) = (norm.mean[c], norm.std[c]);
        let resized;
        let values: &[u8] = if (w, h) == plane.dims() {
            plane.values()
        } else {
            resized = imageops::resize(&plane.to_gray_image(), w as u32, h as u32, FilterType::Triangle).into_raw();
            &resized
        };
        for y in 0..h {
            for x in 0..w {
                let sx = if flip { w - 1 - x } else { x };
                data.push(T::from_f64_lossy((f64::from(values[y * w + sx]) - mean) / std));
            }
        }
    }
    Tensor::from_vec(&[1, 3, h, w], data)
}

/// Maps a box from original pixels into the input tensor's frame.
pub fn to_input_frame(b: &BBox, scale: f64, flip: bool, input_width: usize) -> BBox {
    let s = b.scale(scale);
    if flip {
        BBox::new(input_width as f64 - s.x2(), s.y, s.w, s.h)
    } else {
        s
    }
}
