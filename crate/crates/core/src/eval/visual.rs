//! Images and plots for inspection: feature maps, box overlays, PR curves.

use std::fs;
use std::path::Path;

use image::{GrayImage, Rgb, RgbImage};

use crate::bbox::{BBox, Detection};
use crate::detector::{image_tensor, InputNorm};
use crate::error::{Error, Result};
use crate::eval::metrics::PrCurve;
use crate::image::{ensure_parent, normalized_gray, FusedImage};
use crate::nn::Network;
use crate::scalar::Scalar;

/// How channels of a feature map collapse into one plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Projection {
    #[default]
    Max,
    Mean,
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Projection::Max),
            "mean" => Ok(Projection::Mean),
            _ => Err(Error::Config(format!("unknown projection {s:?}, expected max or mean"))),
        }
    }
}

/// Activations of `layer` projected over channels and stretched to 8 bits.
pub fn feature_map_image<T: Scalar>(
    network: &Network<T>,
    image: &FusedImage,
    layer: &str,
    projection: Projection,
) -> Result<GrayImage> {
    let input = image_tensor::<T>(image, 1.0, false, &InputNorm::of(network))?;
    let act = network.activations(&input, layer)?;
    let (c, h, w) = (act.dim(1), act.dim(2), act.dim(3));
    let data = act.data();
    let values: Vec<f64> = (0..h * w)
        .map(|p| {
            let it = (0..c).map(|ch| data[ch * h * w + p].to_f64_lossy());
            match projection {
                Projection::Max => it.fold(f64::NEG_INFINITY, f64::max),
                Projection::Mean => it.sum::<f64>() / c as f64,
            }
        })
        .collect();
    Ok(normalized_gray(w, h, &values))
}

pub fn dump_feature_map<T: Scalar>(
    network: &Network<T>,
    image: &FusedImage,
    layer: &str,
    projection: Projection,
    path: &Path,
) -> Result<(usize, usize)> {
    let img = feature_map_image(network, image, layer, projection)?;
    ensure_parent(path)?;
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((img.width() as usize, img.height() as usize))
}

fn draw_rect(img: &mut RgbImage, b: &BBox, colour: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x1 = (b.x.round() as i64).clamp(0, w - 1);
    let y1 = (b.y.round() as i64).clamp(0, h - 1);
    let x2 = ((b.x2().round() as i64) - 1).clamp(0, w - 1);
    let y2 = ((b.y2().round() as i64) - 1).clamp(0, h - 1);
    for x in x1..=x2 {
        img.put_pixel(x as u32, y1 as u32, colour);
        img.put_pixel(x as u32, y2 as u32, colour);
    }
    for y in y1..=y2 {
        img.put_pixel(x1 as u32, y as u32, colour);
        img.put_pixel(x2 as u32, y as u32, colour);
    }
}

/// The fused image with detections outlined in green and, optionally,
/// ground truth in red.
pub fn overlay(image: &FusedImage, dets: &[Detection], gts: &[BBox]) -> RgbImage {
    let mut img = image.to_rgb_image();
    if img.width() == 0 || img.height() == 0 {
        return img;
    }
    for g in gts {
        draw_rect(&mut img, g, Rgb([255, 0, 0]));
    }
    for d in dets {
        draw_rect(&mut img, &d.bbox, Rgb([0, 255, 0]));
    }
    img
}

pub fn save_overlay(image: &FusedImage, dets: &[Detection], gts: &[BBox], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    overlay(image, dets, gts).save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Standalone SVG with one stepped PR curve per labelled series.
pub fn pr_plot_svg(curves: &[(&str, &PrCurve)]) -> String {
    const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let (size, pad) = (400.0, 50.0);
    let sx = |r: f64| pad + r * size;
    let sy = |p: f64| pad + (1.0 - p) * size;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect x=\"{pad}\" y=\"{pad}\" width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{bx}\" text-anchor=\"middle\">recall</text>\n\
         <text x=\"15\" y=\"{cx}\" transform=\"rotate(-90 15 {cx})\" text-anchor=\"middle\">precision</text>\n",
        w = size + 2.0 * pad,
        cx = pad + size / 2.0,
        bx = size + 2.0 * pad - 10.0,
    );
    for t in 0..=10 {
        let v = t as f64 / 10.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{v:.1}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.1}</text>\n",
            sx(v),
            pad + size + 15.0,
            pad - 5.0,
            sy(v) + 4.0
        ));
    }
    for (i, (label, curve)) in curves.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let mut pts = vec![(0.0, curve.points.first().map_or(0.0, |p| p.1))];
        for &(r, p) in &curve.points {
            let last = pts.last().copied().unwrap_or((0.0, p));
            pts.push((r, last.1));
            pts.push((r, p));
        }
        let path: Vec<String> = pts.iter().map(|(r, p)| format!("{:.2},{:.2}", sx(*r), sy(*p))).collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1.5\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{colour}\">{} (AP {:.3})</text>\n",
            path.join(" "),
            pad + 10.0,
            pad + 20.0 + 16.0 * i as f64,
            xml_escape(label),
            curve.ap
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn save_pr_plot(curves: &[(&str, &PrCurve)], path: &Path) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, pr_plot_svg(curves)).map_err(|e| Error::io(path, e))
}
