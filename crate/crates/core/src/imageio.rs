//! 8-bit PNG input/output. A value `v` in [0, 1] is stored as `round(v * 255)`.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor_engine::Tensor;

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds every value to the nearest representable 8-bit level.
pub fn quantize_tensor(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| quantize(v) as f32 / 255.0)
}

/// Reads an image as a (1, 3, H, W) tensor in [0, 1].
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?
        .to_rgb8();
    Ok(rgb_to_tensor(&img))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros([1, 3, h, w]);
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(0, c, y as usize, x as usize, px[c] as f32 / 255.0);
        }
    }
    t
}

/// Batch item `n` of a 3-channel tensor as an 8-bit image.
pub fn tensor_to_rgb(t: &Tensor<f32>, n: usize) -> RgbImage {
    let (h, w) = (t.height(), t.width());
    RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([
            quantize(t.at(n, 0, y, x)),
            quantize(t.at(n, 1, y, x)),
            quantize(t.at(n, 2, y, x)),
        ])
    })
}

pub fn write_rgb(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    if t.channels() != 3 {
        return Err(Error::invalid(
            "write_rgb",
            format!("expected 3 channels, got {}", t.channels()),
        ));
    }
    tensor_to_rgb(t, 0)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
}

/// Reads an 8-bit grayscale PNG as a (1, 1, H, W) map scaled to [0, `max_value`].
pub fn read_gray_scaled(path: impl AsRef<Path>, max_value: f32) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let img: GrayImage = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p[0] as f32 / 255.0 * max_value).collect();
    Tensor::from_vec([1, 1, h, w], data)
}
