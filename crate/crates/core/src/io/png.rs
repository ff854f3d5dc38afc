use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb as Px};

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage};

/// Decode a PNG into [0, 1] colour. 8-bit samples map as `v / 255`,
/// deeper ones as `v / 65535`; alpha is ignored.
pub fn read_png(path: &Path) -> Result<ColorImage> {
    let img = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        source => Error::Image {
            path: path.to_path_buf(),
            source,
        },
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => img
            .to_rgb8()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 255.0))
            .collect(),
        _ => img
            .to_rgb16()
            .pixels()
            .map(|p| p.0.map(|v| v as f64 / 65535.0))
            .collect(),
    };
    ColorImage::from_vec(w, h, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save(img: DynamicImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_path_buf(),
                source,
            },
        })
}

/// 8-bit RGB PNG.
pub fn write_png(image: &ColorImage, path: &Path) -> Result<()> {
    let (w, h) = image.dimensions();
    let raw: Vec<u8> = image.data().iter().flat_map(|c| c.map(quantize)).collect();
    let buf = ImageBuffer::<Px<u8>, _>::from_raw(w as u32, h as u32, raw).expect("buffer size");
    save(DynamicImage::ImageRgb8(buf), path)
}

/// 8-bit grayscale PNG.
pub fn write_gray_png(image: &GrayImage, path: &Path) -> Result<()> {
    let (w, h) = image.dimensions();
    let raw: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, raw).expect("buffer size");
    save(DynamicImage::ImageLuma8(buf), path)
}
