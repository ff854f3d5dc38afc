//! Grayscale and color rasters with intensities held in `[0, 1]`.
//!
//! Constructors that take raw buffers reject out-of-range values; the
//! closure-based constructors and setters clamp. `NaN` is treated as 0.

use crate::error::{Error, Result};

/// Linear RGB triple, every channel in `[0, 1]`.
pub type Rgb = [f64; 3];

pub const WHITE: Rgb = [1.0, 1.0, 1.0];
pub const BLACK: Rgb = [0.0, 0.0, 0.0];

#[inline]
pub(crate) fn unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub(crate) fn unit_rgb(c: Rgb) -> Rgb {
    [unit(c[0]), unit(c[1]), unit(c[2])]
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn check_area(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        Err(Error::EmptyImage { width, height })
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    /// All-zero image. Zero-area images are allowed here; only the
    /// resampling paths require a non-empty raster.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![unit(value); width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::IntensityOutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_vec_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                got: data.len(),
            });
        }
        data.iter_mut().for_each(|v| *v = unit(*v));
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(unit(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = unit(value);
    }

    /// Pixel value with zero outside the raster.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear sample in pixel-index coordinates (pixel centres at integers),
    /// treating everything outside the raster as 0.
    #[inline]
    pub fn sample_zero(&self, u: f64, v: f64) -> f64 {
        let x0 = u.floor();
        let y0 = v.floor();
        let fx = u - x0;
        let fy = v - y0;
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = lerp(self.get_or_zero(x0, y0), self.get_or_zero(x0 + 1, y0), fx);
        let bottom = lerp(
            self.get_or_zero(x0, y0 + 1),
            self.get_or_zero(x0 + 1, y0 + 1),
            fx,
        );
        lerp(top, bottom, fy)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| unit(f(v))).collect(),
        }
    }

    pub fn same_size(&self, other: &GrayImage) -> Result<()> {
        if self.dimensions() == other.dimensions() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self.dimensions(),
                right: other.dimensions(),
            })
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean_abs_diff(&self, other: &GrayImage) -> Result<f64> {
        self.same_size(other)?;
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.data.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl ColorImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![unit_rgb(color); width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<Rgb>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DataLength {
                width,
                height,
                got: data.len(),
            });
        }
        for (i, px) in data.iter().enumerate() {
            if let Some(&value) = px.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::IntensityOutOfRange { index: i, value });
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(unit_rgb(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            data: gray.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[Rgb] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        self.data[y * self.width + x] = unit_rgb(color);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Rgb] {
        &mut self.data
    }

    /// Bilinear sample with edge replication. Coordinates are pixel indices.
    pub fn sample_clamped(&self, u: f64, v: f64) -> Rgb {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let u = u.clamp(0.0, max_x);
        let v = v.clamp(0.0, max_y);
        let x0 = u.floor() as usize;
        let y0 = v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let (a, b, c, d) = (
            self.get(x0, y0),
            self.get(x1, y0),
            self.get(x0, y1),
            self.get(x1, y1),
        );
        let mut out = [0.0; 3];
        for ch in 0..3 {
            out[ch] = lerp(lerp(a[ch], b[ch], fx), lerp(c[ch], d[ch], fx), fy);
        }
        out
    }

    pub fn mean_squared_diff(&self, other: &ColorImage) -> Result<f64> {
        if self.dimensions() != other.dimensions() {
            return Err(Error::DimensionMismatch {
                left: self.dimensions(),
                right: other.dimensions(),
            });
        }
        Ok(squared_error(&self.data, &other.data) / (3 * self.data.len()).max(1) as f64)
    }
}

pub(crate) fn squared_error(a: &[Rgb], b: &[Rgb]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d0 = p[0] - q[0];
            let d1 = p[1] - q[1];
            let d2 = p[2] - q[2];
            d0 * d0 + d1 * d1 + d2 * d2
        })
        .sum()
}

/// Resample a line image to `target_height` rows, keeping the aspect ratio.
///
/// Uses bilinear interpolation on pixel centres with edge replication. An
/// image that already has the target height is returned unchanged, which
/// makes the operation idempotent.
pub fn normalize_line(raw: &ColorImage, target_height: usize) -> Result<ColorImage> {
    check_area(raw.width, raw.height)?;
    check_area(1, target_height)?;
    if raw.height == target_height {
        return Ok(raw.clone());
    }
    let ratio = raw.height as f64 / target_height as f64;
    let width = ((raw.width as f64 / ratio).round() as usize).max(1);
    let x_ratio = raw.width as f64 / width as f64;
    Ok(ColorImage::from_fn(width, target_height, |x, y| {
        let u = (x as f64 + 0.5) * x_ratio - 0.5;
        let v = (y as f64 + 0.5) * ratio - 0.5;
        raw.sample_clamped(u, v)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> ColorImage {
        ColorImage::from_fn(w, h, |x, y| {
            let v = (x + 2 * y) as f64 / (w + 2 * h) as f64;
            [v, 1.0 - v, 0.5]
        })
    }

    #[test]
    fn identity_at_target_height() {
        let img = gradient(200, 64);
        assert_eq!(normalize_line(&img, 64).unwrap(), img);
    }

    #[test]
    fn uniform_halving() {
        let out = normalize_line(&gradient(400, 128), 64).unwrap();
        assert_eq!(out.dimensions(), (200, 64));
    }

    #[test]
    fn constant_stays_constant() {
        let img = ColorImage::filled(300, 100, [0.5, 0.5, 0.5]);
        let out = normalize_line(&img, 64).unwrap();
        assert_eq!(out.dimensions(), (192, 64));
        assert!(out.data().iter().all(|p| *p == [0.5, 0.5, 0.5]));
    }

    #[test]
    fn idempotent() {
        let once = normalize_line(&gradient(333, 97), 64).unwrap();
        let twice = normalize_line(&once, 64).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_area_rejected() {
        let img = ColorImage::filled(0, 10, WHITE);
        assert!(matches!(
            normalize_line(&img, 64),
            Err(Error::EmptyImage { .. })
        ));
    }

    #[test]
    fn raw_constructors_reject_out_of_range() {
        assert!(GrayImage::from_vec(2, 1, vec![0.5, 1.5]).is_err());
        assert!(GrayImage::from_vec(2, 1, vec![0.5, f64::NAN]).is_err());
        assert!(ColorImage::from_vec(1, 1, vec![[0.0, -0.1, 0.0]]).is_err());
        let clamped = GrayImage::from_vec_clamped(2, 1, vec![-3.0, 7.0]).unwrap();
        assert_eq!(clamped.data(), &[0.0, 1.0]);
        assert_eq!(GrayImage::from_fn(1, 1, |_, _| f64::NAN).data(), &[0.0]);
    }

    #[test]
    fn bilinear_sample_hits_pixels_exactly() {
        let img = GrayImage::from_fn(3, 3, |x, y| (x * 3 + y) as f64 / 10.0);
        assert_eq!(img.sample_zero(1.0, 2.0), img.get(1, 2));
        assert_eq!(img.sample_zero(-1.0, 0.0), 0.0);
        assert!((img.sample_zero(0.5, 0.0) - 0.15).abs() < 1e-12);
    }
}
