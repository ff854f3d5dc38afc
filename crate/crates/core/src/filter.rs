//! Reference masks, filtered prototypes, and automatic failure flags.
//!
//! The mask is a blurred, dilated binarisation of the reference prototype:
//! `M = G * D(R > t)`. A finetuned prototype `P` is filtered as `F = M . P`
//! (pixel-wise), and the filtering error `e = sum((1 - M) . [P > t'])`
//! counts ink of `P` that the mask removes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::model::ModelState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuringElement {
    /// `(2r + 1)^2` square.
    Square,
    /// Offsets with `dx^2 + dy^2 < (r + 1/2)^2`.
    Disk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub t: f64,
    pub dilate_radius: usize,
    pub sigma: f64,
    pub t_prime: f64,
    pub warn_at: f64,
    pub fail_at: f64,
    pub element: StructuringElement,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            t: 0.8,
            dilate_radius: 2,
            sigma: 2.0,
            t_prime: 0.65,
            warn_at: 15.0,
            fail_at: 30.0,
            element: StructuringElement::Square,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::config("filter.t", "must lie in (0, 1)"));
        }
        if !(self.t_prime > 0.0 && self.t_prime < 1.0) {
            return Err(Error::config("filter.t_prime", "must lie in (0, 1)"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("filter.sigma", "must be positive"));
        }
        if !(self.warn_at >= 0.0 && self.warn_at <= self.fail_at) {
            return Err(Error::config(
                "filter.warn_at",
                "must satisfy 0 <= warn_at <= fail_at",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Ok,
    /// Shown in orange.
    Warn,
    /// Shown in red.
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub char_id: char,
    pub mask: GrayImage,
    pub filtered: GrayImage,
    pub error: f64,
    pub flag: Flag,
}

/// 1 where the input is strictly greater than `t`, else 0.
pub fn binarize(image: &GrayImage, t: f64) -> GrayImage {
    image.map(|v| if v > t { 1.0 } else { 0.0 })
}

fn check_binary(mask: &GrayImage) -> Result<()> {
    match mask
        .data()
        .iter()
        .enumerate()
        .find(|(_, &v)| v != 0.0 && v != 1.0)
    {
        Some((index, &value)) => Err(Error::NonBinaryMask { index, value }),
        None => Ok(()),
    }
}

/// Binary dilation with the square structuring element.
pub fn dilate(mask: &GrayImage, radius: usize) -> Result<GrayImage> {
    dilate_with(mask, radius, StructuringElement::Square)
}

pub fn dilate_with(
    mask: &GrayImage,
    radius: usize,
    element: StructuringElement,
) -> Result<GrayImage> {
    check_binary(mask)?;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let (w, h) = mask.dimensions();
    let r = radius as isize;
    match element {
        StructuringElement::Square => {
            // separable: running max along rows, then along columns
            let rows = GrayImage::from_fn(w, h, |x, y| {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                (lo..=hi).map(|xx| mask.get(xx, y)).fold(0.0, f64::max)
            });
            Ok(GrayImage::from_fn(w, h, |x, y| {
                let lo = y.saturating_sub(radius);
                let hi = (y + radius).min(h - 1);
                (lo..=hi).map(|yy| rows.get(x, yy)).fold(0.0, f64::max)
            }))
        }
        StructuringElement::Disk => {
            let offsets: Vec<(isize, isize)> = (-r..=r)
                .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
                .filter(|(dx, dy)| 4 * (dx * dx + dy * dy) < (2 * r + 1) * (2 * r + 1))
                .collect();
            Ok(GrayImage::from_fn(w, h, |x, y| {
                let hit = offsets
                    .iter()
                    .any(|&(dx, dy)| mask.get_or_zero(x as isize + dx, y as isize + dy) == 1.0);
                if hit {
                    1.0
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Normalised discrete Gaussian of radius `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(image: &GrayImage, sigma: f64) -> GrayImage {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = image.dimensions();
    if w == 0 || h == 0 {
        return image.clone();
    }
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, g) in kernel.iter().enumerate() {
                acc += g * image.get(clamp(x as isize + k as isize - radius, w), y);
            }
            horizontal[y * w + x] = acc;
        }
    }
    GrayImage::from_fn(w, h, |x, y| {
        let mut acc = 0.0;
        for (k, g) in kernel.iter().enumerate() {
            acc += g * horizontal[clamp(y as isize + k as isize - radius, h) * w + x];
        }
        acc
    })
}

/// `M = G * D(R > t)`.
pub fn reference_mask(reference: &GrayImage, params: &FilterParams) -> Result<GrayImage> {
    params.validate()?;
    let support = binarize(reference, params.t);
    let dilated = dilate_with(&support, params.dilate_radius, params.element)?;
    Ok(gaussian_blur(&dilated, params.sigma))
}

/// `F = M . P`.
pub fn filter_prototype(mask: &GrayImage, prototype: &GrayImage) -> Result<GrayImage> {
    mask.same_size(prototype)?;
    let data = mask
        .data()
        .iter()
        .zip(prototype.data())
        .map(|(m, p)| m * p)
        .collect();
    GrayImage::from_vec_clamped(mask.width(), mask.height(), data)
}

/// `e = sum over pixels of (1 - M) . [P > t']`, in pixel units.
pub fn filtering_error(
    mask: &GrayImage,
    prototype: &GrayImage,
    params: &FilterParams,
) -> Result<f64> {
    mask.same_size(prototype)?;
    Ok(mask
        .data()
        .iter()
        .zip(prototype.data())
        .filter(|(_, &p)| p > params.t_prime)
        .map(|(m, _)| 1.0 - m)
        .sum())
}

pub fn flag(error: f64, params: &FilterParams) -> Flag {
    if error > params.fail_at {
        Flag::Fail
    } else if error > params.warn_at {
        Flag::Warn
    } else {
        Flag::Ok
    }
}

pub fn filter_report(
    char_id: char,
    reference: &GrayImage,
    prototype: &GrayImage,
    params: &FilterParams,
) -> Result<FilterReport> {
    let mask = reference_mask(reference, params)?;
    let filtered = filter_prototype(&mask, prototype)?;
    let error = filtering_error(&mask, prototype, params)?;
    Ok(FilterReport {
        char_id,
        mask,
        filtered,
        error,
        flag: flag(error, params),
    })
}

pub(crate) fn check_same_geometry(a: &ModelState, b: &ModelState) -> Result<()> {
    if a.proto_side != b.proto_side || a.line_height != b.line_height {
        return Err(Error::GeometryMismatch(format!(
            "prototype side {} / line height {} vs {} / {}",
            a.proto_side, a.line_height, b.proto_side, b.line_height
        )));
    }
    if a.alphabet != b.alphabet {
        return Err(Error::GeometryMismatch("alphabets differ".into()));
    }
    Ok(())
}

/// Filter every prototype of `model` with masks from `reference`.
pub fn filter_model(
    reference: &ModelState,
    model: &ModelState,
    params: &FilterParams,
) -> Result<Vec<FilterReport>> {
    check_same_geometry(reference, model)?;
    reference
        .prototypes
        .iter()
        .map(|r| {
            let p = model
                .prototype(r.char_id)
                .ok_or(Error::UnknownCharacter(r.char_id))?;
            filter_report(r.char_id, &r.image, &p.image, params)
        })
        .collect()
}
