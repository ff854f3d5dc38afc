use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage, Rgb};
use crate::model::{Placement, Prototype};

/// A line produced by compositing, together with what produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedLine {
    pub image: ColorImage,
    pub placements: Vec<Placement>,
    pub bg_color: Rgb,
}

/// Scaled and positioned prototype intensities on the line pixel grid.
///
/// Covers line pixels `x0..x0+width` by `y0..y0+height`; coordinates may
/// fall outside the canvas and are clipped by the caller.
#[derive(Debug, Clone)]
pub(crate) struct AlphaPatch {
    pub x0: isize,
    pub y0: isize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl AlphaPatch {
    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

#[inline]
pub(crate) fn top_edge(line_height: usize, side: usize, scale: f64) -> f64 {
    (line_height as f64 - scale * side as f64) / 2.0
}

/// Prototype coordinate seen by a line pixel centre.
#[inline]
pub(crate) fn to_proto(px: f64, origin: f64, scale: f64) -> f64 {
    (px + 0.5 - origin) / scale - 0.5
}

/// Line coordinate (pixel-index space) of a prototype pixel centre.
#[inline]
pub(crate) fn to_line(u: f64, origin: f64, scale: f64) -> f64 {
    origin + (u + 0.5) * scale - 0.5
}

pub(crate) fn alpha_patch(proto: &GrayImage, x: f64, scale: f64, line_height: usize) -> AlphaPatch {
    let kw = proto.width() as f64;
    let kh = proto.height() as f64;
    let top = top_edge(line_height, proto.height(), scale);
    let x0 = (x - 0.5 * scale - 0.5).floor() as isize;
    let x1 = (x + scale * (kw + 0.5) - 0.5).ceil() as isize;
    let y0 = (top - 0.5 * scale - 0.5).floor() as isize;
    let y1 = (top + scale * (kh + 0.5) - 0.5).ceil() as isize;
    let width = (x1 - x0 + 1) as usize;
    let height = (y1 - y0 + 1) as usize;
    let mut data = Vec::with_capacity(width * height);
    for py in y0..=y1 {
        let v = to_proto(py as f64, top, scale);
        for px in x0..=x1 {
            let u = to_proto(px as f64, x, scale);
            data.push(proto.sample_zero(u, v));
        }
    }
    AlphaPatch {
        x0,
        y0,
        width,
        height,
        data,
    }
}

pub(crate) fn find_prototype(prototypes: &[Prototype], c: char) -> Result<&Prototype> {
    prototypes
        .iter()
        .find(|p| p.char_id == c)
        .ok_or(Error::UnknownCharacter(c))
}

/// Indices of `placements` sorted left to right; ties keep input order.
pub(crate) fn left_to_right(placements: &[Placement]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..placements.len()).collect();
    order.sort_by(|&a, &b| placements[a].x.total_cmp(&placements[b].x));
    order
}

/// Over-composite `placements` onto a uniform background.
///
/// Each prototype acts as the alpha of its glyph:
/// `out = (1 - alpha) * out + alpha * fg`, applied left to right. Glyph
/// pixels falling outside the canvas are dropped with a warning.
pub fn composite_line(
    bg_color: Rgb,
    width: usize,
    height: usize,
    placements: &[Placement],
    prototypes: &[Prototype],
) -> Result<ColorImage> {
    let mut canvas = ColorImage::filled(width, height, bg_color);
    for i in left_to_right(placements) {
        let p = &placements[i];
        let proto = find_prototype(prototypes, p.char_id)?;
        if !(p.scale > 0.0) {
            return Err(Error::config("placement.scale", "must be positive"));
        }
        let patch = alpha_patch(&proto.image, p.x, p.scale, height);
        let clipped = blend_patch(&mut canvas, &patch, p.fg_color);
        if clipped {
            log::debug!(
                "glyph {:?} at x={:.2} extends past the {}x{} canvas; clipped",
                p.char_id,
                p.x,
                width,
                height
            );
        }
    }
    Ok(canvas)
}

/// Blend one patch into `canvas`; returns whether any ink was clipped.
pub(crate) fn blend_patch(canvas: &mut ColorImage, patch: &AlphaPatch, fg: Rgb) -> bool {
    let (w, h) = canvas.dimensions();
    let fg = crate::image::unit_rgb(fg);
    let data = canvas.data_mut();
    let mut clipped = false;
    for row in 0..patch.height {
        let py = patch.y0 + row as isize;
        for col in 0..patch.width {
            let a = patch.get(col, row);
            if a == 0.0 {
                continue;
            }
            let px = patch.x0 + col as isize;
            if px < 0 || py < 0 || px as usize >= w || py as usize >= h {
                clipped = true;
                continue;
            }
            let out = &mut data[py as usize * w + px as usize];
            for ch in 0..3 {
                out[ch] = (1.0 - a) * out[ch] + a * fg[ch];
            }
        }
    }
    clipped
}

/// Convenience wrapper returning the image with its placements.
pub fn render_line(
    bg_color: Rgb,
    width: usize,
    height: usize,
    placements: Vec<Placement>,
    prototypes: &[Prototype],
) -> Result<RenderedLine> {
    let image = composite_line(bg_color, width, height, &placements, prototypes)?;
    Ok(RenderedLine {
        image,
        placements,
        bg_color,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{BLACK, WHITE};

    fn solid(c: char, side: usize, v: f64) -> Prototype {
        Prototype::new(c, GrayImage::filled(side, side, v))
    }

    fn place(c: char, x: f64, fg: Rgb) -> Placement {
        Placement {
            char_id: c,
            x,
            scale: 1.0,
            fg_color: fg,
        }
    }

    #[test]
    fn no_glyphs_gives_background() {
        let img = composite_line(WHITE, 20, 8, &[], &[]).unwrap();
        assert!(img.data().iter().all(|p| *p == WHITE));
    }

    #[test]
    fn opaque_glyph_covers_its_footprint_exactly() {
        let protos = [solid('a', 8, 1.0)];
        let img = composite_line(WHITE, 30, 8, &[place('a', 5.0, BLACK)], &protos).unwrap();
        for y in 0..8 {
            for x in 0..30 {
                let expect = if (5..13).contains(&x) { BLACK } else { WHITE };
                assert_eq!(img.get(x, y), expect, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn quarter_alpha_over_white() {
        // (1 - 0.25) * 1 + 0.25 * 0
        let protos = [solid('a', 4, 0.25)];
        let img = composite_line(WHITE, 4, 4, &[place('a', 0.0, BLACK)], &protos).unwrap();
        assert_eq!(img.get(1, 1), [0.75, 0.75, 0.75]);
    }

    #[test]
    fn unknown_character_is_an_error() {
        let protos = [solid('a', 4, 1.0)];
        let err = composite_line(WHITE, 10, 4, &[place('z', 0.0, BLACK)], &protos).unwrap_err();
        assert!(matches!(err, Error::UnknownCharacter('z')));
    }

    #[test]
    fn escaping_glyph_is_clipped() {
        let protos = [solid('a', 8, 1.0)];
        let img = composite_line(WHITE, 10, 8, &[place('a', 6.0, BLACK)], &protos).unwrap();
        assert_eq!(img.get(9, 0), BLACK);
        assert_eq!(img.get(5, 0), WHITE);
    }

    #[test]
    fn non_overlapping_order_independent() {
        let protos = [solid('a', 6, 0.7), solid('b', 6, 0.4)];
        let p = vec![
            place('a', 1.5, [0.1, 0.2, 0.3]),
            place('b', 10.25, [0.5, 0.1, 0.0]),
        ];
        let q: Vec<_> = p.iter().rev().copied().collect();
        let a = composite_line(WHITE, 20, 6, &p, &protos).unwrap();
        let b = composite_line(WHITE, 20, 6, &q, &protos).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn patch_at_integer_offset_is_the_prototype() {
        let proto = GrayImage::from_fn(5, 5, |x, y| (x * 5 + y) as f64 / 25.0);
        let patch = alpha_patch(&proto, 3.0, 1.0, 5);
        for y in 0..5 {
            for x in 0..5 {
                let col = (3 + x as isize - patch.x0) as usize;
                let row = (y as isize - patch.y0) as usize;
                assert_eq!(patch.get(col, row), proto.get(x, y));
            }
        }
    }
}
