//! Built-in stroke glyphs on the unit square (x right, y down).
//!
//! Every glyph has two forms. Where the forms differ the difference is a
//! local edit of the kind used to tell script subtypes apart: round versus
//! broken bows, plain versus spurred stems, curved versus angular arches.

use std::f64::consts::PI;

use crate::image::GrayImage;
use crate::typesetter::centroid_offset;

pub const BUILTIN_ALPHABET: &str = "abcdehilno";

/// Stroke width as a fraction of the prototype side.
pub const STROKE_WIDTH: f64 = 0.09;

type Pt = (f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub strokes: Vec<Vec<Pt>>,
}

/// Elliptical arc from `a0` to `a1` degrees, counter-clockwise on screen.
fn arc(c: Pt, rx: f64, ry: f64, a0: f64, a1: f64) -> Vec<Pt> {
    let steps = (((a1 - a0).abs() / 10.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|i| {
            let t = (a0 + (a1 - a0) * i as f64 / steps as f64) * PI / 180.0;
            (c.0 + rx * t.cos(), c.1 - ry * t.sin())
        })
        .collect()
}

fn line(pts: &[Pt]) -> Vec<Pt> {
    pts.to_vec()
}

fn closed(pts: &[Pt]) -> Vec<Pt> {
    let mut v = pts.to_vec();
    v.push(pts[0]);
    v
}

const BOW: [Pt; 6] = [
    (0.5, 0.36),
    (0.68, 0.48),
    (0.68, 0.72),
    (0.5, 0.84),
    (0.32, 0.72),
    (0.32, 0.48),
];

fn glyph_a(alt: bool) -> Glyph {
    let head = line(&[(0.36, 0.42), (0.5, 0.36), (0.63, 0.45)]);
    let stem = line(&[(0.63, 0.45), (0.63, 0.85)]);
    let bow = if alt {
        line(&[
            (0.63, 0.56),
            (0.44, 0.54),
            (0.32, 0.68),
            (0.44, 0.84),
            (0.63, 0.8),
        ])
    } else {
        arc((0.48, 0.69), 0.15, 0.15, 0.0, 360.0)
    };
    Glyph {
        strokes: vec![head, stem, bow],
    }
}

fn glyph_b(alt: bool) -> Glyph {
    let mut strokes = vec![
        line(&[(0.36, 0.12), (0.36, 0.85)]),
        arc((0.52, 0.62), 0.16, 0.22, 0.0, 360.0),
    ];
    if alt {
        strokes.push(line(&[(0.36, 0.13), (0.25, 0.2)]));
    }
    Glyph { strokes }
}

fn glyph_c(alt: bool) -> Glyph {
    let s = if alt {
        line(&[(0.66, 0.44), BOW[0], BOW[5], BOW[4], BOW[3], (0.66, 0.76)])
    } else {
        arc((0.5, 0.6), 0.18, 0.24, 40.0, 320.0)
    };
    Glyph { strokes: vec![s] }
}

fn glyph_d(alt: bool) -> Glyph {
    let bow = arc((0.48, 0.62), 0.16, 0.22, 0.0, 360.0);
    let stem = if alt {
        line(&[(0.45, 0.14), (0.64, 0.3), (0.64, 0.85)])
    } else {
        line(&[(0.64, 0.12), (0.64, 0.85)])
    };
    Glyph {
        strokes: vec![stem, bow],
    }
}

fn glyph_e(alt: bool) -> Glyph {
    let bar = line(&[(0.32, 0.58), (0.68, 0.58)]);
    let body = if alt {
        line(&[
            (0.68, 0.58),
            (0.68, 0.48),
            BOW[0],
            BOW[5],
            BOW[4],
            BOW[3],
            (0.66, 0.76),
        ])
    } else {
        arc((0.5, 0.6), 0.18, 0.24, 0.0, 320.0)
    };
    Glyph {
        strokes: vec![bar, body],
    }
}

fn arch(x0: f64, alt: bool) -> Vec<Pt> {
    if alt {
        line(&[(x0, 0.5), (0.46, 0.37), (0.66, 0.46), (0.66, 0.85)])
    } else {
        let mut a = arc((0.5, 0.54), 0.16, 0.16, 180.0, 0.0);
        a.push((0.66, 0.85));
        a
    }
}

fn glyph_h(alt: bool) -> Glyph {
    let mut strokes = vec![line(&[(0.34, 0.12), (0.34, 0.85)]), arch(0.34, alt)];
    if alt {
        strokes.push(line(&[(0.66, 0.85), (0.75, 0.8)]));
    }
    Glyph { strokes }
}

fn glyph_i(alt: bool) -> Glyph {
    let mut strokes = vec![
        line(&[(0.5, 0.38), (0.5, 0.85)]),
        line(&[(0.5, 0.2), (0.5, 0.23)]),
    ];
    if alt {
        strokes.push(line(&[(0.4, 0.44), (0.5, 0.36), (0.6, 0.44)]));
        strokes.push(line(&[(0.5, 0.85), (0.6, 0.79)]));
    }
    Glyph { strokes }
}

fn glyph_l(alt: bool) -> Glyph {
    let s = if alt {
        line(&[(0.5, 0.12), (0.5, 0.76), (0.56, 0.85), (0.65, 0.81)])
    } else {
        line(&[(0.5, 0.12), (0.5, 0.85)])
    };
    Glyph { strokes: vec![s] }
}

fn glyph_n(alt: bool) -> Glyph {
    Glyph {
        strokes: vec![line(&[(0.34, 0.38), (0.34, 0.85)]), arch(0.34, alt)],
    }
}

fn glyph_o(alt: bool) -> Glyph {
    let s = if alt {
        closed(&BOW)
    } else {
        arc((0.5, 0.6), 0.18, 0.24, 0.0, 360.0)
    };
    Glyph { strokes: vec![s] }
}

/// The built-in glyph for `c`, in its A form (`alt = false`) or B form.
pub fn builtin(c: char, alt: bool) -> Option<Glyph> {
    Some(match c {
        'a' => glyph_a(alt),
        'b' => glyph_b(alt),
        'c' => glyph_c(alt),
        'd' => glyph_d(alt),
        'e' => glyph_e(alt),
        'h' => glyph_h(alt),
        'i' => glyph_i(alt),
        'l' => glyph_l(alt),
        'n' => glyph_n(alt),
        'o' => glyph_o(alt),
        _ => return None,
    })
}

/// Per-rendering shape variation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams {
    /// Relative horizontal stretch about the centre.
    pub stretch: f64,
    /// Horizontal shift per unit height above the x-height centre.
    pub shear: f64,
    /// Relative change of stroke width.
    pub weight: f64,
}

impl ShapeParams {
    pub const IDENTITY: ShapeParams = ShapeParams {
        stretch: 0.0,
        shear: 0.0,
        weight: 0.0,
    };
}

fn segment_distance(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Rasterise with an anti-aliased pen: coverage `w/2 - d + 1/2`, clamped,
/// maximised over strokes.
pub fn rasterize(glyph: &Glyph, side: usize, shape: ShapeParams) -> GrayImage {
    let k = side as f64;
    let warp = |(x, y): Pt| {
        let x = 0.5 + (x - 0.5) * (1.0 + shape.stretch) + shape.shear * (0.6 - y);
        (x * k, y * k)
    };
    let strokes: Vec<Vec<Pt>> = glyph
        .strokes
        .iter()
        .map(|s| s.iter().copied().map(warp).collect())
        .collect();
    let half = 0.5 * STROKE_WIDTH * k * (1.0 + shape.weight).max(0.1);
    GrayImage::from_fn(side, side, |x, y| {
        let p = (x as f64 + 0.5, y as f64 + 0.5);
        let d = strokes
            .iter()
            .flat_map(|s| s.windows(2))
            .map(|w| segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min);
        (half - d + 0.5).clamp(0.0, 1.0)
    })
}

/// Horizontal offset (unit coordinates) that centres the ink centroid of
/// `glyph` when rendered with `shape`.
pub fn centring_shift(glyph: &Glyph, side: usize, shape: ShapeParams) -> f64 {
    let mut total = 0.0;
    let mut g = glyph.clone();
    for _ in 0..4 {
        let d = centroid_offset(&rasterize(&g, side, shape));
        if d.abs() < 1e-3 {
            break;
        }
        let du = d / ((1.0 + shape.stretch) * side as f64);
        total -= du;
        g = shifted(glyph, total);
    }
    total
}

pub fn shifted(glyph: &Glyph, dx: f64) -> Glyph {
    Glyph {
        strokes: glyph
            .strokes
            .iter()
            .map(|s| s.iter().map(|&(x, y)| (x + dx, y)).collect())
            .collect(),
    }
}

/// Render both forms of `c`, each shifted by the amount that centres the
/// A form, so the two differ only where the forms differ.
pub fn render_pair(c: char, side: usize, shape: ShapeParams) -> Option<(GrayImage, GrayImage)> {
    let a = builtin(c, false)?;
    let b = builtin(c, true)?;
    let dx = centring_shift(&a, side, shape);
    Some((
        rasterize(&shifted(&a, dx), side, shape),
        rasterize(&shifted(&b, dx), side, shape),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_renders_inside_the_box() {
        for c in BUILTIN_ALPHABET.chars() {
            for alt in [false, true] {
                let img = rasterize(&builtin(c, alt).unwrap(), 64, ShapeParams::IDENTITY);
                assert!(img.sum() > 100.0, "{c} {alt}");
                for i in 0..64 {
                    for edge in [img.get(i, 0), img.get(0, i), img.get(i, 63), img.get(63, i)] {
                        assert_eq!(edge, 0.0, "{c} {alt}");
                    }
                }
            }
        }
        assert!(builtin('z', false).is_none());
    }

    #[test]
    fn forms_differ() {
        for c in BUILTIN_ALPHABET.chars() {
            let a = rasterize(&builtin(c, false).unwrap(), 64, ShapeParams::IDENTITY);
            let b = rasterize(&builtin(c, true).unwrap(), 64, ShapeParams::IDENTITY);
            assert!(a.mean_abs_diff(&b).unwrap() > 0.005, "{c}");
        }
    }

    #[test]
    fn centred_rendering() {
        for c in BUILTIN_ALPHABET.chars() {
            let shape = ShapeParams {
                stretch: 0.1,
                shear: -0.05,
                weight: 0.1,
            };
            let (a, _) = render_pair(c, 64, shape).unwrap();
            assert!(centroid_offset(&a).abs() < 0.01, "{c}");
        }
    }

    #[test]
    fn stroke_core_is_solid() {
        let g = Glyph {
            strokes: vec![vec![(0.5, 0.1), (0.5, 0.9)]],
        };
        let img = rasterize(&g, 64, ShapeParams::IDENTITY);
        assert_eq!(img.get(31, 32), 1.0);
        assert_eq!(img.get(10, 32), 0.0);
    }
}
