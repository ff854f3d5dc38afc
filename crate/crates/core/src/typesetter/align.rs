//! Monotone forced alignment of a transcription onto a line image.
//!
//! Every candidate glyph placement `(x, scale)` is scored by the squared
//! error it removes relative to a background-only reconstruction, with the
//! glyph colour set to the ink-weighted mean colour under the prototype.
//! A dynamic program picks one placement per character, left to right,
//! with a minimum advance between consecutive glyphs. The winning integer
//! positions are refined to sub-pixel precision with a parabola through the
//! neighbouring scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{unit, unit_rgb, ColorImage, Rgb};
use crate::model::{LineSample, Placement, Prototype};

use super::composite::{alpha_patch, find_prototype};

pub const DEFAULT_SCALES: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.25];

/// Gains at or below this are treated as "nothing to align".
const DEGENERATE_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    /// Candidate isotropic scales.
    pub scales: Vec<f64>,
    /// Minimum distance between consecutive glyph origins, as a fraction
    /// of the preceding glyph's scaled prototype width.
    pub min_advance: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES.to_vec(),
            min_advance: 0.5,
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::config("align.scales", "must not be empty"));
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::config("align.scales", "must be positive and finite"));
        }
        if !(self.min_advance.is_finite() && self.min_advance > 0.0) {
            return Err(Error::config("align.min_advance", "must be positive"));
        }
        Ok(())
    }
}

/// Placements recovered for one line, plus the background used.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub bg_color: Rgb,
    pub placements: Vec<Placement>,
    /// Set when the line carried no usable ink and placements were spread
    /// uniformly instead.
    pub low_confidence: bool,
    /// Squared error removed relative to the bare background.
    pub gain: f64,
}

/// Median colour over all pixels, per channel. For an even pixel count the
/// lower of the two middle values is taken.
pub fn estimate_background(line: &ColorImage) -> Rgb {
    let n = line.data().len();
    if n == 0 {
        return crate::image::WHITE;
    }
    let mut out = [0.0; 3];
    let mut values = vec![0.0; n];
    for (ch, slot) in out.iter_mut().enumerate() {
        for (v, px) in values.iter_mut().zip(line.data()) {
            *v = px[ch];
        }
        let mid = (n - 1) / 2;
        let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
        *slot = *m;
    }
    out
}

struct KernelRow {
    y: usize,
    taps: Vec<(usize, f64)>,
}

/// One prototype rasterised at integer origin 0 for a given scale.
struct Kernel {
    scale: f64,
    x_off: isize,
    width: usize,
    rows: Vec<KernelRow>,
    // prefix sums of per-column alpha and alpha^2 over in-canvas rows
    prefix1: Vec<f64>,
    prefix2: Vec<f64>,
    advance: usize,
}

impl Kernel {
    fn new(
        proto: &crate::image::GrayImage,
        scale: f64,
        line_height: usize,
        min_advance: f64,
    ) -> Self {
        let patch = alpha_patch(proto, 0.0, scale, line_height);
        let mut rows = Vec::new();
        let mut col1 = vec![0.0; patch.width];
        let mut col2 = vec![0.0; patch.width];
        for r in 0..patch.height {
            let y = patch.y0 + r as isize;
            if y < 0 || y as usize >= line_height {
                continue;
            }
            let mut taps = Vec::new();
            for c in 0..patch.width {
                let a = patch.get(c, r);
                if a > 0.0 {
                    taps.push((c, a));
                    col1[c] += a;
                    col2[c] += a * a;
                }
            }
            if !taps.is_empty() {
                rows.push(KernelRow {
                    y: y as usize,
                    taps,
                });
            }
        }
        let prefix = |cols: &[f64]| {
            let mut p = Vec::with_capacity(cols.len() + 1);
            p.push(0.0);
            let mut acc = 0.0;
            for v in cols {
                acc += v;
                p.push(acc);
            }
            p
        };
        let advance = ((min_advance * scale * proto.width() as f64).ceil() as usize).max(1);
        Self {
            scale,
            x_off: patch.x0,
            width: patch.width,
            rows,
            prefix1: prefix(&col1),
            prefix2: prefix(&col2),
            advance,
        }
    }

    /// Alpha mass and squared mass inside a canvas of width `w` for origin `x`.
    fn masses(&self, x: isize, w: usize) -> (f64, f64) {
        let first = x + self.x_off;
        let lo = (-first).clamp(0, self.width as isize) as usize;
        let hi = (w as isize - first).clamp(0, self.width as isize) as usize;
        if hi <= lo {
            return (0.0, 0.0);
        }
        (
            self.prefix1[hi] - self.prefix1[lo],
            self.prefix2[hi] - self.prefix2[lo],
        )
    }
}

/// Rasterised prototypes for every candidate scale, shared across lines.
pub struct KernelBank {
    line_height: usize,
    side: usize,
    // scales in tie-break preference order: closest to 1 first
    scales: Vec<f64>,
    entries: Vec<(char, Vec<Kernel>)>,
}

impl KernelBank {
    pub fn new(prototypes: &[Prototype], line_height: usize, params: &AlignParams) -> Result<Self> {
        params.validate()?;
        let mut scales = params.scales.clone();
        scales.sort_by(|a, b| {
            (a - 1.0)
                .abs()
                .total_cmp(&(b - 1.0).abs())
                .then(a.total_cmp(b))
        });
        scales.dedup();
        let side = prototypes.first().map(|p| p.image.width()).unwrap_or(0);
        let entries = prototypes
            .iter()
            .map(|p| {
                let ks = scales
                    .iter()
                    .map(|&s| Kernel::new(&p.image, s, line_height, params.min_advance))
                    .collect();
                (p.char_id, ks)
            })
            .collect();
        Ok(Self {
            line_height,
            side,
            scales,
            entries,
        })
    }

    fn kernels(&self, c: char) -> Result<&[Kernel]> {
        self.entries
            .iter()
            .find(|(k, _)| *k == c)
            .map(|(_, ks)| ks.as_slice())
            .ok_or(Error::UnknownCharacter(c))
    }
}

/// `I - bg` per channel, row-major with zero padding on both sides.
struct Residual {
    width: usize,
    stride: usize,
    pad: usize,
    planes: [Vec<f64>; 3],
}

impl Residual {
    fn new(image: &ColorImage, bg: Rgb, pad: usize) -> Self {
        let (w, h) = image.dimensions();
        let stride = w + 2 * pad;
        let mut planes = [
            vec![0.0; stride * h],
            vec![0.0; stride * h],
            vec![0.0; stride * h],
        ];
        for y in 0..h {
            for x in 0..w {
                let px = image.get(x, y);
                for ch in 0..3 {
                    planes[ch][y * stride + pad + x] = px[ch] - bg[ch];
                }
            }
        }
        Self {
            width: w,
            stride,
            pad,
            planes,
        }
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, src: &[f64]) {
    for (o, &v) in out.iter_mut().zip(src) {
        *o += a * v;
    }
}

#[inline]
fn placement_gain(a1: f64, a2: f64, c: [f64; 3], bg: Rgb) -> f64 {
    if a1 <= 1e-12 {
        return 0.0;
    }
    let mut g = 0.0;
    for ch in 0..3 {
        let d = unit(bg[ch] + c[ch] / a1) - bg[ch];
        g += 2.0 * d * c[ch] - d * d * a2;
    }
    g
}

/// Scores of one kernel at every integer origin in `first..first+n`.
fn score_band(kernel: &Kernel, res: &Residual, bg: Rgb, first: usize, n: usize) -> Vec<f64> {
    let mut acc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for row in &kernel.rows {
        let base = row.y * res.stride;
        for &(col, a) in &row.taps {
            let start =
                (base as isize + res.pad as isize + first as isize + kernel.x_off + col as isize)
                    as usize;
            for ch in 0..3 {
                axpy(&mut acc[ch], a, &res.planes[ch][start..start + n]);
            }
        }
    }
    (0..n)
        .map(|i| {
            let (a1, a2) = kernel.masses((first + i) as isize, res.width);
            placement_gain(a1, a2, [acc[0][i], acc[1][i], acc[2][i]], bg)
        })
        .collect()
}

fn ink_weighted_color(image: &ColorImage, proto: &Prototype, x: f64, scale: f64, bg: Rgb) -> Rgb {
    let patch = alpha_patch(&proto.image, x, scale, image.height());
    let (w, h) = image.dimensions();
    let mut mass = 0.0;
    let mut sum = [0.0; 3];
    for row in 0..patch.height {
        let py = patch.y0 + row as isize;
        if py < 0 || py as usize >= h {
            continue;
        }
        for col in 0..patch.width {
            let px = patch.x0 + col as isize;
            let a = patch.get(col, row);
            if a == 0.0 || px < 0 || px as usize >= w {
                continue;
            }
            let c = image.get(px as usize, py as usize);
            mass += a;
            for ch in 0..3 {
                sum[ch] += a * c[ch];
            }
        }
    }
    if mass <= 1e-12 {
        bg
    } else {
        unit_rgb([sum[0] / mass, sum[1] / mass, sum[2] / mass])
    }
}

/// Align a transcribed line against a prototype set.
pub fn align_line(
    line: &LineSample,
    prototypes: &[Prototype],
    bg_color: Rgb,
    params: &AlignParams,
) -> Result<Alignment> {
    let bank = KernelBank::new(prototypes, line.image.height(), params)?;
    align_with_bank(line, prototypes, &bank, bg_color)
}

/// As [`align_line`], reusing rasterised kernels.
pub fn align_with_bank(
    line: &LineSample,
    prototypes: &[Prototype],
    bank: &KernelBank,
    bg_color: Rgb,
) -> Result<Alignment> {
    let (w, h) = line.image.dimensions();
    if h != bank.line_height {
        return Err(Error::LineHeight {
            line: 0,
            got: h,
            expected: bank.line_height,
        });
    }
    if w == 0 {
        return Err(Error::ZeroWidthLine { line: 0 });
    }
    let n = line.transcription.len();
    if n == 0 {
        return Ok(Alignment {
            bg_color,
            placements: Vec::new(),
            low_confidence: false,
            gain: 0.0,
        });
    }
    let kernels: Vec<&[Kernel]> = line
        .transcription
        .iter()
        .map(|&c| bank.kernels(c))
        .collect::<Result<_>>()?;
    let protos: Vec<&Prototype> = line
        .transcription
        .iter()
        .map(|&c| find_prototype(prototypes, c))
        .collect::<Result<_>>()?;

    let min_adv = kernels
        .iter()
        .flat_map(|ks| ks.iter().map(|k| k.advance))
        .min()
        .unwrap_or(1);
    let span = min_adv * (n - 1);
    if span > w - 1 {
        return Ok(uniform(line, &protos, bank, bg_color));
    }

    let pad = kernels
        .iter()
        .flat_map(|ks| ks.iter())
        .map(|k| k.width + k.x_off.unsigned_abs() + 2)
        .max()
        .unwrap_or(2);
    let residual = Residual::new(&line.image, bg_color, pad);
    let nscales = bank.scales.len();

    // Feasible origins for glyph i, plus one pixel of context each side.
    struct Band {
        lo: usize,
        hi: usize,
        first: usize,
        scores: Vec<Vec<f64>>,
    }
    let bands: Vec<Band> = (0..n)
        .map(|i| {
            let lo = i * min_adv;
            let hi = (w - 1) - (n - 1 - i) * min_adv;
            let first = lo.saturating_sub(1);
            let last = (hi + 1).min(w - 1);
            let scores = kernels[i]
                .iter()
                .map(|k| score_band(k, &residual, bg_color, first, last - first + 1))
                .collect();
            Band {
                lo,
                hi,
                first,
                scores,
            }
        })
        .collect();

    // values[i][s][x - lo]
    let mut values: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    // back[i][x - lo] = (previous origin, previous scale index)
    let mut back: Vec<Vec<(usize, usize)>> = Vec::with_capacity(n);
    for (i, band) in bands.iter().enumerate() {
        let len = band.hi - band.lo + 1;
        let mut prefix = vec![(f64::NEG_INFINITY, (0usize, 0usize)); len];
        if i == 0 {
            prefix.iter_mut().for_each(|p| p.0 = 0.0);
        } else {
            let prev = &bands[i - 1];
            let max_end = w + kernels[i - 1].iter().map(|k| k.advance).max().unwrap_or(1);
            let mut best_end = vec![(f64::NEG_INFINITY, (0usize, 0usize)); max_end + 1];
            for x in prev.lo..=prev.hi {
                for s in 0..nscales {
                    let v = values[i - 1][s][x - prev.lo];
                    let e = x + kernels[i - 1][s].advance;
                    if v > best_end[e].0 {
                        best_end[e] = (v, (x, s));
                    }
                }
            }
            let mut run = (f64::NEG_INFINITY, (0usize, 0usize));
            for (e, cand) in best_end.iter().enumerate() {
                if cand.0 > run.0 {
                    run = *cand;
                }
                if e >= band.lo && e <= band.hi {
                    prefix[e - band.lo] = run;
                }
            }
        }
        let mut vals = vec![vec![f64::NEG_INFINITY; len]; nscales];
        for s in 0..nscales {
            for x in band.lo..=band.hi {
                let p = prefix[x - band.lo].0;
                if p > f64::NEG_INFINITY {
                    vals[s][x - band.lo] = p + band.scores[s][x - band.first];
                }
            }
        }
        back.push(prefix.iter().map(|p| p.1).collect());
        values.push(vals);
    }

    let last = &bands[n - 1];
    let mut best = (f64::NEG_INFINITY, last.lo, 0usize);
    for x in last.lo..=last.hi {
        for s in 0..nscales {
            let v = values[n - 1][s][x - last.lo];
            if v > best.0 {
                best = (v, x, s);
            }
        }
    }
    if !(best.0 > DEGENERATE_GAIN) {
        return Ok(uniform(line, &protos, bank, bg_color));
    }

    let mut chosen = vec![(0usize, 0usize); n];
    let (mut x, mut s) = (best.1, best.2);
    for i in (0..n).rev() {
        chosen[i] = (x, s);
        if i > 0 {
            let (px, ps) = back[i][x - bands[i].lo];
            x = px;
            s = ps;
        }
    }

    let mut placements = Vec::with_capacity(n);
    let mut prev_x = f64::NEG_INFINITY;
    for (i, &(x, s)) in chosen.iter().enumerate() {
        let band = &bands[i];
        let scores = &band.scores[s];
        let at = |xx: usize| scores[xx - band.first];
        let mut delta = 0.0;
        if x > band.first && x < band.first + scores.len() - 1 {
            let (gl, g0, gr) = (at(x - 1), at(x), at(x + 1));
            let denom = gl - 2.0 * g0 + gr;
            if denom < 0.0 {
                delta = (0.5 * (gl - gr) / denom).clamp(-0.5, 0.5);
            }
        }
        let mut fx = (x as f64 + delta).clamp(0.0, w as f64);
        if fx <= prev_x {
            fx = x as f64;
        }
        prev_x = fx;
        let scale = kernels[i][s].scale;
        let fg_color = ink_weighted_color(&line.image, protos[i], fx, scale, bg_color);
        placements.push(Placement {
            char_id: line.transcription[i],
            x: fx,
            scale,
            fg_color,
        });
    }
    Ok(Alignment {
        bg_color,
        placements,
        low_confidence: false,
        gain: best.0,
    })
}

fn uniform(line: &LineSample, protos: &[&Prototype], bank: &KernelBank, bg: Rgb) -> Alignment {
    let w = line.image.width() as f64;
    let n = protos.len() as f64;
    let slot = w / n;
    let inset = ((slot - bank.side as f64) / 2.0).max(0.0);
    let placements = protos
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = (i as f64 * slot + inset).clamp(0.0, w);
            Placement {
                char_id: p.char_id,
                x,
                scale: 1.0,
                fg_color: ink_weighted_color(&line.image, p, x, 1.0, bg),
            }
        })
        .collect();
    Alignment {
        bg_color: bg,
        placements,
        low_confidence: true,
        gain: 0.0,
    }
}
