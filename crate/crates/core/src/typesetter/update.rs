use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{unit, GrayImage, Rgb};
use crate::model::{LineSample, Placement, Prototype};

use super::align::Alignment;
use super::composite::{left_to_right, to_line, to_proto, top_edge};

const LINES_PER_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub prototypes: Vec<Prototype>,
    /// Labels with no occurrence in the corpus; their prototypes are unchanged.
    pub unseen: Vec<char>,
}

struct Accumulator {
    num: Vec<Vec<f64>>,
    den: Vec<Vec<f64>>,
    count: Vec<usize>,
}

impl Accumulator {
    fn new(labels: usize, pixels: usize) -> Self {
        Self {
            num: vec![vec![0.0; pixels]; labels],
            den: vec![vec![0.0; pixels]; labels],
            count: vec![0; labels],
        }
    }

    fn merge(&mut self, other: Accumulator) {
        for (a, b) in self.num.iter_mut().zip(other.num) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.den.iter_mut().zip(other.den) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.count.iter_mut().zip(other.count) {
            *a += b;
        }
    }
}

fn extent(p: &Placement, side: usize) -> (f64, f64) {
    (p.x - 1.0, p.x + p.scale * side as f64 + 1.0)
}

/// Re-estimate every prototype from aligned occurrences.
///
/// Each prototype pixel is mapped into every occurrence, where compositing
/// is affine in its value: `I = base + alpha * (fg - base)`. The pixel's
/// new value is the least-squares solution over all occurrences, which
/// weights each occurrence by its squared contrast `|fg - base|^2`. The
/// result is blended with the previous value by `step` and clamped.
pub fn update_prototypes(
    corpus: &[LineSample],
    alignments: &[Alignment],
    prototypes: &[Prototype],
    step: f64,
) -> Result<UpdateOutcome> {
    if !(0.0..=1.0).contains(&step) {
        return Err(Error::config("proto_step", "must lie in [0, 1]"));
    }
    if corpus.len() != alignments.len() {
        return Err(Error::AlignmentCount {
            expected: corpus.len(),
            got: alignments.len(),
        });
    }
    let Some(first) = prototypes.first() else {
        return Ok(UpdateOutcome {
            prototypes: Vec::new(),
            unseen: Vec::new(),
        });
    };
    let side = first.image.width();
    let pixels = side * side;
    let labels: Vec<char> = prototypes.iter().map(|p| p.char_id).collect();
    let index = |c: char| {
        labels
            .iter()
            .position(|&l| l == c)
            .ok_or(Error::UnknownCharacter(c))
    };

    let partials: Vec<Result<Accumulator>> = corpus
        .par_chunks(LINES_PER_CHUNK)
        .zip(alignments.par_chunks(LINES_PER_CHUNK))
        .map(|(lines, aligns)| {
            let mut acc = Accumulator::new(labels.len(), pixels);
            for (line, al) in lines.iter().zip(aligns) {
                accumulate_line(line, al, prototypes, &index, side, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new(labels.len(), pixels);
    for p in partials {
        total.merge(p?);
    }

    let mut unseen = Vec::new();
    let mut out = Vec::with_capacity(prototypes.len());
    for (li, proto) in prototypes.iter().enumerate() {
        if total.count[li] == 0 {
            log::warn!(
                "no occurrences of {:?}; prototype left unchanged",
                proto.char_id
            );
            unseen.push(proto.char_id);
            out.push(proto.clone());
            continue;
        }
        let old = proto.image.data();
        let data = (0..pixels)
            .map(|k| {
                let den = total.den[li][k];
                let solved = if den > 1e-12 {
                    total.num[li][k] / den
                } else {
                    old[k]
                };
                unit((1.0 - step) * old[k] + step * solved)
            })
            .collect();
        out.push(Prototype::new(
            proto.char_id,
            GrayImage::from_vec(side, side, data)?,
        ));
    }
    Ok(UpdateOutcome {
        prototypes: out,
        unseen,
    })
}

fn accumulate_line(
    line: &LineSample,
    al: &Alignment,
    prototypes: &[Prototype],
    index: &impl Fn(char) -> Result<usize>,
    side: usize,
    acc: &mut Accumulator,
) -> Result<()> {
    let (w, h) = line.image.dimensions();
    let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
    let order = left_to_right(&al.placements);
    let placed: Vec<(usize, &Placement)> = order
        .iter()
        .map(|&i| Ok((index(al.placements[i].char_id)?, &al.placements[i])))
        .collect::<Result<_>>()?;

    for (j, &(li, p)) in placed.iter().enumerate() {
        acc.count[li] += 1;
        let (lo, hi) = extent(p, side);
        let neighbours: Vec<(&GrayImage, &Placement, f64)> = placed
            .iter()
            .enumerate()
            .filter(|&(k, (_, q))| {
                let (qlo, qhi) = extent(q, side);
                k != j && qlo < hi && qhi > lo
            })
            .map(|(_, &(lk, q))| (&prototypes[lk].image, q, top_edge(h, side, q.scale)))
            .collect();
        let top = top_edge(h, side, p.scale);
        let num = &mut acc.num[li];
        let den = &mut acc.den[li];
        for v in 0..side {
            let yy = to_line(v as f64, top, p.scale);
            if !(0.0..=hmax).contains(&yy) {
                continue;
            }
            for u in 0..side {
                let xx = to_line(u as f64, p.x, p.scale);
                if !(0.0..=wmax).contains(&xx) {
                    continue;
                }
                let observed = line.image.sample_clamped(xx, yy);
                let mut base: Rgb = al.bg_color;
                for &(img, q, qtop) in &neighbours {
                    let a =
                        img.sample_zero(to_proto(xx, q.x, q.scale), to_proto(yy, qtop, q.scale));
                    if a > 0.0 {
                        for ch in 0..3 {
                            base[ch] = (1.0 - a) * base[ch] + a * q.fg_color[ch];
                        }
                    }
                }
                let k = v * side + u;
                for ch in 0..3 {
                    let d = p.fg_color[ch] - base[ch];
                    num[k] += d * (observed[ch] - base[ch]);
                    den[k] += d * d;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::WHITE;
    use crate::typesetter::composite::composite_line;

    fn proto(c: char, side: usize, seed: usize) -> Prototype {
        Prototype::new(
            c,
            GrayImage::from_fn(side, side, |x, y| {
                ((x * 7 + y * 3 + seed) % 11) as f64 / 10.0
            }),
        )
    }

    fn line_of(
        placements: Vec<Placement>,
        protos: &[Prototype],
        w: usize,
        h: usize,
    ) -> (LineSample, Alignment) {
        let image = composite_line(WHITE, w, h, &placements, protos).unwrap();
        let transcription = placements.iter().map(|p| p.char_id).collect();
        (
            LineSample {
                image,
                transcription,
                doc_id: "d".into(),
            },
            Alignment {
                bg_color: WHITE,
                placements,
                low_confidence: false,
                gain: 0.0,
            },
        )
    }

    #[test]
    fn single_occurrence_is_interpolated_exactly() {
        let truth = [proto('a', 8, 1)];
        let start = [Prototype::new('a', GrayImage::filled(8, 8, 0.5))];
        let (line, al) = line_of(
            vec![Placement {
                char_id: 'a',
                x: 3.0,
                scale: 1.0,
                fg_color: [0.1, 0.2, 0.0],
            }],
            &truth,
            20,
            8,
        );
        let out = update_prototypes(&[line], &[al], &start, 1.0).unwrap();
        let err = out.prototypes[0]
            .image
            .mean_abs_diff(&truth[0].image)
            .unwrap();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn step_zero_keeps_prototypes() {
        let truth = [proto('a', 8, 1)];
        let start = [Prototype::new('a', GrayImage::filled(8, 8, 0.5))];
        let (line, al) = line_of(
            vec![Placement {
                char_id: 'a',
                x: 3.0,
                scale: 1.0,
                fg_color: [0.0; 3],
            }],
            &truth,
            20,
            8,
        );
        let out = update_prototypes(&[line], &[al], &start, 0.0).unwrap();
        assert_eq!(out.prototypes, start.to_vec());
    }

    #[test]
    fn unseen_labels_are_flagged() {
        let truth = [proto('a', 8, 1), proto('b', 8, 2)];
        let (line, al) = line_of(
            vec![Placement {
                char_id: 'a',
                x: 0.0,
                scale: 1.0,
                fg_color: [0.0; 3],
            }],
            &truth,
            12,
            8,
        );
        let out = update_prototypes(&[line], &[al], &truth, 1.0).unwrap();
        assert_eq!(out.unseen, vec!['b']);
        assert_eq!(out.prototypes[1], truth[1]);
    }

    #[test]
    fn two_labels_recovered_jointly() {
        let truth = [proto('a', 8, 1), proto('b', 8, 4)];
        let placements = vec![
            Placement {
                char_id: 'a',
                x: 2.0,
                scale: 1.0,
                fg_color: [0.0, 0.0, 0.0],
            },
            Placement {
                char_id: 'b',
                x: 30.0,
                scale: 1.0,
                fg_color: [0.3, 0.0, 0.0],
            },
        ];
        let (line, al) = line_of(placements, &truth, 40, 8);
        let out = update_prototypes(&[line], &[al], &truth, 1.0).unwrap();
        for (o, t) in out.prototypes.iter().zip(&truth) {
            assert!(o.image.mean_abs_diff(&t.image).unwrap() < 1e-12);
        }
    }
}
