use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{squared_error, GrayImage, Rgb};
use crate::model::{
    validate_model, LineSample, ModelState, Prototype, Provenance, DEFAULT_PROTO_SIDE,
};

use super::align::{align_with_bank, estimate_background, AlignParams, Alignment, KernelBank};
use super::composite::composite_line;
use super::update::update_prototypes;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_rounds: usize,
    pub proto_step: f64,
    /// Relative improvement of the reconstruction error (reference
    /// training) or mean absolute prototype change (finetuning) below which
    /// iteration stops.
    pub convergence_tol: f64,
    pub seed: u64,
    pub freeze_placements: bool,
    pub proto_side: usize,
    /// Rescale each character's placements so their geometric-mean scale
    /// is 1 before re-estimating prototypes (reference training only).
    pub fix_scale_gauge: bool,
    /// Shift each character's placements so its prototype's ink centroid
    /// sits on the horizontal centre of the box (reference training only).
    pub fix_centroid_gauge: bool,
    pub align: AlignParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_rounds: 30,
            proto_step: 1.0,
            convergence_tol: 1e-5,
            seed: 0,
            freeze_placements: false,
            proto_side: DEFAULT_PROTO_SIDE,
            fix_scale_gauge: true,
            fix_centroid_gauge: true,
            align: AlignParams::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults suitable for [`finetune_prototypes`].
    pub fn finetune() -> Self {
        Self {
            freeze_placements: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::config("max_rounds", "must be at least 1"));
        }
        if !(self.proto_step > 0.0 && self.proto_step <= 1.0) {
            return Err(Error::config("proto_step", "must lie in (0, 1]"));
        }
        if !(self.convergence_tol > 0.0 && self.convergence_tol.is_finite()) {
            return Err(Error::config("convergence_tol", "must be positive"));
        }
        if self.proto_side == 0 {
            return Err(Error::config("proto_side", "must be positive"));
        }
        self.align.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ModelState,
    /// Placements used for the final prototype estimate, one per line.
    pub alignments: Vec<Alignment>,
    /// Mean squared reconstruction error after each round.
    pub history: Vec<f64>,
    /// Alphabet labels that never received an occurrence.
    pub unseen: Vec<char>,
}

/// Mean squared error per channel value between the lines and their
/// reconstructions.
pub fn reconstruction_error(
    corpus: &[LineSample],
    alignments: &[Alignment],
    prototypes: &[Prototype],
) -> Result<f64> {
    if corpus.len() != alignments.len() {
        return Err(Error::AlignmentCount {
            expected: corpus.len(),
            got: alignments.len(),
        });
    }
    let parts: Vec<Result<(f64, usize)>> = corpus
        .par_iter()
        .zip(alignments)
        .map(|(line, al)| {
            let (w, h) = line.image.dimensions();
            let recon = composite_line(al.bg_color, w, h, &al.placements, prototypes)?;
            Ok((squared_error(recon.data(), line.image.data()), 3 * w * h))
        })
        .collect();
    let mut sum = 0.0;
    let mut count = 0;
    for p in parts {
        let (s, c) = p?;
        sum += s;
        count += c;
    }
    Ok(sum / count.max(1) as f64)
}

/// Centred isotropic Gaussian blob (sigma = side / 4, amplitude 0.5) plus
/// uniform noise in [-0.05, 0.05], one per label, drawn in alphabet order.
pub fn initial_prototypes(alphabet: &[char], side: usize, seed: u64) -> Vec<Prototype> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = side as f64 / 4.0;
    let centre = (side as f64 - 1.0) / 2.0;
    alphabet
        .iter()
        .map(|&c| {
            let img = GrayImage::from_fn(side, side, |x, y| {
                let dx = x as f64 - centre;
                let dy = y as f64 - centre;
                0.5 * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                    + rng.gen_range(-0.05..=0.05)
            });
            Prototype::new(c, img)
        })
        .collect()
}

fn check_lines(corpus: &[LineSample], expected_height: Option<usize>) -> Result<usize> {
    let first = corpus.first().ok_or(Error::EmptyCorpus)?;
    let height = expected_height.unwrap_or(first.image.height());
    for (i, line) in corpus.iter().enumerate() {
        if line.image.width() == 0 {
            return Err(Error::ZeroWidthLine { line: i });
        }
        if line.image.height() != height {
            return Err(Error::LineHeight {
                line: i,
                got: line.image.height(),
                expected: height,
            });
        }
    }
    Ok(height)
}

fn align_corpus(
    corpus: &[LineSample],
    backgrounds: &[Rgb],
    prototypes: &[Prototype],
    line_height: usize,
    params: &AlignParams,
) -> Result<Vec<Alignment>> {
    let bank = KernelBank::new(prototypes, line_height, params)?;
    corpus
        .par_iter()
        .zip(backgrounds)
        .enumerate()
        .map(|(i, (line, &bg))| {
            align_with_bank(line, prototypes, &bank, bg).map_err(|e| match e {
                Error::ZeroWidthLine { .. } => Error::ZeroWidthLine { line: i },
                Error::LineHeight { got, expected, .. } => Error::LineHeight {
                    line: i,
                    got,
                    expected,
                },
                other => other,
            })
        })
        .collect()
}

fn lower_median_color(colors: &[Rgb]) -> Rgb {
    let mut out = [0.0; 3];
    for (ch, slot) in out.iter_mut().enumerate() {
        let mut v: Vec<f64> = colors.iter().map(|c| c[ch]).collect();
        v.sort_by(f64::total_cmp);
        *slot = v[(v.len() - 1) / 2];
    }
    out
}

/// Divide each character's scales by their geometric mean, keeping every
/// footprint centre fixed. Prototypes are only defined up to a global
/// scale; this pins that freedom to the observed glyph size.
fn fix_scale_gauge(corpus: &[LineSample], alignments: &mut [Alignment], side: usize) {
    let mut log_sum: Vec<(char, f64, usize)> = Vec::new();
    for al in alignments.iter() {
        for p in &al.placements {
            match log_sum.iter_mut().find(|e| e.0 == p.char_id) {
                Some(e) => {
                    e.1 += p.scale.ln();
                    e.2 += 1;
                }
                None => log_sum.push((p.char_id, p.scale.ln(), 1)),
            }
        }
    }
    for (line, al) in corpus.iter().zip(alignments.iter_mut()) {
        let width = line.image.width() as f64;
        for p in &mut al.placements {
            let (_, sum, n) = log_sum.iter().find(|e| e.0 == p.char_id).copied().unwrap();
            let gauge = (sum / n as f64).exp();
            if gauge == 1.0 {
                continue;
            }
            let scale = p.scale / gauge;
            p.x = (p.x + (p.scale - scale) * side as f64 / 2.0).clamp(0.0, width);
            p.scale = scale;
        }
    }
}

/// Horizontal ink-centroid offset from the box centre, in prototype
/// pixels, or 0 for an empty prototype.
pub fn centroid_offset(image: &GrayImage) -> f64 {
    let side = image.width();
    let (mut mass, mut moment) = (0.0, 0.0);
    for y in 0..image.height() {
        for x in 0..side {
            let a = image.get(x, y);
            mass += a;
            moment += a * x as f64;
        }
    }
    if mass < 1e-9 {
        0.0
    } else {
        moment / mass - (side as f64 - 1.0) / 2.0
    }
}

/// Move placements so that re-estimated prototypes come out centred.
/// Horizontal translation is shared freely between a prototype and its
/// placements; this pins it to the ink centroid. Returns whether
/// anything moved.
fn fix_centroid_gauge(
    corpus: &[LineSample],
    alignments: &mut [Alignment],
    prototypes: &[Prototype],
) -> bool {
    let offsets: Vec<(char, f64)> = prototypes
        .iter()
        .map(|p| (p.char_id, centroid_offset(&p.image)))
        .collect();
    if offsets.iter().all(|(_, d)| d.abs() < 1e-3) {
        return false;
    }
    for (line, al) in corpus.iter().zip(alignments.iter_mut()) {
        let width = line.image.width() as f64;
        for p in &mut al.placements {
            if let Some(&(_, d)) = offsets.iter().find(|(c, _)| *c == p.char_id) {
                p.x = (p.x + p.scale * d).clamp(0.0, width);
            }
        }
    }
    true
}

/// Learn a reference model from transcribed lines.
///
/// Alternates alignment of every line with re-estimation of the prototypes
/// until the relative improvement in reconstruction error drops below
/// `convergence_tol` or `max_rounds` is reached.
pub fn train_reference(corpus: &[LineSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let line_height = check_lines(corpus, None)?;
    let alphabet: Vec<char> = corpus
        .iter()
        .flat_map(|l| l.transcription.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if alphabet.is_empty() {
        return Err(Error::EmptyAlphabet);
    }
    let side = config.proto_side;
    let backgrounds: Vec<Rgb> = corpus
        .par_iter()
        .map(|l| estimate_background(&l.image))
        .collect();
    let mut prototypes = initial_prototypes(&alphabet, side, config.seed);
    let mut alignments: Vec<Alignment> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    let mut unseen = Vec::new();

    for round in 0..config.max_rounds {
        let realign = round == 0 || !config.freeze_placements;
        if realign {
            alignments = align_corpus(
                corpus,
                &backgrounds,
                &prototypes,
                line_height,
                &config.align,
            )?;
            if config.fix_scale_gauge {
                fix_scale_gauge(corpus, &mut alignments, side);
            }
        }
        let mut updated = update_prototypes(corpus, &alignments, &prototypes, config.proto_step)?;
        if realign
            && config.fix_centroid_gauge
            && fix_centroid_gauge(corpus, &mut alignments, &updated.prototypes)
        {
            updated = update_prototypes(corpus, &alignments, &prototypes, config.proto_step)?;
        }
        prototypes = updated.prototypes;
        unseen = updated.unseen;
        let err = reconstruction_error(corpus, &alignments, &prototypes)?;
        if !err.is_finite() {
            return Err(Error::NonFinite("reconstruction error".into()));
        }
        log::debug!("round {round}: reconstruction error {err:.6e}");
        let prev = history.last().copied();
        history.push(err);
        if err == 0.0 {
            break;
        }
        if let Some(prev) = prev {
            if (prev - err) / prev < config.convergence_tol {
                break;
            }
        }
    }

    let model = ModelState {
        alphabet,
        prototypes,
        proto_side: side,
        line_height,
        bg_color: lower_median_color(&backgrounds),
        provenance: Provenance::Reference,
        training_seed: config.seed,
    };
    Ok(TrainOutcome {
        model,
        alignments,
        history,
        unseen,
    })
}

/// Re-estimate only the prototype pixels of `reference` on a new corpus.
///
/// Placements are computed once with the reference prototypes and then
/// held fixed, so the finetuned prototypes stay pixel-aligned with the
/// reference ones. Alphabet, geometry and background colour are copied.
pub fn finetune_prototypes(
    reference: &ModelState,
    corpus: &[LineSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if !config.freeze_placements {
        return Err(Error::config(
            "freeze_placements",
            "finetuning requires frozen placements",
        ));
    }
    let violations = validate_model(reference);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    let unknown: BTreeSet<char> = corpus
        .iter()
        .flat_map(|l| l.transcription.iter().copied())
        .filter(|c| !reference.alphabet.contains(c))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown.into_iter().collect()));
    }
    check_lines(corpus, Some(reference.line_height))?;

    let backgrounds: Vec<Rgb> = corpus
        .par_iter()
        .map(|l| estimate_background(&l.image))
        .collect();
    let alignments = align_corpus(
        corpus,
        &backgrounds,
        &reference.prototypes,
        reference.line_height,
        &config.align,
    )?;

    let mut prototypes = reference.prototypes.clone();
    let mut history = Vec::new();
    let mut unseen = Vec::new();
    for _ in 0..config.max_rounds {
        let updated = update_prototypes(corpus, &alignments, &prototypes, config.proto_step)?;
        let mut change = 0.0;
        for (a, b) in updated.prototypes.iter().zip(&prototypes) {
            change += a.image.mean_abs_diff(&b.image)?;
        }
        change /= prototypes.len().max(1) as f64;
        prototypes = updated.prototypes;
        unseen = updated.unseen;
        history.push(reconstruction_error(corpus, &alignments, &prototypes)?);
        if change < config.convergence_tol {
            break;
        }
    }

    let model = ModelState {
        alphabet: reference.alphabet.clone(),
        prototypes,
        proto_side: reference.proto_side,
        line_height: reference.line_height,
        bg_color: reference.bg_color,
        provenance: Provenance::Finetuned(reference.parent_info()),
        training_seed: config.seed,
    };
    Ok(TrainOutcome {
        model,
        alignments,
        history,
        unseen,
    })
}
