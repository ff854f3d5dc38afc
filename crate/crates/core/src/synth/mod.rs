//! Synthetic two-subtype corpora rendered from known prototypes.

pub mod glyphs;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ColorImage, GrayImage, Rgb};
use crate::io::emit::{file_stem, write_json};
use crate::io::manifest::{CorpusManifest, DocumentEntry, LineEntry};
use crate::io::png::{write_gray_png, write_png};
use crate::model::{LineSample, Placement, Prototype, DEFAULT_LINE_HEIGHT, DEFAULT_PROTO_SIDE};
use crate::typesetter::composite_line;

use glyphs::{builtin, render_pair, ShapeParams, BUILTIN_ALPHABET};

pub const PARCHMENT: Rgb = [0.93, 0.89, 0.8];
pub const INK: Rgb = [0.16, 0.11, 0.08];
pub const SUBTYPES: [&str; 2] = ["A", "B"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub corpus_id: String,
    pub alphabet: String,
    /// Characters whose B form differs from the A form.
    pub delta_chars: String,
    /// Std of horizontal placement noise, px.
    pub position_jitter: f64,
    /// Std of the placement scale around 1.
    pub scale_jitter: f64,
    /// Std of additive per-pixel noise.
    pub intensity_noise: f64,
    /// Per-document shape variation std, for subtypes A and B.
    pub shape_jitter: [f64; 2],
    pub lines_per_document: usize,
    pub documents_per_subtype: usize,
    /// The first this many documents of each subtype are reference members.
    pub reference_per_subtype: usize,
    /// Inclusive range of glyphs per line.
    pub glyphs_per_line: [usize; 2],
    pub proto_side: usize,
    pub line_height: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            corpus_id: "synthetic".into(),
            alphabet: BUILTIN_ALPHABET.into(),
            delta_chars: "aceino".into(),
            position_jitter: 0.0,
            scale_jitter: 0.0,
            intensity_noise: 0.0,
            shape_jitter: [0.0, 0.0],
            lines_per_document: 12,
            documents_per_subtype: 4,
            reference_per_subtype: 2,
            glyphs_per_line: [4, 8],
            proto_side: DEFAULT_PROTO_SIDE,
            line_height: DEFAULT_LINE_HEIGHT,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn alphabet_chars(&self) -> Vec<char> {
        let mut v: Vec<char> = self.alphabet.chars().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn validate(&self) -> Result<()> {
        let alphabet = self.alphabet_chars();
        if alphabet.is_empty() {
            return Err(Error::Synth("alphabet is empty".into()));
        }
        if let Some(c) = alphabet.iter().find(|&&c| builtin(c, false).is_none()) {
            return Err(Error::Synth(format!(
                "no built-in glyph for {c:?} (available: {BUILTIN_ALPHABET})"
            )));
        }
        if self.delta_chars.is_empty() {
            return Err(Error::Synth(
                "at least one delta character is required".into(),
            ));
        }
        if let Some(c) = self.delta_chars.chars().find(|c| !alphabet.contains(c)) {
            return Err(Error::Synth(format!(
                "delta character {c:?} is not in the alphabet"
            )));
        }
        let stds = [
            ("position_jitter", self.position_jitter),
            ("scale_jitter", self.scale_jitter),
            ("intensity_noise", self.intensity_noise),
            ("shape_jitter", self.shape_jitter[0]),
            ("shape_jitter", self.shape_jitter[1]),
        ];
        if let Some((name, _)) = stds.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Synth(format!("{name} must be a finite std >= 0")));
        }
        if self.documents_per_subtype == 0 || self.lines_per_document == 0 {
            return Err(Error::Synth(
                "need at least one document and one line".into(),
            ));
        }
        if self.reference_per_subtype > self.documents_per_subtype {
            return Err(Error::Synth(
                "reference_per_subtype exceeds documents_per_subtype".into(),
            ));
        }
        let [lo, hi] = self.glyphs_per_line;
        if lo == 0 || lo > hi {
            return Err(Error::Synth(
                "glyphs_per_line must be a range [min, max] with min >= 1".into(),
            ));
        }
        if self.proto_side < 8 || self.line_height == 0 {
            return Err(Error::Synth(
                "proto_side must be >= 8 and line_height positive".into(),
            ));
        }
        Ok(())
    }

    fn is_delta(&self, c: char) -> bool {
        self.delta_chars.contains(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// Base prototypes of each subtype ("A", "B").
    pub subtype_prototypes: BTreeMap<String, Vec<Prototype>>,
    /// Per-document prototypes after shape jitter.
    pub document_prototypes: BTreeMap<String, Vec<Prototype>>,
    /// True placements of every line, in corpus order.
    pub placements: Vec<Vec<Placement>>,
    pub backgrounds: Vec<Rgb>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub manifest: CorpusManifest,
    pub lines: Vec<LineSample>,
    pub truth: SynthTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn subtype_form(spec: &SynthSpec, subtype: usize, c: char) -> bool {
    subtype == 1 && spec.is_delta(c)
}

fn render(spec: &SynthSpec, subtype: usize, c: char, shape: ShapeParams) -> GrayImage {
    let (a, b) = render_pair(c, spec.proto_side, shape).expect("validated");
    if subtype_form(spec, subtype, c) {
        b
    } else {
        a
    }
}

fn base_prototypes(spec: &SynthSpec, subtype: usize) -> Vec<Prototype> {
    spec.alphabet_chars()
        .into_iter()
        .map(|c| Prototype::new(c, render(spec, subtype, c, ShapeParams::IDENTITY)))
        .collect()
}

/// Draws of N(0, 1) rescaled to zero mean and unit population std.
fn standardized(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    if n < 2 {
        return z;
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    let std = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for v in &mut z {
        *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
    }
    z
}

/// Shape parameters of every document of one subtype, indexed
/// `[document][character]`. Each parameter is standardized across the
/// subtype's documents so its realised spread is exactly the jitter.
fn subtype_shapes(spec: &SynthSpec, subtype: usize) -> Vec<Vec<ShapeParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SHAPE_STREAM + subtype as u64);
    let n = spec.documents_per_subtype;
    let jitter = spec.shape_jitter[subtype];
    let mut shapes = vec![Vec::new(); n];
    for _ in spec.alphabet_chars() {
        let [stretch, shear, weight] = [0; 3].map(|_| standardized(&mut rng, n));
        for (d, doc) in shapes.iter_mut().enumerate() {
            doc.push(ShapeParams {
                stretch: jitter * stretch[d],
                shear: jitter * shear[d],
                weight: jitter * weight[d],
            });
        }
    }
    shapes
}

const SHAPE_STREAM: u64 = 1 << 32;

struct Document {
    doc_id: String,
    prototypes: Vec<Prototype>,
    lines: Vec<(LineSample, Vec<Placement>)>,
}

fn render_document(
    spec: &SynthSpec,
    index: usize,
    shapes: &[Vec<ShapeParams>],
) -> Result<Document> {
    let subtype = index / spec.documents_per_subtype;
    let doc_id = format!(
        "{}{}",
        SUBTYPES[subtype],
        index % spec.documents_per_subtype + 1
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let alphabet = spec.alphabet_chars();
    let shapes = &shapes[index % spec.documents_per_subtype];
    let prototypes: Vec<Prototype> = alphabet
        .iter()
        .zip(shapes)
        .map(|(&c, &shape)| Prototype::new(c, render(spec, subtype, c, shape)))
        .collect();

    let k = spec.proto_side as f64;
    let mut lines = Vec::with_capacity(spec.lines_per_document);
    for _ in 0..spec.lines_per_document {
        let n = rng.gen_range(spec.glyphs_per_line[0]..=spec.glyphs_per_line[1]);
        let mut cursor = rng.gen_range(2..=10) as f64;
        let mut placements = Vec::with_capacity(n);
        for _ in 0..n {
            let c = alphabet[rng.gen_range(0..alphabet.len())];
            let scale = (1.0 + spec.scale_jitter * normal(&mut rng)).clamp(0.5, 2.0);
            let dx = spec.position_jitter * normal(&mut rng);
            placements.push(Placement {
                char_id: c,
                x: (cursor + dx).max(0.0),
                scale,
                fg_color: INK,
            });
            cursor += (k * scale).round() + rng.gen_range(2..=10) as f64;
        }
        let width = cursor as usize;
        let mut image =
            composite_line(PARCHMENT, width, spec.line_height, &placements, &prototypes)?;
        if spec.intensity_noise > 0.0 {
            let noise: Vec<Rgb> = (0..image.data().len())
                .map(|_| [0; 3].map(|_| spec.intensity_noise * normal(&mut rng)))
                .collect();
            for (px, n) in image.data_mut().iter_mut().zip(noise) {
                for ch in 0..3 {
                    px[ch] = (px[ch] + n[ch]).clamp(0.0, 1.0);
                }
            }
        }
        let transcription = placements.iter().map(|p| p.char_id).collect();
        lines.push((
            LineSample {
                image,
                transcription,
                doc_id: doc_id.clone(),
            },
            placements,
        ));
    }
    Ok(Document {
        doc_id,
        prototypes,
        lines,
    })
}

fn image_path(doc_id: &str, line: usize) -> PathBuf {
    PathBuf::from("images").join(format!("{doc_id}_{line:04}.png"))
}

/// Render a corpus of `2 * documents_per_subtype` documents named `A1..`,
/// `B1..`; deterministic given the spec.
pub fn generate_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let shapes = [subtype_shapes(spec, 0), subtype_shapes(spec, 1)];
    let docs = (0..2 * spec.documents_per_subtype)
        .into_par_iter()
        .map(|i| render_document(spec, i, &shapes[i / spec.documents_per_subtype]))
        .collect::<Result<Vec<_>>>()?;

    let mut documents = Vec::new();
    let mut lines = Vec::new();
    let mut truth = SynthTruth {
        subtype_prototypes: SUBTYPES
            .iter()
            .enumerate()
            .map(|(i, s)| (s.to_string(), base_prototypes(spec, i)))
            .collect(),
        document_prototypes: BTreeMap::new(),
        placements: Vec::new(),
        backgrounds: Vec::new(),
    };
    for (i, doc) in docs.into_iter().enumerate() {
        let subtype = i / spec.documents_per_subtype;
        let entries = doc
            .lines
            .iter()
            .enumerate()
            .map(|(li, (line, _))| LineEntry {
                image: image_path(&doc.doc_id, li),
                transcription: line.transcription.iter().collect(),
            })
            .collect();
        documents.push(DocumentEntry {
            doc_id: doc.doc_id.clone(),
            subtype: Some(SUBTYPES[subtype].to_string()),
            reference_member: i % spec.documents_per_subtype < spec.reference_per_subtype,
            lines: entries,
        });
        truth
            .document_prototypes
            .insert(doc.doc_id.clone(), doc.prototypes);
        for (line, placements) in doc.lines {
            lines.push(line);
            truth.placements.push(placements);
            truth.backgrounds.push(PARCHMENT);
        }
    }
    Ok(SynthCorpus {
        manifest: CorpusManifest {
            corpus_id: spec.corpus_id.clone(),
            documents,
        },
        lines,
        truth,
    })
}

#[derive(Serialize)]
struct TruthFile<'a> {
    placements: &'a [Vec<Placement>],
    backgrounds: &'a [Rgb],
}

impl SynthCorpus {
    /// Write `manifest.json`, the line PNGs, `truth.json` (placements and
    /// backgrounds) and `truth/<subtype>_<char>.png`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir.join("images")).map_err(|e| Error::io(dir, e))?;
        let entries: Vec<&LineEntry> = self
            .manifest
            .documents
            .iter()
            .flat_map(|d| &d.lines)
            .collect();
        entries
            .par_iter()
            .zip(self.lines.par_iter())
            .try_for_each(|(entry, line)| write_png(&line.image, &dir.join(&entry.image)))?;
        for (subtype, protos) in &self.truth.subtype_prototypes {
            for p in protos {
                let name = format!("{subtype}_{}.png", file_stem(p.char_id));
                write_gray_png(&p.image, &dir.join("truth").join(name))?;
            }
        }
        write_json(
            &TruthFile {
                placements: &self.truth.placements,
                backgrounds: &self.truth.backgrounds,
            },
            &dir.join("truth.json"),
        )?;
        let manifest = dir.join("manifest.json");
        self.manifest.write(&manifest)?;
        Ok(manifest)
    }

    pub fn lines_of(&self, doc_id: &str) -> Vec<LineSample> {
        self.lines
            .iter()
            .filter(|l| l.doc_id == doc_id)
            .cloned()
            .collect()
    }
}

/// A `ColorImage` re-rendered from the truth bundle for line `i`.
pub fn rerender(corpus: &SynthCorpus, i: usize) -> Result<ColorImage> {
    let line = &corpus.lines[i];
    let protos = &corpus.truth.document_prototypes[&line.doc_id];
    let (w, h) = line.image.dimensions();
    composite_line(
        corpus.truth.backgrounds[i],
        w,
        h,
        &corpus.truth.placements[i],
        protos,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::difference_map;

    fn small() -> SynthSpec {
        SynthSpec {
            lines_per_document: 3,
            documents_per_subtype: 2,
            reference_per_subtype: 1,
            proto_side: 24,
            line_height: 24,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_lines_rerender_exactly() {
        let c = generate_corpus(&small()).unwrap();
        assert_eq!(c.lines.len(), 12);
        for i in 0..c.lines.len() {
            assert_eq!(rerender(&c, i).unwrap(), c.lines[i].image);
        }
        assert_eq!(c.manifest.documents[0].doc_id, "A1");
        assert!(c.manifest.documents[2].reference_member);
        assert!(!c.manifest.documents[3].reference_member);
    }

    #[test]
    fn seeded_generation_repeats() {
        let spec = SynthSpec {
            intensity_noise: 0.02,
            position_jitter: 1.0,
            shape_jitter: [0.1, 0.05],
            ..small()
        };
        assert_eq!(
            generate_corpus(&spec).unwrap(),
            generate_corpus(&spec).unwrap()
        );
        let other = SynthSpec {
            seed: 1,
            ..spec.clone()
        };
        assert_ne!(
            generate_corpus(&spec).unwrap().lines,
            generate_corpus(&other).unwrap().lines
        );
    }

    #[test]
    fn single_delta_confined_to_its_footprints() {
        let spec = SynthSpec {
            delta_chars: "a".into(),
            ..small()
        };
        let c = generate_corpus(&spec).unwrap();
        let a = &c.truth.document_prototypes["A1"];
        let b = &c.truth.document_prototypes["B1"];
        for (pa, pb) in a.iter().zip(b) {
            let d = difference_map(&pa.image, &pb.image).unwrap();
            let changed = d.signed.iter().any(|&v| v != 0.0);
            assert_eq!(changed, pa.char_id == 'a', "{}", pa.char_id);
        }
        // B1's lines rendered with A1's prototypes differ only under 'a' glyphs
        for (i, line) in c.lines.iter().enumerate().filter(|(_, l)| l.doc_id == "B1") {
            let (w, h) = line.image.dimensions();
            let placements = &c.truth.placements[i];
            let as_a = composite_line(PARCHMENT, w, h, placements, a).unwrap();
            for x in 0..w {
                let under_a = placements.iter().any(|p| {
                    p.char_id == 'a' && (x as f64) >= p.x - 1.0 && (x as f64) < p.x + 25.0
                });
                for y in 0..h {
                    if line.image.get(x, y) != as_a.get(x, y) {
                        assert!(under_a, "pixel ({x}, {y}) outside 'a' footprints differs");
                    }
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec {
            delta_chars: "q".into(),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            delta_chars: String::new(),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            alphabet: "abz".into(),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            position_jitter: -1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthSpec {
            glyphs_per_line: [3, 2],
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn written_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(&small()).unwrap();
        let manifest = c.write_to(dir.path()).unwrap();
        let options = crate::io::LoadOptions {
            line_height: 24,
            ..Default::default()
        };
        let loaded = crate::io::load_corpus(&manifest, &options).unwrap();
        assert_eq!(loaded.samples.len(), c.lines.len());
        for (a, b) in loaded.samples.iter().zip(&c.lines) {
            assert_eq!(a.transcription, b.transcription);
            assert!(a.image.mean_squared_diff(&b.image).unwrap() < 1e-5);
        }
    }
}
