//! Prototypes, placements, and the model state shared by every stage.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::image::{ColorImage, GrayImage, Rgb};

pub const DEFAULT_PROTO_SIDE: usize = 64;
pub const DEFAULT_LINE_HEIGHT: usize = 64;

/// One character's template. Intensity 1 is ink, 0 is absence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub char_id: char,
    pub image: GrayImage,
}

impl Prototype {
    pub fn new(char_id: char, image: GrayImage) -> Self {
        Self { char_id, image }
    }
}

/// A single glyph instance on a line.
///
/// `x` is the left edge of the scaled prototype footprint in line pixels.
/// The footprint is centred vertically on the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub char_id: char,
    pub x: f64,
    pub scale: f64,
    pub fg_color: Rgb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSample {
    pub image: ColorImage,
    pub transcription: Vec<char>,
    pub doc_id: String,
}

/// What the parent of a finetuned model looked like, recorded so that a
/// finetuned state can be validated on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentInfo {
    pub id: String,
    pub alphabet: Vec<char>,
    pub proto_side: usize,
    pub line_height: usize,
    pub bg_color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Reference,
    Finetuned(ParentInfo),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub alphabet: Vec<char>,
    pub prototypes: Vec<Prototype>,
    pub proto_side: usize,
    pub line_height: usize,
    pub bg_color: Rgb,
    pub provenance: Provenance,
    pub training_seed: u64,
}

impl ModelState {
    pub fn prototype(&self, c: char) -> Option<&Prototype> {
        self.prototypes.iter().find(|p| p.char_id == c)
    }

    pub fn is_finetuned(&self) -> bool {
        matches!(self.provenance, Provenance::Finetuned(_))
    }

    pub fn parent_id(&self) -> Option<&str> {
        match &self.provenance {
            Provenance::Finetuned(p) => Some(&p.id),
            Provenance::Reference => None,
        }
    }

    /// Summary of this state as a parent of a future finetuning.
    pub fn parent_info(&self) -> ParentInfo {
        ParentInfo {
            id: self.content_id(),
            alphabet: self.alphabet.clone(),
            proto_side: self.proto_side,
            line_height: self.line_height,
            bg_color: self.bg_color,
        }
    }

    /// Hex SHA-256 over every field, bit-exact on floating point values.
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"protoglyph-model\0");
        h.update((self.alphabet.len() as u64).to_le_bytes());
        for c in &self.alphabet {
            h.update((*c as u32).to_le_bytes());
        }
        h.update((self.proto_side as u64).to_le_bytes());
        h.update((self.line_height as u64).to_le_bytes());
        for v in self.bg_color {
            h.update(v.to_bits().to_le_bytes());
        }
        match &self.provenance {
            Provenance::Reference => h.update(b"reference"),
            Provenance::Finetuned(p) => {
                h.update(b"finetuned:");
                h.update(p.id.as_bytes());
            }
        }
        h.update(self.training_seed.to_le_bytes());
        for p in &self.prototypes {
            h.update((p.char_id as u32).to_le_bytes());
            h.update((p.image.width() as u64).to_le_bytes());
            h.update((p.image.height() as u64).to_le_bytes());
            for v in p.image.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyGeometry,
    DuplicateLabel(char),
    MissingPrototype(char),
    DuplicatePrototype(char),
    UnexpectedPrototype(char),
    PrototypeOrder,
    PrototypeSize {
        char_id: char,
        width: usize,
        height: usize,
    },
    IntensityOutOfRange(char),
    BackgroundOutOfRange,
    GeometryMismatch,
    AlphabetMismatch,
    BackgroundMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyGeometry => write!(f, "proto_side/line_height: must be positive"),
            Violation::DuplicateLabel(c) => write!(f, "alphabet: duplicate label {c:?}"),
            Violation::MissingPrototype(c) => write!(f, "prototypes: missing-prototype({c:?})"),
            Violation::DuplicatePrototype(c) => {
                write!(f, "prototypes: more than one prototype for {c:?}")
            }
            Violation::UnexpectedPrototype(c) => {
                write!(f, "prototypes: {c:?} is not in the alphabet")
            }
            Violation::PrototypeOrder => {
                write!(f, "prototypes: order differs from the alphabet")
            }
            Violation::PrototypeSize {
                char_id,
                width,
                height,
            } => write!(
                f,
                "prototypes: {char_id:?} is {width}x{height}, expected proto_side square"
            ),
            Violation::IntensityOutOfRange(c) => {
                write!(f, "prototypes: {c:?} has intensities outside [0, 1]")
            }
            Violation::BackgroundOutOfRange => write!(f, "bg_color: channel outside [0, 1]"),
            Violation::GeometryMismatch => {
                write!(f, "provenance: geometry-mismatch with parent")
            }
            Violation::AlphabetMismatch => {
                write!(f, "provenance: alphabet differs from parent")
            }
            Violation::BackgroundMismatch => {
                write!(f, "provenance: bg_color differs from parent")
            }
        }
    }
}

/// Check every `ModelState` invariant. Never aborts; an empty list means
/// the state is well formed.
pub fn validate_model(state: &ModelState) -> Vec<Violation> {
    let mut out = Vec::new();
    if state.proto_side == 0 || state.line_height == 0 {
        out.push(Violation::EmptyGeometry);
    }
    let mut seen = BTreeSet::new();
    for &c in &state.alphabet {
        if !seen.insert(c) {
            out.push(Violation::DuplicateLabel(c));
        }
    }
    for &c in &seen {
        match state.prototypes.iter().filter(|p| p.char_id == c).count() {
            0 => out.push(Violation::MissingPrototype(c)),
            1 => {}
            _ => out.push(Violation::DuplicatePrototype(c)),
        }
    }
    for p in &state.prototypes {
        if !seen.contains(&p.char_id) {
            out.push(Violation::UnexpectedPrototype(p.char_id));
        }
        if p.image.width() != state.proto_side || p.image.height() != state.proto_side {
            out.push(Violation::PrototypeSize {
                char_id: p.char_id,
                width: p.image.width(),
                height: p.image.height(),
            });
        }
        if p.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            out.push(Violation::IntensityOutOfRange(p.char_id));
        }
    }
    let order_ok = state.prototypes.len() == state.alphabet.len()
        && state
            .prototypes
            .iter()
            .zip(&state.alphabet)
            .all(|(p, &c)| p.char_id == c);
    if !order_ok && out.is_empty() {
        out.push(Violation::PrototypeOrder);
    }
    if state.bg_color.iter().any(|v| !(0.0..=1.0).contains(v)) {
        out.push(Violation::BackgroundOutOfRange);
    }
    if let Provenance::Finetuned(parent) = &state.provenance {
        if parent.proto_side != state.proto_side || parent.line_height != state.line_height {
            out.push(Violation::GeometryMismatch);
        }
        if parent.alphabet != state.alphabet {
            out.push(Violation::AlphabetMismatch);
        }
        if parent.bg_color != state.bg_color {
            out.push(Violation::BackgroundMismatch);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_state(alphabet: &str, side: usize) -> ModelState {
        let alphabet: Vec<char> = alphabet.chars().collect();
        let prototypes = alphabet
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Prototype::new(
                    c,
                    GrayImage::from_fn(side, side, |x, y| ((x + y + i) % 5) as f64 / 4.0),
                )
            })
            .collect();
        ModelState {
            alphabet,
            prototypes,
            proto_side: side,
            line_height: side,
            bg_color: [0.9, 0.85, 0.8],
            provenance: Provenance::Reference,
            training_seed: 7,
        }
    }

    #[test]
    fn well_formed_state_has_no_violations() {
        assert!(validate_model(&toy_state("abc", 8)).is_empty());
    }

    #[test]
    fn missing_prototype_is_named() {
        let mut s = toy_state("pq", 8);
        s.prototypes.retain(|p| p.char_id != 'q');
        assert_eq!(validate_model(&s), vec![Violation::MissingPrototype('q')]);
    }

    #[test]
    fn finetuned_geometry_mismatch() {
        let parent = toy_state("ab", 8);
        let mut child = toy_state("ab", 8);
        let mut info = parent.parent_info();
        info.proto_side = 16;
        child.provenance = Provenance::Finetuned(info);
        assert_eq!(validate_model(&child), vec![Violation::GeometryMismatch]);
    }

    #[test]
    fn wrong_size_and_duplicates() {
        let mut s = toy_state("ab", 8);
        s.prototypes[1].image = GrayImage::new(4, 8);
        s.alphabet.push('a');
        let v = validate_model(&s);
        assert!(v.contains(&Violation::DuplicateLabel('a')));
        assert!(v.contains(&Violation::PrototypeSize {
            char_id: 'b',
            width: 4,
            height: 8
        }));
    }

    #[test]
    fn content_id_tracks_pixels() {
        let a = toy_state("ab", 8);
        let mut b = a.clone();
        assert_eq!(a.content_id(), b.content_id());
        b.prototypes[0].image.set(0, 0, 0.3);
        assert_ne!(a.content_id(), b.content_id());
    }
}
