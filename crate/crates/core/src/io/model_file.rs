//! Binary model container.
//!
//! Layout: `b"PGLM"`, format version (u16 LE), header length (u32 LE), a
//! JSON header, every prototype plane as row-major f64 LE in alphabet
//! order, then a SHA-256 of all preceding bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Rgb};
use crate::model::{validate_model, ModelState, Prototype, Provenance};

pub const MAGIC: &[u8; 4] = b"PGLM";
pub const FORMAT_VERSION: u16 = 1;
pub const EXTENSION: &str = "pglm";
const DIGEST_LEN: usize = 32;
const PREAMBLE: usize = 4 + 2 + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub content_id: String,
    pub alphabet: Vec<char>,
    pub proto_side: usize,
    pub line_height: usize,
    pub bg_color: Rgb,
    pub provenance: Provenance,
    pub training_seed: u64,
}

pub fn encode_model(state: &ModelState) -> Result<Vec<u8>> {
    let violations = validate_model(state);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    let header = ModelHeader {
        content_id: state.content_id(),
        alphabet: state.alphabet.clone(),
        proto_side: state.proto_side,
        line_height: state.line_height,
        bg_color: state.bg_color,
        provenance: state.provenance.clone(),
        training_seed: state.training_seed,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &state.prototypes {
        for v in p.image.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn split_header(bytes: &[u8]) -> Result<(ModelHeader, &[u8])> {
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let end = PREAMBLE
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::ModelFormat("header length exceeds file".into()))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[PREAMBLE..end])
        .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
    Ok((header, &bytes[end..]))
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelState> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < PREAMBLE + DIGEST_LEN {
        return Err(Error::Checksum);
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (header, planes) = split_header(body)?;
    let side = header.proto_side;
    let plane = side * side * 8;
    if planes.len() != plane * header.alphabet.len() {
        return Err(Error::ModelFormat(format!(
            "expected {} plane bytes, found {}",
            plane * header.alphabet.len(),
            planes.len()
        )));
    }
    let prototypes = header
        .alphabet
        .iter()
        .zip(planes.chunks_exact(plane.max(1)))
        .map(|(&c, raw)| {
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            GrayImage::from_vec(side, side, data).map(|img| Prototype::new(c, img))
        })
        .collect::<Result<Vec<_>>>()?;
    let state = ModelState {
        alphabet: header.alphabet,
        prototypes,
        proto_side: header.proto_side,
        line_height: header.line_height,
        bg_color: header.bg_color,
        provenance: header.provenance,
        training_seed: header.training_seed,
    };
    let violations = validate_model(&state);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    if state.content_id() != header.content_id {
        return Err(Error::ModelFormat(
            "content id does not match contents".into(),
        ));
    }
    Ok(state)
}

pub fn save_model(state: &ModelState, path: &Path) -> Result<()> {
    let bytes = encode_model(state)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a model. A finetuned model whose parent is not among the model
/// files next to it still loads, with a warning.
pub fn load_model(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let state = decode_model(&bytes)?;
    if let Some(parent) = state.parent_id() {
        let dir = path.parent().unwrap_or(Path::new("."));
        if find_model(dir, parent)?.is_none() {
            log::warn!(
                "{}: parent model {parent} not found in {}",
                path.display(),
                dir.display()
            );
        }
    }
    Ok(state)
}

/// Content id from a model file's header, without reading the planes.
pub fn peek_content_id(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < PREAMBLE || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    Ok(split_header(&bytes)?.0.content_id)
}

/// The model file in `dir` with the given content id, if any.
pub fn find_model(dir: &Path, content_id: &str) -> Result<Option<PathBuf>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(None),
    };
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == EXTENSION))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .find(|p| peek_content_id(p).is_ok_and(|id| id == content_id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_state;

    fn odd_values() -> ModelState {
        let mut s = toy_state("aé", 5);
        s.prototypes[0].image.set(1, 1, 0.1 + 0.2);
        s.bg_color = [1.0 / 3.0, 0.7, f64::MIN_POSITIVE];
        s
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let s = odd_values();
        let back = decode_model(&encode_model(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.content_id(), s.content_id());
        let mut f = s.clone();
        f.provenance = Provenance::Finetuned(s.parent_info());
        assert_eq!(decode_model(&encode_model(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = encode_model(&odd_values()).unwrap();
        assert!(matches!(
            decode_model(&bytes[..bytes.len() - 9]),
            Err(Error::Checksum)
        ));
        let mut flipped = bytes.clone();
        flipped[40] ^= 1;
        assert!(matches!(decode_model(&flipped), Err(Error::Checksum)));
        assert!(matches!(decode_model(b"NOPE...."), Err(Error::BadMagic)));
    }

    #[test]
    fn version_is_checked() {
        let mut bytes = encode_model(&odd_values()).unwrap();
        bytes[4] = 9;
        let n = bytes.len() - DIGEST_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn dangling_parent_still_loads() {
        let dir = tempfile::tempdir().unwrap();
        let parent = odd_values();
        let mut child = parent.clone();
        child.provenance = Provenance::Finetuned(parent.parent_info());
        let path = dir.path().join("child.pglm");
        save_model(&child, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), child);
        assert!(find_model(dir.path(), &parent.content_id())
            .unwrap()
            .is_none());
        save_model(&parent, &dir.path().join("parent.pglm")).unwrap();
        assert_eq!(
            find_model(dir.path(), &parent.content_id()).unwrap(),
            Some(dir.path().join("parent.pglm"))
        );
    }
}
