use std::collections::{BTreeMap, HashSet};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::normalize_line;
use crate::model::{LineSample, DEFAULT_LINE_HEIGHT};

use super::png::read_png;
use super::transcription::{normalize_transcription, CharsetPolicy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineEntry {
    /// Relative paths resolve against the manifest's directory.
    pub image: PathBuf,
    pub transcription: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<String>,
    #[serde(default)]
    pub reference_member: bool,
    pub lines: Vec<LineEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub documents: Vec<DocumentEntry>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.documents {
            if d.doc_id.is_empty() {
                return Err(Error::Manifest("empty doc_id".into()));
            }
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::DuplicateDocument(d.doc_id.clone()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: CorpusManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    pub line_height: usize,
    pub charset: CharsetPolicy,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            line_height: DEFAULT_LINE_HEIGHT,
            charset: CharsetPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentInfo {
    pub doc_id: String,
    pub subtype: Option<String>,
    pub reference_member: bool,
    /// Indices into [`LoadedCorpus::samples`].
    pub lines: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub corpus_id: String,
    pub samples: Vec<LineSample>,
    pub documents: Vec<DocumentInfo>,
}

impl LoadedCorpus {
    pub fn document(&self, doc_id: &str) -> Option<&DocumentInfo> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn lines_of(&self, doc: &DocumentInfo) -> &[LineSample] {
        &self.samples[doc.lines.clone()]
    }

    /// Lines of every document satisfying `keep`, in manifest order.
    pub fn select(&self, mut keep: impl FnMut(&DocumentInfo) -> bool) -> Vec<LineSample> {
        self.documents
            .iter()
            .filter(|d| keep(d))
            .flat_map(|d| self.lines_of(d).iter().cloned())
            .collect()
    }

    pub fn frequencies(&self, doc: &DocumentInfo) -> BTreeMap<char, u64> {
        count_characters(self.lines_of(doc))
    }
}

pub fn count_characters(lines: &[LineSample]) -> BTreeMap<char, u64> {
    let mut counts = BTreeMap::new();
    for c in lines.iter().flat_map(|l| &l.transcription) {
        *counts.entry(*c).or_insert(0) += 1;
    }
    counts
}

/// Load every line of the manifest at `path`, in manifest order.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<LoadedCorpus> {
    let manifest = CorpusManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    load_manifest(&manifest, base, options)
}

pub fn load_manifest(
    manifest: &CorpusManifest,
    base: &Path,
    options: &LoadOptions,
) -> Result<LoadedCorpus> {
    manifest.validate()?;
    if options.line_height == 0 {
        return Err(Error::config("line_height", "must be positive"));
    }
    let jobs: Vec<(&str, usize, &LineEntry)> = manifest
        .documents
        .iter()
        .flat_map(|d| {
            d.lines
                .iter()
                .enumerate()
                .map(move |(i, l)| (d.doc_id.as_str(), i, l))
        })
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(doc, line, entry)| {
            let at = |message: String| Error::CorpusLine {
                doc: doc.to_string(),
                line,
                message,
            };
            let transcription = normalize_transcription(&entry.transcription, &options.charset)
                .map_err(|e| at(e.to_string()))?;
            if transcription.is_empty() {
                return Err(at("empty transcription".into()));
            }
            let raw = read_png(&base.join(&entry.image)).map_err(|e| at(e.to_string()))?;
            let image = normalize_line(&raw, options.line_height).map_err(|e| at(e.to_string()))?;
            Ok(LineSample {
                image,
                transcription,
                doc_id: doc.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut documents = Vec::with_capacity(manifest.documents.len());
    let mut start = 0;
    for d in &manifest.documents {
        documents.push(DocumentInfo {
            doc_id: d.doc_id.clone(),
            subtype: d.subtype.clone(),
            reference_member: d.reference_member,
            lines: start..start + d.lines.len(),
        });
        start += d.lines.len();
    }
    Ok(LoadedCorpus {
        corpus_id: manifest.corpus_id.clone(),
        samples,
        documents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorImage;
    use crate::io::png::write_png;

    fn write_corpus(dir: &Path, docs: &[&str], lines: usize) -> PathBuf {
        let mut documents = Vec::new();
        for (di, d) in docs.iter().enumerate() {
            let mut entries = Vec::new();
            for li in 0..lines {
                let name = format!("{d}_{li}.png");
                let shade = (di * lines + li) as f64 / 10.0;
                write_png(
                    &ColorImage::filled(20, 64, [shade, 0.5, 1.0]),
                    &dir.join(&name),
                )
                .unwrap();
                entries.push(LineEntry {
                    image: name.into(),
                    transcription: "ab".into(),
                });
            }
            documents.push(DocumentEntry {
                doc_id: d.to_string(),
                subtype: None,
                reference_member: di == 0,
                lines: entries,
            });
        }
        let path = dir.join("manifest.json");
        CorpusManifest {
            corpus_id: "t".into(),
            documents,
        }
        .write(&path)
        .unwrap();
        path
    }

    #[test]
    fn two_documents_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(dir.path(), &["d1", "d2"], 3);
        let c = load_corpus(&path, &LoadOptions::default()).unwrap();
        assert_eq!(c.samples.len(), 6);
        assert_eq!(c.documents[1].lines, 3..6);
        assert_eq!(c.samples[4].doc_id, "d2");
        let expected = (4.0f64 / 10.0 * 255.0).round() / 255.0;
        assert_eq!(c.samples[4].image.get(0, 0)[0], expected);
        assert_eq!(c.frequencies(&c.documents[0])[&'a'], 3);
        assert_eq!(load_corpus(&path, &LoadOptions::default()).unwrap(), c);
    }

    #[test]
    fn missing_image_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(dir.path(), &["d1"], 2);
        std::fs::remove_file(dir.path().join("d1_1.png")).unwrap();
        let err = load_corpus(&path, &LoadOptions::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("d1_1.png") && err.contains("line 1"), "{err}");
    }

    #[test]
    fn duplicate_doc_rejected() {
        let text = r#"{"corpus_id":"x","documents":[
            {"doc_id":"a","lines":[]},{"doc_id":"a","lines":[]}]}"#;
        assert!(matches!(
            CorpusManifest::from_json(text),
            Err(Error::DuplicateDocument(_))
        ));
    }

    #[test]
    fn empty_transcription_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_corpus(dir.path(), &["d1"], 1);
        let mut m = CorpusManifest::read(&path).unwrap();
        m.documents[0].lines[0].transcription = "  ".into();
        let err = load_manifest(&m, dir.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("empty transcription"));
    }
}
