use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    character_graph, difference_map, distance, document_graph, variability_report, ComparisonGraph,
    DifferenceMap, FleetMember, GraphContext, Norm, Side, VariabilityReport,
};
use crate::error::{Error, Result};
use crate::filter::{check_same_geometry, filter_model, FilterReport, Flag};
use crate::io::{
    emit_outputs, file_stem, load_corpus, load_model, normalize_transcription, safe_name,
    save_model, write_json, CorpusManifest, LoadOptions, LoadedCorpus, OutputBundle, SheetRow,
};
use crate::model::ModelState;
use crate::synth::generate_corpus;
use crate::typesetter::{finetune_prototypes, train_reference, TrainOutcome};

use super::config::{require, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterEntry {
    pub model: String,
    pub char_id: char,
    pub error: f64,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub content_id: String,
    pub lines: usize,
    pub rounds: usize,
    pub history: Vec<f64>,
    pub low_confidence_lines: Vec<usize>,
    pub unseen: Vec<char>,
}

impl TrainSummary {
    pub fn new(outcome: &TrainOutcome) -> Self {
        Self {
            content_id: outcome.model.content_id(),
            lines: outcome.alignments.len(),
            rounds: outcome.history.len(),
            history: outcome.history.clone(),
            low_confidence_lines: outcome
                .alignments
                .iter()
                .enumerate()
                .filter(|(_, a)| a.low_confidence)
                .map(|(i, _)| i)
                .collect(),
            unseen: outcome.unseen.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharDifference {
    pub char_id: char,
    pub l1: f64,
    pub l2: f64,
}

/// What the manifest says about a document, without decoding images.
#[derive(Debug, Clone, PartialEq)]
pub struct DocMeta {
    pub doc_id: String,
    pub subtype: Option<String>,
    pub reference_member: bool,
    pub frequencies: BTreeMap<char, u64>,
}

pub fn manifest_meta(path: &Path, load: &LoadOptions) -> Result<Vec<DocMeta>> {
    let manifest = CorpusManifest::read(path)?;
    manifest
        .documents
        .iter()
        .map(|d| {
            let mut frequencies = BTreeMap::new();
            for (i, l) in d.lines.iter().enumerate() {
                let labels =
                    normalize_transcription(&l.transcription, &load.charset).map_err(|e| {
                        Error::CorpusLine {
                            doc: d.doc_id.clone(),
                            line: i,
                            message: e.to_string(),
                        }
                    })?;
                for c in labels {
                    *frequencies.entry(c).or_insert(0) += 1;
                }
            }
            Ok(DocMeta {
                doc_id: d.doc_id.clone(),
                subtype: d.subtype.clone(),
                reference_member: d.reference_member,
                frequencies,
            })
        })
        .collect()
}

pub fn corpus_meta(corpus: &LoadedCorpus) -> Vec<DocMeta> {
    corpus
        .documents
        .iter()
        .map(|d| DocMeta {
            doc_id: d.doc_id.clone(),
            subtype: d.subtype.clone(),
            reference_member: d.reference_member,
            frequencies: corpus.frequencies(d),
        })
        .collect()
}

/// The two subtype labels compared, A first.
pub fn subtype_labels(config: &RunConfig, docs: &[DocMeta]) -> Result<(String, String)> {
    let found: BTreeSet<&str> = docs.iter().filter_map(|d| d.subtype.as_deref()).collect();
    let mut rest = found.iter().copied();
    let a = match &config.pipeline.subtype_a {
        Some(a) => a.clone(),
        None => rest.next().map(str::to_string).ok_or_else(|| {
            Error::Manifest(
                "no subtype labels in the manifest; set pipeline.subtype_a/subtype_b".into(),
            )
        })?,
    };
    let b = match &config.pipeline.subtype_b {
        Some(b) => b.clone(),
        None => found
            .iter()
            .find(|&&s| s != a)
            .map(|s| s.to_string())
            .ok_or_else(|| Error::Manifest("need two distinct subtype labels".into()))?,
    };
    if a == b {
        return Err(Error::config(
            "pipeline.subtype_b",
            "must differ from subtype_a",
        ));
    }
    for label in [&a, &b] {
        if !found.contains(label.as_str()) {
            return Err(Error::Manifest(format!(
                "no document has subtype {label:?}"
            )));
        }
    }
    Ok((a, b))
}

pub fn side_of(subtype: Option<&str>, labels: &(String, String)) -> Option<Side> {
    match subtype {
        Some(s) if s == labels.0 => Some(Side::A),
        Some(s) if s == labels.1 => Some(Side::B),
        _ => None,
    }
}

pub fn doc_model_name(doc_id: &str) -> String {
    format!("doc_{}.pglm", safe_name(doc_id))
}

fn model_label(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_prefix("doc_")
        .map(str::to_string)
        .unwrap_or(stem)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<(String, ModelState)>> {
    if paths.is_empty() {
        return Err(Error::config(
            "paths.models",
            "at least one model is required",
        ));
    }
    paths
        .iter()
        .map(|p| Ok((model_label(p), load_model(p)?)))
        .collect()
}

fn load_for(config: &RunConfig, line_height: Option<usize>) -> Result<LoadedCorpus> {
    let mut options = config.load.clone();
    if let Some(h) = line_height {
        options.line_height = h;
    }
    load_corpus(require(&config.paths.corpus, "corpus")?, &options)
}

pub fn sheet_row(label: &str, reports: &[FilterReport], filtered: bool) -> SheetRow {
    SheetRow {
        label: label.to_string(),
        cells: reports
            .iter()
            .map(|r| {
                if filtered {
                    (r.filtered.clone(), r.flag)
                } else {
                    (r.mask.clone(), r.flag)
                }
            })
            .collect(),
    }
}

pub fn filter_entries(label: &str, reports: &[FilterReport]) -> Vec<FilterEntry> {
    reports
        .iter()
        .map(|r| FilterEntry {
            model: label.to_string(),
            char_id: r.char_id,
            error: r.error,
            flag: r.flag,
        })
        .collect()
}

pub fn raw_row(label: &str, model: &ModelState) -> SheetRow {
    SheetRow {
        label: label.to_string(),
        cells: model
            .prototypes
            .iter()
            .map(|p| (p.image.clone(), Flag::Ok))
            .collect(),
    }
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_corpus(&config.synth)?;
    corpus.write_to(out)?;
    config.write_to(out)
}

pub fn train(config: &RunConfig, out: &Path) -> Result<()> {
    let corpus = load_for(config, None)?;
    let outcome = train_reference(&corpus.samples, &config.train)?;
    save_model(&outcome.model, &out.join("reference.pglm"))?;
    write_json(&TrainSummary::new(&outcome), &out.join("train_report.json"))?;
    config.write_to(out)
}

pub fn finetune(config: &RunConfig, out: &Path, per_document: bool) -> Result<()> {
    let reference = load_model(require(&config.paths.reference, "reference")?)?;
    let corpus = load_for(config, Some(reference.line_height))?;
    save_model(&reference, &out.join("reference.pglm"))?;
    let mut summaries = BTreeMap::new();
    if per_document {
        for d in &corpus.documents {
            let outcome = finetune_prototypes(&reference, corpus.lines_of(d), &config.finetune)?;
            save_model(&outcome.model, &out.join(doc_model_name(&d.doc_id)))?;
            summaries.insert(d.doc_id.clone(), TrainSummary::new(&outcome));
        }
    } else {
        let outcome = finetune_prototypes(&reference, &corpus.samples, &config.finetune)?;
        save_model(&outcome.model, &out.join("finetuned.pglm"))?;
        summaries.insert(corpus.corpus_id.clone(), TrainSummary::new(&outcome));
    }
    write_json(&summaries, &out.join("finetune_report.json"))?;
    config.write_to(out)
}

pub fn filter(config: &RunConfig, out: &Path) -> Result<()> {
    let reference = load_model(require(&config.paths.reference, "reference")?)?;
    let models = load_all(&config.paths.models)?;
    let mut bundle = OutputBundle::<Vec<FilterEntry>> {
        sheet: vec![raw_row("reference", &reference)],
        ..Default::default()
    };
    let mut entries = Vec::new();
    for (label, m) in &models {
        let reports = filter_model(&reference, m, &config.filter)?;
        bundle.sheet.push(sheet_row(label, &reports, true));
        entries.extend(filter_entries(label, &reports));
    }
    bundle.report = Some(entries);
    emit_outputs(&bundle, out)?;
    config.write_to(out)
}

pub fn differences(
    a: &ModelState,
    b: &ModelState,
    dir: &str,
    diffs: &mut Vec<(PathBuf, DifferenceMap)>,
) -> Result<Vec<CharDifference>> {
    check_same_geometry(a, b)?;
    a.prototypes
        .iter()
        .zip(&b.prototypes)
        .map(|(pa, pb)| {
            let map = difference_map(&pa.image, &pb.image)?;
            diffs.push((PathBuf::from(dir).join(file_stem(pa.char_id)), map));
            Ok(CharDifference {
                char_id: pa.char_id,
                l1: distance(&pa.image, &pb.image, Norm::L1)?,
                l2: distance(&pa.image, &pb.image, Norm::L2)?,
            })
        })
        .collect()
}

pub fn compare(config: &RunConfig, out: &Path) -> Result<()> {
    let a = load_model(require(&config.paths.a, "a")?)?;
    let b = load_model(require(&config.paths.b, "b")?)?;
    let mut bundle = OutputBundle::<Vec<CharDifference>>::default();
    let diffs = differences(&a, &b, ".", &mut bundle.diffs)?;
    bundle.report = Some(diffs);
    emit_outputs(&bundle, out)?;
    config.write_to(out)
}

struct Fleet {
    models: Vec<(String, ModelState)>,
    meta: Vec<Option<DocMeta>>,
    labels: Option<(String, String)>,
}

impl Fleet {
    fn load(config: &RunConfig) -> Result<Self> {
        let models = load_all(&config.paths.models)?;
        let docs = match &config.paths.corpus {
            Some(p) => manifest_meta(p, &config.load)?,
            None => Vec::new(),
        };
        let labels = if docs.iter().any(|d| d.subtype.is_some()) {
            Some(subtype_labels(config, &docs)?)
        } else {
            None
        };
        let meta = models
            .iter()
            .map(|(label, _)| {
                docs.iter()
                    .find(|d| &d.doc_id == label || &safe_name(&d.doc_id) == label)
                    .cloned()
            })
            .collect();
        Ok(Self {
            models,
            meta,
            labels,
        })
    }

    fn members(&self) -> Vec<FleetMember<'_>> {
        self.models
            .iter()
            .zip(&self.meta)
            .map(|((label, model), meta)| FleetMember {
                doc_id: meta.as_ref().map_or(label.as_str(), |m| m.doc_id.as_str()),
                model,
                subtype: match (&self.labels, meta) {
                    (Some(l), Some(m)) => side_of(m.subtype.as_deref(), l),
                    _ => None,
                },
                reference_member: meta.as_ref().is_some_and(|m| m.reference_member),
                frequencies: meta.as_ref().map(|m| &m.frequencies),
            })
            .collect()
    }
}

#[derive(Serialize)]
struct GraphReport<'a> {
    graphs: &'a [ComparisonGraph],
}

pub fn graph(config: &RunConfig, out: &Path) -> Result<()> {
    let reference = load_model(require(&config.paths.reference, "reference")?)?;
    let ref_a = load_model(require(&config.paths.ref_a, "ref_a")?)?;
    let ref_b = load_model(require(&config.paths.ref_b, "ref_b")?)?;
    let fleet = Fleet::load(config)?;
    let members = fleet.members();
    let ctx = GraphContext {
        reference: &reference,
        ref_a: &ref_a,
        ref_b: &ref_b,
        filter: &config.filter,
        options: &config.analysis,
    };
    let graphs = all_graphs(&ctx, &members)?;
    let bundle = OutputBundle {
        report: Some(serde_json::to_value(GraphReport { graphs: &graphs })?),
        graphs,
        ..Default::default()
    };
    emit_outputs(&bundle, out)?;
    config.write_to(out)
}

pub fn all_graphs(
    ctx: &GraphContext<'_>,
    members: &[FleetMember<'_>],
) -> Result<Vec<ComparisonGraph>> {
    let mut graphs = Vec::new();
    for &c in &ctx.reference.alphabet {
        graphs.push(character_graph(ctx, c, members)?);
    }
    for m in members {
        let owned;
        let freq = match m.frequencies {
            Some(f) => f,
            None => {
                owned = ctx
                    .reference
                    .alphabet
                    .iter()
                    .map(|&c| (c, 1))
                    .collect::<BTreeMap<_, _>>();
                &owned
            }
        };
        graphs.push(document_graph(ctx, m, freq)?);
    }
    Ok(graphs)
}

pub fn variability(config: &RunConfig, out: &Path) -> Result<()> {
    let reference = load_model(require(&config.paths.reference, "reference")?)?;
    require(&config.paths.corpus, "corpus")?;
    let fleet = Fleet::load(config)?;
    let members = fleet.members();
    let ctx = GraphContext {
        reference: &reference,
        ref_a: &reference,
        ref_b: &reference,
        filter: &config.filter,
        options: &config.analysis,
    };
    let reports = subtype_variability_reports(&ctx, &members, &fleet.meta)?;
    write_json(&reports, &out.join("report.json"))?;
    config.write_to(out)
}

/// One report per subtype label found among the members, sorted by label.
pub fn subtype_variability_reports(
    ctx: &GraphContext<'_>,
    members: &[FleetMember<'_>],
    meta: &[Option<DocMeta>],
) -> Result<Vec<VariabilityReport>> {
    let labels: BTreeSet<&str> = meta
        .iter()
        .flatten()
        .filter_map(|m| m.subtype.as_deref())
        .collect();
    if labels.is_empty() {
        return Err(Error::Manifest(
            "no document of the fleet has a subtype label".into(),
        ));
    }
    labels
        .into_iter()
        .map(|label| {
            let group: Vec<FleetMember<'_>> = members
                .iter()
                .zip(meta)
                .filter(|(_, m)| m.as_ref().and_then(|m| m.subtype.as_deref()) == Some(label))
                .map(|(f, _)| *f)
                .collect();
            variability_report(ctx, label, &group)
        })
        .collect()
}
