use std::path::Path;

use log::info;
use serde::Serialize;

use crate::analysis::{ComparisonGraph, FleetMember, GraphContext, VariabilityReport};
use crate::error::{Error, Result};
use crate::filter::{filter_model, FilterReport};
use crate::io::{
    emit_outputs, load_corpus, safe_name, save_model, DocumentInfo, LoadedCorpus, OutputBundle,
};
use crate::model::{LineSample, ModelState};
use crate::typesetter::{finetune_prototypes, train_reference};

use super::commands::{
    all_graphs, corpus_meta, differences, doc_model_name, filter_entries, raw_row, sheet_row,
    side_of, subtype_labels, subtype_variability_reports, CharDifference, FilterEntry,
    TrainSummary,
};
use super::config::{require, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubtypeModel {
    pub label: String,
    pub model_id: String,
    pub documents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentModel {
    pub doc_id: String,
    pub subtype: Option<String>,
    pub reference_member: bool,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub corpus_id: String,
    pub reference: TrainSummary,
    pub reference_documents: Vec<String>,
    pub subtype_a: SubtypeModel,
    pub subtype_b: SubtypeModel,
    pub documents: Vec<DocumentModel>,
    pub filter: Vec<FilterEntry>,
    pub subtype_differences: Vec<CharDifference>,
    pub graphs: Vec<ComparisonGraph>,
    pub variability: Vec<VariabilityReport>,
}

/// Reference-member documents matching `keep`, or every matching one if
/// none is marked.
fn training_docs(
    corpus: &LoadedCorpus,
    keep: impl Fn(&DocumentInfo) -> bool,
) -> Vec<&DocumentInfo> {
    let all: Vec<&DocumentInfo> = corpus.documents.iter().filter(|d| keep(d)).collect();
    let members: Vec<&DocumentInfo> = all.iter().copied().filter(|d| d.reference_member).collect();
    if members.is_empty() {
        all
    } else {
        members
    }
}

fn lines(corpus: &LoadedCorpus, docs: &[&DocumentInfo]) -> Vec<LineSample> {
    docs.iter()
        .flat_map(|d| corpus.lines_of(d).iter().cloned())
        .collect()
}

fn ids(docs: &[&DocumentInfo]) -> Vec<String> {
    docs.iter().map(|d| d.doc_id.clone()).collect()
}

/// Train, finetune, filter, compare, graph and score one manifest; writes
/// every artefact under `out` and returns the report also saved there.
pub fn run_pipeline(config: &RunConfig, out: &Path) -> Result<PipelineReport> {
    let corpus = load_corpus(require(&config.paths.corpus, "corpus")?, &config.load)?;
    if corpus.samples.is_empty() {
        return Err(Error::Manifest("corpus has no lines".into()));
    }
    let meta = corpus_meta(&corpus);
    let labels = subtype_labels(config, &meta)?;
    let models_dir = out.join("models");

    let ref_docs = training_docs(&corpus, |_| true);
    info!("training reference on {} documents", ref_docs.len());
    let trained = train_reference(&lines(&corpus, &ref_docs), &config.train)?;
    let reference = trained.model.clone();
    save_model(&reference, &models_dir.join("reference.pglm"))?;

    let subtype_model = |label: &str| -> Result<(ModelState, SubtypeModel)> {
        let docs = training_docs(&corpus, |d| d.subtype.as_deref() == Some(label));
        info!("finetuning subtype {label} on {} documents", docs.len());
        let model =
            finetune_prototypes(&reference, &lines(&corpus, &docs), &config.finetune)?.model;
        save_model(
            &model,
            &models_dir.join(format!("subtype_{}.pglm", safe_name(label))),
        )?;
        let summary = SubtypeModel {
            label: label.to_string(),
            model_id: model.content_id(),
            documents: ids(&docs),
        };
        Ok((model, summary))
    };
    let (ref_a, sub_a) = subtype_model(&labels.0)?;
    let (ref_b, sub_b) = subtype_model(&labels.1)?;

    let mut doc_models = Vec::with_capacity(corpus.documents.len());
    for d in &corpus.documents {
        info!("finetuning document {}", d.doc_id);
        let model = finetune_prototypes(&reference, corpus.lines_of(d), &config.finetune)?.model;
        save_model(&model, &models_dir.join(doc_model_name(&d.doc_id)))?;
        doc_models.push(model);
    }

    let mut bundle = OutputBundle::<PipelineReport> {
        sheet: vec![raw_row("reference", &reference)],
        ..Default::default()
    };
    let mut filter = Vec::new();
    let named = [(&sub_a.label, &ref_a), (&sub_b.label, &ref_b)];
    let named = named
        .iter()
        .map(|(l, m)| (format!("subtype_{l}"), *m))
        .chain(
            corpus
                .documents
                .iter()
                .zip(&doc_models)
                .map(|(d, m)| (d.doc_id.clone(), m)),
        );
    for (label, model) in named {
        let reports = filter_model(&reference, model, &config.filter)?;
        bundle.sheet.push(sheet_row(&label, &reports, true));
        filter.extend(filter_entries(&label, &reports));
    }

    let filtered = |m: &ModelState| -> Result<ModelState> {
        let reports: Vec<FilterReport> = filter_model(&reference, m, &config.filter)?;
        let mut m = m.clone();
        for (p, r) in m.prototypes.iter_mut().zip(reports) {
            p.image = r.filtered;
        }
        Ok(m)
    };
    let dir = format!("{}_vs_{}", safe_name(&labels.0), safe_name(&labels.1));
    let subtype_differences = differences(
        &filtered(&ref_a)?,
        &filtered(&ref_b)?,
        &dir,
        &mut bundle.diffs,
    )?;

    let members: Vec<FleetMember<'_>> = corpus
        .documents
        .iter()
        .zip(&doc_models)
        .zip(&meta)
        .map(|((d, model), m)| FleetMember {
            doc_id: &d.doc_id,
            model,
            subtype: side_of(d.subtype.as_deref(), &labels),
            reference_member: d.reference_member,
            frequencies: Some(&m.frequencies),
        })
        .collect();
    let ctx = GraphContext {
        reference: &reference,
        ref_a: &ref_a,
        ref_b: &ref_b,
        filter: &config.filter,
        options: &config.analysis,
    };
    let graphs = all_graphs(&ctx, &members)?;
    let meta_opt: Vec<_> = meta.iter().cloned().map(Some).collect();
    let variability = subtype_variability_reports(&ctx, &members, &meta_opt)?;

    let report = PipelineReport {
        corpus_id: corpus.corpus_id.clone(),
        reference: TrainSummary::new(&trained),
        reference_documents: ids(&ref_docs),
        subtype_a: sub_a,
        subtype_b: sub_b,
        documents: corpus
            .documents
            .iter()
            .zip(&doc_models)
            .map(|(d, m)| DocumentModel {
                doc_id: d.doc_id.clone(),
                subtype: d.subtype.clone(),
                reference_member: d.reference_member,
                model_id: m.content_id(),
            })
            .collect(),
        filter,
        subtype_differences,
        graphs: graphs.clone(),
        variability,
    };
    bundle.graphs = graphs;
    bundle.report = Some(report);
    emit_outputs(&bundle, out)?;
    config.write_to(out)?;
    Ok(bundle.report.take().expect("report set"))
}
