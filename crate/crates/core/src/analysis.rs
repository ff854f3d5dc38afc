//! Difference maps, pixel-space distances, comparison graphs and
//! intra-subtype variability.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{
    check_same_geometry, filter_prototype, filtering_error, flag, reference_mask, FilterParams,
    Flag,
};
use crate::image::{ColorImage, GrayImage};
use crate::model::ModelState;

/// `|signed|` below this renders as pure white.
pub const WHITE_BAND: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    /// Sum of per-pixel standard deviations (pixel units).
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub norm: Norm,
    /// Compare filtered prototypes `F` rather than raw `P`.
    pub filtered: bool,
    pub aggregate: Aggregate,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            norm: Norm::L2,
            filtered: true,
            aggregate: Aggregate::Sum,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    pub width: usize,
    pub height: usize,
    /// Row-major `A - B`.
    pub signed: Vec<f64>,
    pub render: ColorImage,
}

/// Colour for one signed value: white at 0, blue for positive, red for negative.
pub fn diverging_color(v: f64) -> [f64; 3] {
    if v.abs() < WHITE_BAND {
        [1.0, 1.0, 1.0]
    } else if v > 0.0 {
        let m = v.min(1.0);
        [1.0 - m, 1.0 - m, 1.0]
    } else {
        let m = (-v).min(1.0);
        [1.0, 1.0 - m, 1.0 - m]
    }
}

pub fn difference_map(a: &GrayImage, b: &GrayImage) -> Result<DifferenceMap> {
    a.same_size(b)?;
    let signed: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    let (width, height) = a.dimensions();
    let render = ColorImage::from_fn(width, height, |x, y| diverging_color(signed[y * width + x]));
    Ok(DifferenceMap {
        width,
        height,
        signed,
        render,
    })
}

/// Euclidean distance between two equal-size images.
pub fn prototype_distance(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    distance(a, b, Norm::L2)
}

pub fn distance(a: &GrayImage, b: &GrayImage, norm: Norm) -> Result<f64> {
    a.same_size(b)?;
    let diffs = a.data().iter().zip(b.data()).map(|(x, y)| x - y);
    Ok(match norm {
        Norm::L1 => diffs.map(f64::abs).sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marker {
    ReferenceDot,
    HoldoutCross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Character,
    Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPoint {
    pub label: String,
    pub d_a: f64,
    pub d_b: f64,
    pub marker: Marker,
    /// Declared subtype of the point's document, if known.
    pub class: Option<Side>,
    pub frequency: Option<u64>,
    /// Darkness in [0, 1]; 1 is the rarest character.
    pub shade: Option<f64>,
    pub flag: Flag,
}

impl GraphPoint {
    /// The side of the diagonal the point falls on; `None` exactly on it.
    pub fn side(&self) -> Option<Side> {
        if self.d_a < self.d_b {
            Some(Side::A)
        } else if self.d_b < self.d_a {
            Some(Side::B)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGraph {
    pub kind: GraphKind,
    pub subject: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<GraphPoint>,
    /// Labels with no occurrences, hence no point.
    pub omitted: Vec<String>,
}

/// `shade = 1 - min(1, ln(1 + n) / ln(1 + n_max))`.
pub fn frequency_shade(n: u64, n_max: u64) -> f64 {
    if n_max == 0 {
        return 0.0;
    }
    let r = (n as f64).ln_1p() / (n_max as f64).ln_1p();
    1.0 - r.min(1.0)
}

/// Everything graphs and variability need besides the fleet itself.
#[derive(Debug, Clone, Copy)]
pub struct GraphContext<'a> {
    pub reference: &'a ModelState,
    pub ref_a: &'a ModelState,
    pub ref_b: &'a ModelState,
    pub filter: &'a FilterParams,
    pub options: &'a AnalysisOptions,
}

#[derive(Debug, Clone, Copy)]
pub struct FleetMember<'a> {
    pub doc_id: &'a str,
    pub model: &'a ModelState,
    pub subtype: Option<Side>,
    pub reference_member: bool,
    /// Per-character occurrence counts in the document's corpus.
    pub frequencies: Option<&'a BTreeMap<char, u64>>,
}

impl FleetMember<'_> {
    fn occurrences(&self, c: char) -> Option<u64> {
        self.frequencies.map(|f| f.get(&c).copied().unwrap_or(0))
    }
}

fn char_label(c: char) -> String {
    c.to_string()
}

impl<'a> GraphContext<'a> {
    fn check_lineage(&self, model: &ModelState, name: &str) -> Result<()> {
        check_same_geometry(self.reference, model)?;
        if model.bg_color != self.reference.bg_color {
            return Err(Error::GeometryMismatch(format!(
                "{name}: background differs from the reference"
            )));
        }
        let id = self.reference.content_id();
        match model.parent_id() {
            Some(p) if p == id => Ok(()),
            None if model.content_id() == id => Ok(()),
            Some(p) => Err(Error::Lineage(format!(
                "{name} is finetuned from {p}, not from reference {id}"
            ))),
            None => Err(Error::Lineage(format!(
                "{name} is a reference model other than {id}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options_ok()?;
        self.check_lineage(self.ref_a, "ref_a")?;
        self.check_lineage(self.ref_b, "ref_b")
    }

    fn options_ok(&self) -> Result<()> {
        self.filter.validate()
    }

    fn mask(&self, c: char) -> Result<GrayImage> {
        let r = self
            .reference
            .prototype(c)
            .ok_or(Error::UnknownCharacter(c))?;
        reference_mask(&r.image, self.filter)
    }

    /// The prototype of `c` as compared, plus its filter flag.
    fn compared(&self, model: &ModelState, c: char, mask: &GrayImage) -> Result<(GrayImage, Flag)> {
        let p = &model.prototype(c).ok_or(Error::UnknownCharacter(c))?.image;
        let e = filtering_error(mask, p, self.filter)?;
        let image = if self.options.filtered {
            filter_prototype(mask, p)?
        } else {
            p.clone()
        };
        Ok((image, flag(e, self.filter)))
    }

    fn axis_labels(&self) -> (String, String) {
        (
            "distance to reference A".to_string(),
            "distance to reference B".to_string(),
        )
    }
}

/// One point per document (with occurrences of `c`) of the fleet.
pub fn character_graph(
    ctx: &GraphContext<'_>,
    c: char,
    fleet: &[FleetMember<'_>],
) -> Result<ComparisonGraph> {
    ctx.validate()?;
    let mask = ctx.mask(c)?;
    let (fa, _) = ctx.compared(ctx.ref_a, c, &mask)?;
    let (fb, _) = ctx.compared(ctx.ref_b, c, &mask)?;
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for m in fleet {
        ctx.check_lineage(m.model, m.doc_id)?;
        let count = m.occurrences(c);
        if count == Some(0) {
            omitted.push(m.doc_id.to_string());
            continue;
        }
        let (f, fl) = ctx.compared(m.model, c, &mask)?;
        points.push(GraphPoint {
            label: m.doc_id.to_string(),
            d_a: distance(&f, &fa, ctx.options.norm)?,
            d_b: distance(&f, &fb, ctx.options.norm)?,
            marker: if m.reference_member {
                Marker::ReferenceDot
            } else {
                Marker::HoldoutCross
            },
            class: m.subtype,
            frequency: count,
            shade: None,
            flag: fl,
        });
    }
    let (x_label, y_label) = ctx.axis_labels();
    Ok(ComparisonGraph {
        kind: GraphKind::Character,
        subject: char_label(c),
        x_label,
        y_label,
        points,
        omitted,
    })
}

/// One point per alphabet character present in the document.
pub fn document_graph(
    ctx: &GraphContext<'_>,
    member: &FleetMember<'_>,
    frequencies: &BTreeMap<char, u64>,
) -> Result<ComparisonGraph> {
    ctx.validate()?;
    ctx.check_lineage(member.model, member.doc_id)?;
    let n_max = ctx
        .reference
        .alphabet
        .iter()
        .map(|c| frequencies.get(c).copied().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for &c in &ctx.reference.alphabet {
        let n = frequencies.get(&c).copied().unwrap_or(0);
        if n == 0 {
            omitted.push(char_label(c));
            continue;
        }
        let mask = ctx.mask(c)?;
        let (f, fl) = ctx.compared(member.model, c, &mask)?;
        let (fa, _) = ctx.compared(ctx.ref_a, c, &mask)?;
        let (fb, _) = ctx.compared(ctx.ref_b, c, &mask)?;
        points.push(GraphPoint {
            label: char_label(c),
            d_a: distance(&f, &fa, ctx.options.norm)?,
            d_b: distance(&f, &fb, ctx.options.norm)?,
            marker: if member.reference_member {
                Marker::ReferenceDot
            } else {
                Marker::HoldoutCross
            },
            class: member.subtype,
            frequency: Some(n),
            shade: Some(frequency_shade(n, n_max)),
            flag: fl,
        });
    }
    let (x_label, y_label) = ctx.axis_labels();
    Ok(ComparisonGraph {
        kind: GraphKind::Document,
        subject: member.doc_id.to_string(),
        x_label,
        y_label,
        points,
        omitted,
    })
}

/// Per-pixel population standard deviation across images, aggregated.
pub fn subtype_variability(prototypes: &[GrayImage], aggregate: Aggregate) -> Result<f64> {
    if prototypes.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: prototypes.len(),
        });
    }
    let first = &prototypes[0];
    for p in &prototypes[1..] {
        first.same_size(p)?;
    }
    let n = prototypes.len() as f64;
    let pixels = first.data().len();
    let total: f64 = (0..pixels)
        .map(|k| {
            let mean = prototypes.iter().map(|p| p.data()[k]).sum::<f64>() / n;
            let var = prototypes
                .iter()
                .map(|p| (p.data()[k] - mean).powi(2))
                .sum::<f64>()
                / n;
            var.sqrt()
        })
        .sum();
    Ok(match aggregate {
        Aggregate::Sum => total,
        Aggregate::Mean => total / pixels as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    pub subtype: String,
    pub aggregate: Aggregate,
    pub sigma: BTreeMap<char, f64>,
    /// Characters with fewer than two contributing documents.
    pub skipped: Vec<char>,
    pub documents: Vec<String>,
}

/// Variability of every character across the given documents of one subtype.
///
/// A document contributes to a character only if it has occurrences of it
/// (when frequencies are known).
pub fn variability_report(
    ctx: &GraphContext<'_>,
    subtype: &str,
    members: &[FleetMember<'_>],
) -> Result<VariabilityReport> {
    ctx.options_ok()?;
    for m in members {
        ctx.check_lineage(m.model, m.doc_id)?;
    }
    let mut sigma = BTreeMap::new();
    let mut skipped = Vec::new();
    for &c in &ctx.reference.alphabet {
        let mask = ctx.mask(c)?;
        let images = members
            .iter()
            .filter(|m| m.occurrences(c) != Some(0))
            .map(|m| ctx.compared(m.model, c, &mask).map(|(img, _)| img))
            .collect::<Result<Vec<_>>>()?;
        if images.len() < 2 {
            skipped.push(c);
            continue;
        }
        sigma.insert(c, subtype_variability(&images, ctx.options.aggregate)?);
    }
    Ok(VariabilityReport {
        subtype: subtype.to_string(),
        aggregate: ctx.options.aggregate,
        sigma,
        skipped,
        documents: members.iter().map(|m| m.doc_id.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::toy_state;
    use crate::model::Provenance;

    fn one(v: f64) -> GrayImage {
        GrayImage::filled(1, 1, v)
    }

    #[test]
    fn identical_images_render_white() {
        let a = GrayImage::from_fn(4, 3, |x, y| (x + y) as f64 / 6.0);
        let d = difference_map(&a, &a).unwrap();
        assert!(d.render.data().iter().all(|c| *c == [1.0; 3]));
        assert!(d.signed.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_is_blue_negative_is_red() {
        let d = difference_map(&one(1.0), &one(0.0)).unwrap();
        assert_eq!(d.render.get(0, 0), [0.0, 0.0, 1.0]);
        let d = difference_map(&one(0.0), &one(1.0)).unwrap();
        assert_eq!(d.render.get(0, 0), [1.0, 0.0, 0.0]);
        assert_eq!(d.signed, vec![-1.0]);
    }

    #[test]
    fn white_band_edge() {
        assert_eq!(diverging_color(0.5 / 255.0), [1.0; 3]);
        assert_ne!(diverging_color(1.0 / 255.0), [1.0; 3]);
        assert_eq!(diverging_color(-0.5), [1.0, 0.5, 0.5]);
    }

    #[test]
    fn four_pixel_distance() {
        let a = GrayImage::new(3, 3);
        let b = GrayImage::from_fn(3, 3, |x, y| {
            if x + y < 2 || (x, y) == (2, 2) {
                0.5
            } else {
                0.0
            }
        });
        assert_eq!(prototype_distance(&a, &b).unwrap(), 1.0);
        assert_eq!(distance(&a, &b, Norm::L1).unwrap(), 2.0);
        assert_eq!(prototype_distance(&b, &b).unwrap(), 0.0);
        assert!(prototype_distance(&a, &GrayImage::new(2, 2)).is_err());
    }

    #[test]
    fn shade_formula() {
        assert_eq!(frequency_shade(5, 5), 0.0);
        assert!(frequency_shade(1, 1000) > frequency_shade(1000, 1000));
        let expected = 1.0 - 2f64.ln() / 1001f64.ln();
        assert!((frequency_shade(1, 1000) - expected).abs() < 1e-15);
    }

    #[test]
    fn variability_examples() {
        assert_eq!(
            subtype_variability(&[one(0.0), one(1.0)], Aggregate::Sum).unwrap(),
            0.5
        );
        let same = GrayImage::from_fn(3, 3, |x, _| x as f64 / 3.0);
        assert_eq!(
            subtype_variability(&[same.clone(), same.clone(), same], Aggregate::Sum).unwrap(),
            0.0
        );
        assert!(matches!(
            subtype_variability(&[one(0.0)], Aggregate::Sum),
            Err(Error::TooFew { .. })
        ));
        let a = GrayImage::from_fn(2, 1, |x, _| x as f64);
        let b = GrayImage::new(2, 1);
        assert_eq!(subtype_variability(&[a, b], Aggregate::Mean).unwrap(), 0.25);
    }

    fn finetuned_from(reference: &ModelState, tweak: f64) -> ModelState {
        let mut m = reference.clone();
        m.provenance = Provenance::Finetuned(reference.parent_info());
        for p in &mut m.prototypes {
            p.image = p.image.map(|v| (v + tweak).min(1.0));
        }
        m
    }

    #[test]
    fn graphs_follow_the_fleet() {
        let reference = toy_state("ab", 8);
        let ref_a = finetuned_from(&reference, 0.0);
        let ref_b = finetuned_from(&reference, 0.3);
        let doc = finetuned_from(&reference, 0.05);
        let filter = FilterParams::default();
        let options = AnalysisOptions::default();
        let ctx = GraphContext {
            reference: &reference,
            ref_a: &ref_a,
            ref_b: &ref_b,
            filter: &filter,
            options: &options,
        };
        let freq: BTreeMap<char, u64> = [('a', 3)].into_iter().collect();
        let fleet = [FleetMember {
            doc_id: "d1",
            model: &doc,
            subtype: Some(Side::A),
            reference_member: true,
            frequencies: Some(&freq),
        }];
        let g = character_graph(&ctx, 'a', &fleet).unwrap();
        assert_eq!(g.points.len(), 1);
        assert_eq!(g.points[0].marker, Marker::ReferenceDot);
        assert!(g.points[0].d_a <= g.points[0].d_b);
        let g = character_graph(&ctx, 'b', &fleet).unwrap();
        assert!(g.points.is_empty());
        assert_eq!(g.omitted, vec!["d1".to_string()]);
        let g = document_graph(&ctx, &fleet[0], &freq).unwrap();
        assert_eq!(g.points.len(), 1);
        assert_eq!(g.omitted, vec!["b".to_string()]);
        assert_eq!(g.points[0].shade, Some(0.0));
    }

    #[test]
    fn mismatched_geometry_is_rejected() {
        let reference = toy_state("ab", 8);
        let ref_a = finetuned_from(&reference, 0.0);
        let other = finetuned_from(&toy_state("ab", 6), 0.0);
        let filter = FilterParams::default();
        let options = AnalysisOptions::default();
        let ctx = GraphContext {
            reference: &reference,
            ref_a: &ref_a,
            ref_b: &other,
            filter: &filter,
            options: &options,
        };
        assert!(matches!(
            character_graph(&ctx, 'a', &[]),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn foreign_lineage_is_rejected() {
        let reference = toy_state("ab", 8);
        let mut stranger = toy_state("ab", 8);
        stranger.training_seed = 99;
        let foreign = finetuned_from(&stranger, 0.0);
        let ref_a = finetuned_from(&reference, 0.0);
        let filter = FilterParams::default();
        let options = AnalysisOptions::default();
        let ctx = GraphContext {
            reference: &reference,
            ref_a: &ref_a,
            ref_b: &foreign,
            filter: &filter,
            options: &options,
        };
        assert!(matches!(ctx.validate(), Err(Error::Lineage(_))));
    }
}
