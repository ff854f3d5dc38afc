use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{ComparisonGraph, DifferenceMap, GraphKind, Marker, Side};
use crate::error::{Error, Result};
use crate::filter::Flag;
use crate::image::{ColorImage, GrayImage, Rgb};

use super::png::write_png;

const BORDER: usize = 2;
const SHEET_GAP: usize = 1;

pub fn flag_color(flag: Flag) -> Rgb {
    match flag {
        Flag::Ok => [0.8, 0.8, 0.8],
        Flag::Warn => [1.0, 0.55, 0.0],
        Flag::Fail => [0.85, 0.0, 0.0],
    }
}

fn flag_hex(flag: Flag) -> &'static str {
    match flag {
        Flag::Ok => "#333333",
        Flag::Warn => "#ff8c00",
        Flag::Fail => "#d90000",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SheetRow {
    pub label: String,
    pub cells: Vec<(GrayImage, Flag)>,
}

/// One row per model, one column per character. Ink is drawn dark on
/// white; each cell is framed in its flag colour.
pub fn prototype_sheet(rows: &[SheetRow]) -> Result<ColorImage> {
    let side = rows
        .iter()
        .flat_map(|r| &r.cells)
        .map(|(img, _)| img.width())
        .next()
        .ok_or(Error::EmptyImage {
            width: 0,
            height: 0,
        })?;
    let cols = rows.iter().map(|r| r.cells.len()).max().unwrap_or(0);
    let cell = side + 2 * BORDER + SHEET_GAP;
    let mut sheet = ColorImage::filled(
        cols * cell + SHEET_GAP,
        rows.len() * cell + SHEET_GAP,
        [1.0; 3],
    );
    for (ri, row) in rows.iter().enumerate() {
        for (ci, (img, flag)) in row.cells.iter().enumerate() {
            if img.dimensions() != (side, side) {
                return Err(Error::DimensionMismatch {
                    left: (side, side),
                    right: img.dimensions(),
                });
            }
            let (x0, y0) = (SHEET_GAP + ci * cell, SHEET_GAP + ri * cell);
            let frame = flag_color(*flag);
            for y in 0..side + 2 * BORDER {
                for x in 0..side + 2 * BORDER {
                    let inner = (BORDER..BORDER + side).contains(&x)
                        && (BORDER..BORDER + side).contains(&y);
                    let c = if inner {
                        let v = 1.0 - img.get(x - BORDER, y - BORDER);
                        [v, v, v]
                    } else {
                        frame
                    };
                    sheet.set(x0 + x, y0 + y, c);
                }
            }
        }
    }
    Ok(sheet)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn fill_for(graph: &ComparisonGraph, shade: Option<f64>, class: Option<Side>) -> String {
    match graph.kind {
        GraphKind::Document => {
            let level = (0.8 * (1.0 - shade.unwrap_or(0.0)) * 255.0).round() as u8;
            format!("#{level:02x}{level:02x}{level:02x}")
        }
        GraphKind::Character => match class {
            Some(Side::A) => "#1f5fbf".into(),
            Some(Side::B) => "#bf3f1f".into(),
            None => "#666666".into(),
        },
    }
}

/// Scatter plot of `d_a` (horizontal) against `d_b` (vertical), with the
/// diagonal. Points above the diagonal are closer to reference A.
pub fn graph_svg(graph: &ComparisonGraph) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 60.0;
    let span = SIZE - 2.0 * MARGIN;
    let max = graph
        .points
        .iter()
        .flat_map(|p| [p.d_a, p.d_b])
        .fold(0.0f64, f64::max);
    let max = if max > 0.0 { max * 1.05 } else { 1.0 };
    let px = |d: f64| MARGIN + d / max * span;
    let py = |d: f64| SIZE - MARGIN - d / max * span;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let kind = match graph.kind {
        GraphKind::Character => "character",
        GraphKind::Document => "document",
    };
    let _ = writeln!(
        s,
        r#"<title>{kind} graph: {}</title>"#,
        xml_escape(&graph.subject)
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (x0, y0, x1, y1) = (px(0.0), py(0.0), px(max), py(max));
    let _ = writeln!(
        s,
        r##"<path class="axes" d="M{x0:.3} {y1:.3} L{x0:.3} {y0:.3} L{x1:.3} {y0:.3}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line class="diagonal" x1="{x0:.3}" y1="{y0:.3}" x2="{x1:.3}" y2="{y1:.3}" stroke="#999999" stroke-dasharray="4 3"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="12">{}</text>"#,
        MARGIN + span / 2.0,
        SIZE - MARGIN / 3.0,
        xml_escape(&graph.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.3} {:.3})">{}</text>"#,
        MARGIN / 3.0,
        MARGIN + span / 2.0,
        MARGIN / 3.0,
        MARGIN + span / 2.0,
        xml_escape(&graph.y_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.3}" y="{:.3}" font-size="10">{:.3}</text>"#,
        x1 - 20.0,
        y0 + 14.0,
        max
    );
    for p in &graph.points {
        let (cx, cy) = (px(p.d_a), py(p.d_b));
        let fill = fill_for(graph, p.shade, p.class);
        let stroke = flag_hex(p.flag);
        let width = if p.flag == Flag::Ok { 1.0 } else { 2.5 };
        match p.marker {
            Marker::ReferenceDot => {
                let _ = writeln!(
                    s,
                    r#"<circle class="marker dot" cx="{cx:.3}" cy="{cy:.3}" r="5" fill="{fill}" stroke="{stroke}" stroke-width="{width}"/>"#
                );
            }
            Marker::HoldoutCross => {
                let r = 5.0;
                let _ = writeln!(
                    s,
                    r#"<path class="marker cross" d="M{:.3} {:.3} L{:.3} {:.3} M{:.3} {:.3} L{:.3} {:.3}" stroke="{fill}" stroke-width="2.5"/>"#,
                    cx - r,
                    cy - r,
                    cx + r,
                    cy + r,
                    cx - r,
                    cy + r,
                    cx + r,
                    cy - r
                );
                if p.flag != Flag::Ok {
                    let _ = writeln!(
                        s,
                        r#"<circle class="flag" cx="{cx:.3}" cy="{cy:.3}" r="8" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text class="label" x="{:.3}" y="{:.3}" font-size="11">{}</text>"#,
            cx + 7.0,
            cy - 7.0,
            xml_escape(&p.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(text: &str, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON, with a trailing newline.
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(&text, path)
}

/// File-name-safe form of a label: ASCII alphanumerics verbatim, anything
/// else as `u<hex>`.
pub fn file_stem(c: char) -> String {
    if c.is_ascii_alphanumeric() {
        c.to_string()
    } else {
        format!("u{:04x}", c as u32)
    }
}

/// Keep `[A-Za-z0-9._-]`; replace everything else with `_`.
pub fn safe_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn graph_path(dir: &Path, graph: &ComparisonGraph) -> PathBuf {
    match graph.kind {
        GraphKind::Character => {
            let stem = graph.subject.chars().map(file_stem).collect::<String>();
            dir.join(format!("character_{stem}.svg"))
        }
        GraphKind::Document => dir.join(format!("document_{}.svg", safe_name(&graph.subject))),
    }
}

#[derive(Debug)]
pub struct OutputBundle<R: Serialize> {
    pub sheet: Vec<SheetRow>,
    /// `(relative path stem, map)`.
    pub diffs: Vec<(PathBuf, DifferenceMap)>,
    pub graphs: Vec<ComparisonGraph>,
    pub report: Option<R>,
}

impl<R: Serialize> Default for OutputBundle<R> {
    fn default() -> Self {
        Self {
            sheet: Vec::new(),
            diffs: Vec::new(),
            graphs: Vec::new(),
            report: None,
        }
    }
}

/// Write sheets, difference maps, graphs and the report under `dir`;
/// returns the files written, in order.
pub fn emit_outputs<R: Serialize>(bundle: &OutputBundle<R>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if !bundle.sheet.is_empty() {
        let path = dir.join("sheets").join("prototypes.png");
        write_png(&prototype_sheet(&bundle.sheet)?, &path)?;
        written.push(path);
    }
    for (rel, map) in &bundle.diffs {
        let path = dir.join("diffs").join(rel).with_extension("png");
        ensure_parent(&path)?;
        write_png(&map.render, &path)?;
        written.push(path);
    }
    for g in &bundle.graphs {
        let path = graph_path(&dir.join("graphs"), g);
        write_text(&graph_svg(g), &path)?;
        written.push(path);
    }
    if let Some(report) = &bundle.report {
        let path = dir.join("report.json");
        write_json(report, &path)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::GraphPoint;

    fn graph(n: usize) -> ComparisonGraph {
        ComparisonGraph {
            kind: GraphKind::Character,
            subject: "a".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            points: (0..n)
                .map(|i| GraphPoint {
                    label: format!("doc<{i}>"),
                    d_a: i as f64,
                    d_b: (n - i) as f64,
                    marker: if i % 2 == 0 {
                        Marker::ReferenceDot
                    } else {
                        Marker::HoldoutCross
                    },
                    class: Some(Side::A),
                    frequency: None,
                    shade: None,
                    flag: if i == 3 { Flag::Warn } else { Flag::Ok },
                })
                .collect(),
            omitted: vec![],
        }
    }

    #[test]
    fn svg_has_one_marker_per_point() {
        let svg = graph_svg(&graph(14));
        assert_eq!(svg.matches(r#"class="marker"#).count(), 14);
        assert!(svg.contains("doc&lt;3&gt;"));
        assert_eq!(svg, graph_svg(&graph(14)));
    }

    #[test]
    fn sheet_dimensions_and_frames() {
        let img = GrayImage::filled(8, 8, 1.0);
        let rows: Vec<SheetRow> = (0..2)
            .map(|r| SheetRow {
                label: r.to_string(),
                cells: (0..20)
                    .map(|c| (img.clone(), if c == 5 { Flag::Fail } else { Flag::Ok }))
                    .collect(),
            })
            .collect();
        let sheet = prototype_sheet(&rows).unwrap();
        let cell = 8 + 2 * BORDER + SHEET_GAP;
        assert_eq!(sheet.dimensions(), (20 * cell + 1, 2 * cell + 1));
        assert_eq!(sheet.get(1 + 5 * cell, 1), flag_color(Flag::Fail));
        assert_eq!(sheet.get(1 + BORDER, 1 + BORDER), [0.0; 3]);
    }

    #[test]
    fn report_json_keeps_precision() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![0.1 + 0.2, 1.0 / 3.0, 123.456789012345678, 1e-13];
        let path = dir.path().join("r.json");
        write_json(&values, &path).unwrap();
        let back: Vec<f64> =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stems() {
        assert_eq!(file_stem('a'), "a");
        assert_eq!(file_stem('\u{e9}'), "u00e9");
        assert_eq!(safe_name("NT 1/x"), "NT_1_x");
    }
}
