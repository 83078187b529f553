//! Prediction dumps (JSON Lines) and the CSV exports.
//!
//! A dump holds one record per line:
//!
//! ```text
//! {"id":"a","y":[0.4],"samples":[{"mean":[0.41],"log_var":-4.2},{"mean":[0.39],"log_var":-4.1}]}
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::analysis::{OodComparison, RejectionCurve};
use crate::error::DumpIssue;
use crate::intervals::CoverageTable;
use crate::metrics::DiagramPoint;
use crate::types::{validate, McPredictionSet, McRecord, McSample};
use crate::{Error, Result};

#[derive(Deserialize)]
struct RawSample {
    mean: Option<Vec<f64>>,
    log_var: Option<f64>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    y: Option<Vec<f64>>,
    samples: Option<Vec<RawSample>>,
}

fn convert(raw: RawRecord) -> std::result::Result<McRecord, String> {
    let id = raw.id.ok_or("missing field id")?;
    let y = raw.y.ok_or("missing field y")?;
    let samples = raw
        .samples
        .ok_or("missing field samples")?
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            Ok(McSample {
                mean: s.mean.ok_or(format!("missing field samples[{k}].mean"))?,
                log_var: s.log_var.ok_or(format!("missing field samples[{k}].log_var"))?,
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    Ok(McRecord { id, y, samples })
}

/// Parses and validates a dump. All problems are collected, each tied to its
/// line number.
pub fn parse_dump(text: &str) -> Result<McPredictionSet> {
    let mut issues = Vec::new();
    let mut records = Vec::new();
    let mut lines_of = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(line) {
            Ok(raw) => match convert(raw) {
                Ok(rec) => {
                    records.push(rec);
                    lines_of.push(line_no);
                }
                Err(message) => issues.push(DumpIssue { line: line_no, message }),
            },
            Err(e) => issues.push(DumpIssue {
                line: line_no,
                message: format!("parse error: {e}"),
            }),
        }
    }
    if records.is_empty() && issues.is_empty() {
        return Err(Error::EmptyInput("dump contains no records"));
    }
    if !issues.is_empty() {
        return Err(Error::Dump(issues));
    }

    let set = McPredictionSet {
        d: records[0].y.len(),
        records,
    };
    let mut line_by_id = HashMap::new();
    for (rec, &line) in set.records.iter().zip(&lines_of) {
        line_by_id.entry(rec.id.as_str()).or_insert(line);
    }
    let violations = validate(&set);
    if !violations.is_empty() {
        return Err(Error::Dump(
            violations
                .into_iter()
                .map(|v| DumpIssue {
                    line: line_by_id.get(v.id.as_str()).copied().unwrap_or(0),
                    message: format!("{}: {}", v.field, v.message),
                })
                .collect(),
        ));
    }
    Ok(set)
}

pub fn load_dump(path: &Path) -> Result<McPredictionSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dump(&text)
}

/// Serializes a set, one compact JSON object per line, keys in the order
/// `id`, `y`, `samples` (`mean`, `log_var`).
pub fn dump_to_string(set: &McPredictionSet) -> Result<String> {
    let mut out = String::new();
    for rec in &set.records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dump(set: &McPredictionSet, path: &Path) -> Result<()> {
    write_file(path, &dump_to_string(set)?)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn diagram_csv(points: &[DiagramPoint]) -> String {
    let mut out = String::from("bin_lower,bin_upper,count,uncert_mean,var_obs\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.bin_lower, p.bin_upper, p.count, p.uncert_mean, p.var_obs
        );
    }
    out
}

pub fn coverage_csv(table: &CoverageTable) -> String {
    let mut out = String::from("level,z,observed\n");
    for ((l, z), o) in table.levels.iter().zip(&table.z_values).zip(&table.observed) {
        let _ = writeln!(out, "{l},{z},{o}");
    }
    out
}

/// Undefined `mse_kept` entries are written as empty fields.
pub fn rejection_csv(curve: &RejectionCurve) -> String {
    let mut out = String::from("threshold,frac_rejected,mse_kept\n");
    for p in &curve.points {
        let mse = p.mse_kept.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.threshold, p.frac_rejected, mse);
    }
    out
}

pub fn ood_csv(cmp: &OodComparison) -> String {
    let mut out = String::from("bin_lower,bin_upper,count_in,count_shifted\n");
    let edges = &cmp.in_dist.edges;
    for (i, (a, b)) in cmp.in_dist.counts.iter().zip(&cmp.shifted.counts).enumerate() {
        let _ = writeln!(out, "{},{},{},{}", edges[i], edges[i + 1], a, b);
    }
    out
}

/// Minimal SVG calibration diagram: per-bin points and the diagonal.
pub fn diagram_svg(points: &[DiagramPoint]) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let max = points
        .iter()
        .flat_map(|p| [p.uncert_mean, p.var_obs])
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let px = |v: f64| PAD + v / max * (SIZE - 2.0 * PAD);
    let py = |v: f64| SIZE - PAD - v / max * (SIZE - 2.0 * PAD);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(max),
        py(max)
    );
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="black" points="{}"/>"#,
        points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.uncert_mean), py(p.var_obs)))
            .collect::<Vec<_>>()
            .join(" ")
    );
    for p in points {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            px(p.uncert_mean),
            py(p.var_obs)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">expected uncertainty</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">observed uncertainty</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    out.push_str("</svg>\n");
    out
}
