//! Text rendering of metrics: an aligned table and `key=value` lines.

use std::fmt::Write as _;

use mosquitonet_core::metrics::MetricsReport;

use crate::fit::CVReport;

pub const SPECIFICITY_NOTE: &str =
    "note: specificity = tn / (tn + fp), the fraction of uninfected cells classified uninfected";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut s, header);
    for r in rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut s, &cells);
    }
    s
}

/// Aligned single-row table in the usual column order, followed by the
/// specificity note and any undefined metrics.
pub fn metrics_table(m: &MetricsReport) -> String {
    let cols = m.columns();
    let header: Vec<&str> = cols.iter().map(|(n, _)| *n).collect();
    let row = cols.iter().map(|(_, v)| cell(*v)).collect();
    let mut s = table(&header, &[row]);
    s.push_str(SPECIFICITY_NOTE);
    s.push('\n');
    if !m.undefined.is_empty() {
        let _ = writeln!(s, "undefined (reported as 0): {}", m.undefined.join(", "));
    }
    s
}

/// `name=value` per metric; undefined ones read `undefined`.
pub fn metrics_kv(m: &MetricsReport) -> String {
    let mut s = String::new();
    for (name, v) in m.columns() {
        let shown = match v {
            Some(v) if !m.undefined.contains(&name) => v.to_string(),
            _ => "undefined".to_string(),
        };
        let _ = writeln!(s, "{name}={shown}");
    }
    s
}

/// Per-fold rows plus a `mean ± std` row (sample std).
pub fn cv_table(r: &CVReport) -> String {
    let mut header = vec!["fold"];
    header.extend(r.summary.iter().map(|m| m.name));
    let mut rows: Vec<Vec<String>> = r
        .folds
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(f.columns().iter().map(|(_, v)| cell(*v)));
            row
        })
        .collect();
    let mut total = vec!["mean±std".to_string()];
    total.extend(r.summary.iter().map(|m| match (m.mean, m.std) {
        (Some(mean), Some(std)) => format!("{mean:.4}±{std:.4}"),
        _ => "n/a".to_string(),
    }));
    rows.push(total);
    let mut s = table(&header, &rows);
    s.push_str("std is the sample standard deviation across folds\n");
    s.push_str(SPECIFICITY_NOTE);
    s.push('\n');
    s
}
