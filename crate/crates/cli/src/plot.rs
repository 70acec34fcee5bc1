//! Static SVG figures: time and frequency panels per record.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use sigdistill_core::{to_frequency, LabeledSignalSet, SignalRecord};

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 110.0;
const GAP: f64 = 16.0;
const TITLE_H: f64 = 28.0;
const LABEL_W: f64 = 90.0;

/// One row group of the figure: a labeled list of records.
pub struct Group<'a> {
    pub label: &'a str,
    pub records: Vec<&'a SignalRecord>,
}

/// Records of `class` from `set`, at most `limit`.
pub fn select<'a>(set: &'a LabeledSignalSet, class: &str, limit: usize) -> Result<Vec<&'a SignalRecord>> {
    let Some(idx) = set.class_index(class) else {
        bail!(
            "unknown class {class:?}; available classes: {}",
            set.class_names().join(", ")
        );
    };
    Ok(set.records().iter().filter(|r| r.label == idx).take(limit).collect())
}

fn polyline(out: &mut String, values: &[f32], x0: f64, y0: f64, color: &str) {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };
    let mid = if hi > lo { None } else { Some(PANEL_H / 2.0) };
    let step = if values.len() > 1 { PANEL_W / (values.len() - 1) as f64 } else { 0.0 };
    let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1" points=""#);
    for (n, &v) in values.iter().enumerate() {
        let y = mid.unwrap_or_else(|| PANEL_H - 4.0 - (v - lo) as f64 / span * (PANEL_H - 8.0));
        let _ = write!(out, "{:.2},{:.2} ", x0 + n as f64 * step, y0 + y);
    }
    out.push_str("\"/>\n");
}

/// Four panels per record (I(n), Q(n), |I(k)|, |Q(k)|), one row per record,
/// groups stacked top to bottom.
pub fn render(title: &str, groups: &[Group<'_>]) -> Result<String> {
    let rows: usize = groups.iter().map(|g| g.records.len()).sum();
    if rows == 0 {
        bail!("nothing to plot: no records selected");
    }
    let width = LABEL_W + 4.0 * (PANEL_W + GAP) + GAP;
    let height = TITLE_H + 20.0 + rows as f64 * (PANEL_H + GAP) + GAP;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{GAP}" y="20" font-size="14">{}</text>"#, escape(title));
    for (col, name) in ["I(n)", "Q(n)", "|I(k)|", "|Q(k)|"].iter().enumerate() {
        let x = LABEL_W + GAP + col as f64 * (PANEL_W + GAP);
        let _ = writeln!(out, r#"<text x="{x}" y="{}">{name}</text>"#, TITLE_H + 12.0);
    }
    let mut row = 0;
    for group in groups {
        for (k, rec) in group.records.iter().enumerate() {
            let freq = to_frequency(rec)?;
            let y0 = TITLE_H + 20.0 + row as f64 * (PANEL_H + GAP);
            let _ = writeln!(
                out,
                r#"<text x="{GAP}" y="{}">{} #{k}</text>"#,
                y0 + PANEL_H / 2.0,
                escape(group.label)
            );
            let panels: [(&[f32], &str); 4] = [
                (&rec.i, "#1f77b4"),
                (&rec.q, "#d62728"),
                (&freq.i_mag, "#1f77b4"),
                (&freq.q_mag, "#d62728"),
            ];
            for (col, (values, color)) in panels.iter().enumerate() {
                let x0 = LABEL_W + GAP + col as f64 * (PANEL_W + GAP);
                let _ = writeln!(
                    out,
                    r##"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#999"/>"##
                );
                polyline(&mut out, values, x0, y0, color);
            }
            row += 1;
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
