//! Static SVG charts and a summary table for persisted runs.
//!
//! Every plotted element carries `data-*` attributes holding the exact
//! numbers it was drawn from, so charts can be checked by parsing them back.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::simulator::{compare_tables, RunTable, SelectionRow};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        MARGIN + (v - self.x0) / span * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        HEIGHT - MARGIN - (v - self.y0) / span * (HEIGHT - 2.0 * MARGIN)
    }
}

fn axes(svg: &mut String, title: &str, scale: &Scale, x_label: &str) {
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        esc(title)
    );
    let (left, bottom) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{left} {MARGIN} V{bottom} H{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for i in 0..=4 {
        let v = scale.y0 + (scale.y1 - scale.y0) * i as f64 / 4.0;
        let y = scale.y(v);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end" font-size="11">{:.4}</text>"#,
            left - 6.0,
            y + 4.0,
            v
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        esc(x_label)
    );
}

/// Line chart of one metric: mean per step with a ±stderr band, one
/// series per run. Points carry `data-series`, `data-step`, `data-value`
/// (the mean), `data-stderr` and `data-repeats` (the per-repeat values).
pub fn metric_chart(metric: &str, tables: &[RunTable]) -> Result<String> {
    let comparison = compare_tables(tables)?;
    let series = comparison.metrics.get(metric).cloned().unwrap_or_default();
    let raw: BTreeMap<(&str, usize), Vec<f64>> = tables.iter().fold(BTreeMap::new(), |mut acc, t| {
        for row in t.metrics.iter().filter(|r| r.metric == metric) {
            acc.entry((t.label.as_str(), row.step)).or_insert_with(Vec::new).push(row.value);
        }
        acc
    });

    let points = series.iter().flat_map(|s| &s.points);
    let steps: Vec<f64> = points.clone().map(|p| p.step as f64).collect();
    let lows: Vec<f64> = points.clone().map(|p| p.mean - p.stderr).filter(|v| v.is_finite()).collect();
    let highs: Vec<f64> = points.map(|p| p.mean + p.stderr).filter(|v| v.is_finite()).collect();
    let (mut y0, mut y1) = (
        lows.iter().copied().fold(f64::INFINITY, f64::min),
        highs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    if !y0.is_finite() || !y1.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    let pad = ((y1 - y0) * 0.05).max(1e-6);
    let scale = Scale {
        x0: steps.iter().copied().fold(f64::INFINITY, f64::min).min(0.0),
        x1: steps.iter().copied().fold(0.0, f64::max).max(1.0),
        y0: y0 - pad,
        y1: y1 + pad,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" data-metric="{}">"#,
        esc(metric)
    );
    axes(&mut svg, metric, &scale, "simulation step");
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let label = esc(&s.label);
        let _ = writeln!(svg, r#"<g class="series" data-series="{label}">"#);
        let upper: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", scale.x(p.step as f64), scale.y(p.mean + p.stderr)))
            .collect();
        let lower: Vec<String> = s
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", scale.x(p.step as f64), scale.y(p.mean - p.stderr)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", scale.x(p.step as f64), scale.y(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for p in &s.points {
            let repeats = raw
                .get(&(s.label.as_str(), p.step))
                .map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-series="{label}" data-step="{}" data-value="{}" data-stderr="{}" data-repeats="{repeats}"/>"#,
                scale.x(p.step as f64),
                scale.y(p.mean),
                p.step,
                p.mean,
                p.stderr
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{label}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 16.0 * i as f64
        );
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn category(row: &SelectionRow) -> String {
    format!("{}|{}", row.source_label, row.origin)
}

/// Stacked bars of selection provenance, one bar per (repeat, step). Each
/// segment carries `data-repeat`, `data-step`, `data-category`
/// (`source|origin`) and `data-count`.
pub fn selection_chart(table: &RunTable) -> String {
    let mut bars: BTreeMap<(usize, usize), Vec<&SelectionRow>> = BTreeMap::new();
    for row in &table.selection {
        bars.entry((row.repeat, row.step)).or_default().push(row);
    }
    let max_total = bars
        .values()
        .map(|rows| rows.iter().map(|r| r.count).sum::<usize>())
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let mut groups: BTreeMap<String, usize> = BTreeMap::new();
    for row in &table.selection {
        let kind = if row.origin == "human" { "human" } else { "ai" };
        let n = groups.len();
        groups.entry(format!("{}|{kind}", row.source_label)).or_insert(n);
    }

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" data-run="{}">"#,
        esc(&table.label)
    );
    let scale = Scale {
        x0: 0.0,
        x1: bars.len().max(1) as f64,
        y0: 0.0,
        y1: max_total,
    };
    axes(
        &mut svg,
        &format!("selection provenance: {}", table.label),
        &scale,
        "repeat / step",
    );
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (i, ((repeat, step), rows)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.1;
        let mut acc = 0usize;
        let _ = writeln!(svg, r#"<g class="bar" data-repeat="{repeat}" data-step="{step}">"#);
        for row in rows {
            let kind = if row.origin == "human" { "human" } else { "ai" };
            let color = PALETTE[groups[&format!("{}|{kind}", row.source_label)] % PALETTE.len()];
            let top = scale.y((acc + row.count) as f64);
            let bottom = scale.y(acc as f64);
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" data-repeat="{repeat}" data-step="{step}" data-category="{}" data-count="{}"/>"#,
                slot * 0.8,
                bottom - top,
                esc(&category(row)),
                row.count
            );
            acc += row.count;
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{repeat}/{step}</text>"#,
            x + slot * 0.4,
            HEIGHT - MARGIN + 14.0
        );
        svg.push_str("</g>\n");
    }
    for (name, idx) in &groups {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * *idx as f64,
            PALETTE[idx % PALETTE.len()],
            esc(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// `series,metric,step,mean,stderr,n` for every run, metric and step.
pub fn summary_csv(tables: &[RunTable]) -> Result<String> {
    let comparison = compare_tables(tables)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Metric(format!("summary table: {e}"));
    w.write_record(["series", "metric", "step", "mean", "stderr", "n"]).map_err(fail)?;
    for (metric, series) in &comparison.metrics {
        for s in series {
            for p in &s.points {
                w.write_record([
                    s.label.clone(),
                    metric.clone(),
                    p.step.to_string(),
                    p.mean.to_string(),
                    p.stderr.to_string(),
                    p.n.to_string(),
                ])
                .map_err(fail)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Metric(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Metric(e.to_string()))
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `<metric>.svg` per metric, `selection_<run>.svg` per run with
/// selection data, and `summary.csv` into `out`.
pub fn write_report(tables: &[RunTable], out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    let comparison = compare_tables(tables)?;
    for metric in comparison.metrics.keys() {
        put(format!("{}.svg", file_stem(metric)), metric_chart(metric, tables)?)?;
    }
    for t in tables.iter().filter(|t| !t.selection.is_empty()) {
        put(format!("selection_{}.svg", file_stem(&t.label)), selection_chart(t))?;
    }
    put("summary.csv".into(), summary_csv(tables)?)?;
    Ok(written)
}
