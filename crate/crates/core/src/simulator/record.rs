//! Run records, their on-disk layout, and cross-run comparison tables.
//!
//! A run directory holds:
//!
//! * `config.json`: the [`SimConfig`];
//! * `metrics.csv`: `repeat,step,metric,value`, one row per step, metric and repeat;
//! * `selection.csv`: `repeat,step,source_label,origin,count`;
//! * `record.json`: the full record including per-item values and deviations;
//! * `timing.csv`: wall-clock per step (the only file that varies between reruns);
//! * `FAILED`: present when the run aborted, holding the reason;
//! * `snapshots/step_<j>/repeat_<r>.json`: optional model snapshots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::metrics::{mean_stderr, MetricSample};
use crate::selection::SelectionReport;

pub const ENTROPY: &str = "entropy";
pub const CI_ACCURACY: &str = "ci_accuracy";
pub const GINI: &str = "gini";
pub const COLLAPSED: &str = "collapsed_pct";
pub const SURPLEXITY: &str = "surplexity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub metrics: BTreeMap<String, MetricSample>,
    /// `metric_j - metric_0` for every metric.
    pub deviations: BTreeMap<String, f64>,
    /// Absent at step 0.
    pub selection: Option<SelectionReport>,
    pub pool_size: usize,
    #[serde(skip)]
    pub wall_clock_ms: u128,
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: SimConfig,
    pub repeats: Vec<RepeatRecord>,
    pub failure: Option<String>,
}

/// One `metrics.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub repeat: usize,
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

/// One `selection.csv` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub repeat: usize,
    pub step: usize,
    pub source_label: String,
    pub origin: String,
    pub count: usize,
}

impl RunRecord {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::new();
        for r in &self.repeats {
            for s in &r.steps {
                for (name, sample) in &s.metrics {
                    rows.push(MetricRow {
                        repeat: r.repeat,
                        step: s.step,
                        metric: name.clone(),
                        value: sample.mean,
                    });
                }
            }
        }
        rows
    }

    pub fn selection_rows(&self) -> Vec<SelectionRow> {
        let mut rows = Vec::new();
        for r in &self.repeats {
            for s in &r.steps {
                for c in s.selection.iter().flat_map(|sel| &sel.composition) {
                    rows.push(SelectionRow {
                        repeat: r.repeat,
                        step: s.step,
                        source_label: c.source_label.clone(),
                        origin: c.origin.clone(),
                        count: c.count,
                    });
                }
            }
        }
        rows
    }

    /// Mean of a metric at a step, averaged over repeats.
    pub fn mean_at(&self, metric: &str, step: usize) -> Option<f64> {
        let vals: Vec<f64> = self
            .repeats
            .iter()
            .filter_map(|r| r.steps.get(step))
            .filter_map(|s| s.metrics.get(metric))
            .map(|m| m.mean)
            .collect();
        (!vals.is_empty()).then(|| mean_stderr(&vals).0)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e))?;
    w.write_record(header).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::format(path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistedPaths {
    pub config: PathBuf,
    pub metrics: PathBuf,
    pub selection: PathBuf,
    pub record: PathBuf,
    pub timing: PathBuf,
}

/// Writes a run into `dir`, creating it if needed. Apart from `timing.csv`
/// every file is byte-identical across reruns with the same seed.
pub fn persist_run(record: &RunRecord, dir: &Path) -> Result<PersistedPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = PersistedPaths {
        config: dir.join("config.json"),
        metrics: dir.join("metrics.csv"),
        selection: dir.join("selection.csv"),
        record: dir.join("record.json"),
        timing: dir.join("timing.csv"),
    };
    let json = |v: &dyn erased::Json, p: &Path| -> Result<()> {
        let text = v.to_pretty().map_err(|e| Error::format(p, e))?;
        fs::write(p, text + "\n").map_err(|e| Error::io(p, e))
    };
    json(&record.config, &paths.config)?;
    json(record, &paths.record)?;
    write_csv(&paths.metrics, &record.metric_rows(), &["repeat", "step", "metric", "value"])?;
    write_csv(
        &paths.selection,
        &record.selection_rows(),
        &["repeat", "step", "source_label", "origin", "count"],
    )?;
    let timing: Vec<(usize, usize, u128)> = record
        .repeats
        .iter()
        .flat_map(|r| r.steps.iter().map(move |s| (r.repeat, s.step, s.wall_clock_ms)))
        .collect();
    write_csv(&paths.timing, &timing, &["repeat", "step", "wall_clock_ms"])?;
    let failed = dir.join("FAILED");
    match &record.failure {
        Some(reason) => fs::write(&failed, format!("{reason}\n")).map_err(|e| Error::io(&failed, e))?,
        None if failed.exists() => fs::remove_file(&failed).map_err(|e| Error::io(&failed, e))?,
        None => {}
    }
    Ok(paths)
}

mod erased {
    pub trait Json {
        fn to_pretty(&self) -> serde_json::Result<String>;
    }

    impl<T: serde::Serialize> Json for T {
        fn to_pretty(&self) -> serde_json::Result<String> {
            serde_json::to_string_pretty(self)
        }
    }
}

/// The tabular view of a persisted run, as read back by the report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTable {
    pub label: String,
    pub config: SimConfig,
    pub metrics: Vec<MetricRow>,
    pub selection: Vec<SelectionRow>,
}

impl RunTable {
    pub fn from_record(label: impl Into<String>, record: &RunRecord) -> Self {
        RunTable {
            label: label.into(),
            config: record.config.clone(),
            metrics: record.metric_rows(),
            selection: record.selection_rows(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let config_path = dir.join("config.json");
        let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let config: SimConfig = serde_json::from_str(&text).map_err(|e| Error::format(&config_path, e))?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| config.strategy.to_string());
        Ok(RunTable {
            label,
            metrics: read_csv(&dir.join("metrics.csv"))?,
            selection: read_csv(&dir.join("selection.csv"))?,
            config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub step: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

/// Per-metric series across runs, mean and standard error over repeats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub metrics: BTreeMap<String, Vec<Series>>,
}

impl Comparison {
    pub fn series(&self, metric: &str, label: &str) -> Option<&Series> {
        self.metrics.get(metric)?.iter().find(|s| s.label == label)
    }
}

/// Aligns runs that share prompt length, document length and step count.
pub fn compare_tables(tables: &[RunTable]) -> Result<Comparison> {
    let Some(first) = tables.first() else {
        return Ok(Comparison::default());
    };
    for t in &tables[1..] {
        let checks: [(&'static str, usize, usize); 3] = [
            ("k", first.config.prompt_len, t.config.prompt_len),
            ("L", first.config.max_doc_len, t.config.max_doc_len),
            ("T", first.config.steps, t.config.steps),
        ];
        for (field, a, b) in checks {
            if a != b {
                return Err(Error::MismatchedRuns {
                    field,
                    left: a.to_string(),
                    right: b.to_string(),
                });
            }
        }
    }
    let mut out = Comparison::default();
    for t in tables {
        let mut grouped: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
        for row in &t.metrics {
            grouped
                .entry(row.metric.as_str())
                .or_default()
                .entry(row.step)
                .or_default()
                .push(row.value);
        }
        for (metric, steps) in grouped {
            let points = steps
                .into_iter()
                .map(|(step, vals)| {
                    let (mean, stderr) = mean_stderr(&vals);
                    SeriesPoint {
                        step,
                        mean,
                        stderr,
                        n: vals.len(),
                    }
                })
                .collect();
            out.metrics.entry(metric.to_string()).or_default().push(Series {
                label: t.label.clone(),
                points,
            });
        }
    }
    Ok(out)
}

pub fn compare_runs(records: &[RunRecord]) -> Result<Comparison> {
    let tables: Vec<RunTable> = records
        .iter()
        .map(|r| RunTable::from_record(r.config.strategy.to_string(), r))
        .collect();
    compare_tables(&tables)
}
