//! Training-set selection strategies and the provenance report they emit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::LanguageModel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Strategy {
    /// Every document of the latest generation.
    AiOnly,
    HumanOnly,
    Mixed { human_fraction: f64 },
    RandomHuman,
    RandomAi,
    TopEntropy,
    TopSurplexity,
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            Strategy::Mixed { human_fraction } if !(0.0..=1.0).contains(human_fraction) => Err(
                Error::Config(format!("mixed human fraction {human_fraction} not in [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Strategy::TopSurplexity)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::AiOnly => f.write_str("ai-only"),
            Strategy::HumanOnly => f.write_str("human-only"),
            Strategy::Mixed { human_fraction } => write!(f, "mixed:{human_fraction}"),
            Strategy::RandomHuman => f.write_str("random-human"),
            Strategy::RandomAi => f.write_str("random-ai"),
            Strategy::TopEntropy => f.write_str("top-entropy"),
            Strategy::TopSurplexity => f.write_str("top-surplexity"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let strategy = match s.as_str() {
            "ai-only" | "ai" => Strategy::AiOnly,
            "human-only" | "human" => Strategy::HumanOnly,
            "mixed" => Strategy::Mixed { human_fraction: 0.5 },
            "random-human" => Strategy::RandomHuman,
            "random-ai" => Strategy::RandomAi,
            "top-entropy" | "entropy" => Strategy::TopEntropy,
            "top-surplexity" | "surplexity" => Strategy::TopSurplexity,
            other => match other.strip_prefix("mixed:") {
                Some(f) => Strategy::Mixed {
                    human_fraction: f
                        .parse()
                        .map_err(|_| Error::Config(format!("bad mixed fraction {f:?}")))?,
                },
                None => return Err(Error::Config(format!("unknown strategy {s:?}"))),
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CompositionRow {
    pub source_label: String,
    pub origin: String,
    pub count: usize,
}

/// Score window around the selection cut for ranked strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub lowest_selected: f64,
    pub highest_rejected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub strategy: Strategy,
    pub requested: usize,
    pub selected: usize,
    pub composition: Vec<CompositionRow>,
    pub boundary: Option<Boundary>,
}

impl SelectionReport {
    fn new(strategy: Strategy, requested: usize, docs: &[Document], boundary: Option<Boundary>) -> Self {
        let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
        for d in docs {
            *counts
                .entry((d.source_label.clone(), d.origin.to_string()))
                .or_default() += 1;
        }
        SelectionReport {
            strategy,
            requested,
            selected: docs.len(),
            composition: counts
                .into_iter()
                .map(|((source_label, origin), count)| CompositionRow {
                    source_label,
                    origin,
                    count,
                })
                .collect(),
            boundary,
        }
    }

    pub fn by_source(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for r in &self.composition {
            *out.entry(r.source_label.as_str()).or_default() += r.count;
        }
        out
    }

    pub fn by_origin(&self) -> BTreeMap<&str, usize> {
        let mut out = BTreeMap::new();
        for r in &self.composition {
            *out.entry(r.origin.as_str()).or_default() += r.count;
        }
        out
    }

    pub fn human_share(&self) -> f64 {
        let human = self.by_origin().get("human").copied().unwrap_or(0);
        human as f64 / self.selected.max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub documents: Vec<Document>,
    /// Ranking scores aligned with `documents`, for ranked strategies.
    pub scores: Option<Vec<f64>>,
    pub report: SelectionReport,
}

/// Indices of `scores` in rank order: score descending, then id ascending.
pub fn rank(docs: &[Document], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| docs[a].id.cmp(&docs[b].id))
    });
    order
}

fn sample<'a>(docs: &[&'a Document], n: usize, seed: u64, what: &str) -> Vec<&'a Document> {
    if n >= docs.len() {
        if n > docs.len() {
            warn!("only {} {what} documents available, {n} requested", docs.len());
        }
        return docs.to_vec();
    }
    let mut rng = seed::rng(seed, &[]);
    let mut picked = index::sample(&mut rng, docs.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| docs[i]).collect()
}

/// Composes a training set from `pool`.
///
/// Random strategies draw without replacement from `seed` and keep pool
/// order; ranked strategies return documents best first. `model` is the
/// model about to be fine-tuned and is only consulted by `TopSurplexity`.
pub fn select_training_set(
    pool: &[Document],
    strategy: Strategy,
    model: Option<&dyn LanguageModel>,
    z: usize,
    seed: u64,
) -> Result<Selection> {
    strategy.validate()?;
    if pool.is_empty() {
        return Err(Error::Selection("empty document pool".into()));
    }
    if z == 0 {
        return Err(Error::Selection("selection size z must be at least 1".into()));
    }
    let human: Vec<&Document> = pool.iter().filter(|d| d.origin.is_human()).collect();
    let ai: Vec<&Document> = pool.iter().filter(|d| !d.origin.is_human()).collect();

    let (chosen, scores, boundary): (Vec<&Document>, Option<Vec<f64>>, Option<Boundary>) = match strategy {
        Strategy::AiOnly => {
            let latest = ai.iter().map(|d| d.origin).max();
            (ai.iter().copied().filter(|d| Some(d.origin) == latest).collect(), None, None)
        }
        Strategy::HumanOnly | Strategy::RandomHuman => (sample(&human, z, seed, "human"), None, None),
        Strategy::RandomAi => (sample(&ai, z, seed, "generated"), None, None),
        Strategy::Mixed { human_fraction } => {
            let n_human = (human_fraction * z as f64 + 0.5).floor() as usize;
            let mut out = sample(&human, n_human, seed::derive(seed, &[0]), "human");
            out.extend(sample(&ai, z - n_human.min(z), seed::derive(seed, &[1]), "generated"));
            (out, None, None)
        }
        Strategy::TopEntropy | Strategy::TopSurplexity => {
            let scores: Vec<f64> = match strategy {
                Strategy::TopEntropy => pool
                    .par_iter()
                    .map(metrics::document_entropy)
                    .collect::<Result<_>>()?,
                _ => {
                    let model = model.ok_or_else(|| {
                        Error::Selection("surplexity ranking needs a model".into())
                    })?;
                    metrics::surplexity_scores(model, pool)?
                }
            };
            let order = rank(pool, &scores);
            if z > pool.len() {
                warn!("only {} documents available, {z} requested", pool.len());
            }
            let take = z.min(pool.len());
            let boundary = Boundary {
                lowest_selected: scores[order[take - 1]],
                highest_rejected: order.get(take).map(|&i| scores[i]),
            };
            let picked = &order[..take];
            (
                picked.iter().map(|&i| &pool[i]).collect(),
                Some(picked.iter().map(|&i| scores[i]).collect()),
                Some(boundary),
            )
        }
    };
    if chosen.is_empty() {
        return Err(Error::Selection(format!("no eligible documents for {strategy}")));
    }
    let documents: Vec<Document> = chosen.into_iter().cloned().collect();
    let report = SelectionReport::new(strategy, z, &documents, boundary);
    Ok(Selection {
        documents,
        scores,
        report,
    })
}
