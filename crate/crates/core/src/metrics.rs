//! Collapse measures: document entropy, inequality and saturation of
//! next-token distributions, surplexity, and four-choice inference accuracy.
//!
//! Everything here is a pure function of its inputs and an immutable model.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::model::{LanguageModel, ProbVector};
use crate::tokenizer::{TokenId, Vocabulary};

pub const DEFAULT_TAU: f64 = 0.99;
pub const DEFAULT_TOP_N: usize = 100;
pub const DEFAULT_PROMPT_TOKENS: usize = 32;

/// Per-item values of one metric with their mean and standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub name: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

impl MetricSample {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let (mean, stderr) = mean_stderr(&values);
        MetricSample {
            name: name.into(),
            values,
            mean,
            stderr,
        }
    }
}

/// Mean and `sample_sd / sqrt(n)`; the error is 0 for fewer than two values
/// and both are NaN for none.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Shannon entropy of the token frequencies in `tokens`, divided by the log
/// of the number of distinct tokens. A single distinct token scores 0.
pub fn linguistic_entropy(tokens: &[TokenId]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Metric("entropy of an empty document".into()));
    }
    let mut freq: FxHashMap<TokenId, usize> = FxHashMap::default();
    for &t in tokens {
        *freq.entry(t).or_default() += 1;
    }
    if freq.len() <= 1 {
        return Ok(0.0);
    }
    let mut counts: Vec<usize> = freq.into_values().collect();
    counts.sort_unstable();
    let total = tokens.len() as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let q = c as f64 / total;
            -q * q.ln()
        })
        .sum();
    Ok(h / (counts.len() as f64).ln())
}

pub fn document_entropy(doc: &Document) -> Result<f64> {
    linguistic_entropy(&doc.tokens)
}

/// Gini coefficient of the entries as given (no renormalization).
///
/// Uses the sorted gap form `sum_ij |q_i - q_j| = 2 sum_k (k + 1)(n - k - 1)
/// (q_(k+1) - q_(k))`, which is exactly zero on equal entries.
pub fn gini(q: &[f64]) -> Result<f64> {
    if q.is_empty() {
        return Err(Error::Metric("Gini coefficient of an empty vector".into()));
    }
    if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Metric("Gini coefficient needs finite non-negative entries".into()));
    }
    let total: f64 = q.iter().sum();
    if total <= 0.0 {
        return Err(Error::Metric("Gini coefficient of an all-zero vector".into()));
    }
    let mut sorted = q.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let spread: f64 = sorted
        .windows(2)
        .enumerate()
        .map(|(k, w)| ((k + 1) * (n - k - 1)) as f64 * (w[1] - w[0]))
        .sum();
    Ok(spread / (n as f64 * total))
}

pub fn gini_of(q: &ProbVector) -> Result<f64> {
    gini(&q.probabilities())
}

/// True iff some entry strictly exceeds `tau`.
pub fn collapsed(q: &[f64], tau: f64) -> bool {
    q.iter().any(|&p| p > tau)
}

/// `exp` of the mean negative log-likelihood of the document, each token
/// conditioned on everything before it and the first on the empty context.
pub fn surplexity<M: LanguageModel + ?Sized>(model: &M, tokens: &[TokenId]) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::Metric("surplexity of an empty document".into()));
    }
    let probs = model.token_probabilities(tokens, &[])?;
    if let Some(i) = probs.iter().position(|&p| p <= 0.0) {
        return Err(Error::Metric(format!("token {i} has zero probability")));
    }
    let nll = -probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    Ok(nll.exp())
}

pub fn surplexity_scores<M: LanguageModel + ?Sized>(model: &M, docs: &[Document]) -> Result<Vec<f64>> {
    docs.par_iter().map(|d| surplexity(model, &d.tokens)).collect()
}

/// A four-way continuation choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiItem {
    pub prompt: Vec<TokenId>,
    pub candidates: [Vec<TokenId>; 4],
    pub correct_index: usize,
}

impl CiItem {
    pub fn new(prompt: Vec<TokenId>, candidates: [Vec<TokenId>; 4], correct_index: usize) -> Result<Self> {
        if correct_index > 3 {
            return Err(Error::InvalidArgument(format!(
                "correct index {correct_index} out of range"
            )));
        }
        if candidates.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("empty candidate continuation".into()));
        }
        Ok(CiItem {
            prompt,
            candidates,
            correct_index,
        })
    }
}

#[derive(Deserialize)]
struct CiLine {
    prompt: String,
    candidates: Vec<String>,
    correct: usize,
}

/// Reads `{"prompt", "candidates": [4 strings], "correct"}` lines.
pub fn load_ci_items(path: &Path, vocab: &Vocabulary) -> Result<Vec<CiItem>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::format(path, format!("line {}: {m}", n + 1));
        let parsed: CiLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let cands: Vec<Vec<TokenId>> = parsed.candidates.iter().map(|c| vocab.tokenize(c)).collect();
        let cands: [Vec<TokenId>; 4] = cands
            .try_into()
            .map_err(|v: Vec<_>| bad(format!("expected 4 candidates, found {}", v.len())))?;
        let item = CiItem::new(vocab.tokenize(&parsed.prompt), cands, parsed.correct)
            .map_err(|e| bad(e.to_string()))?;
        items.push(item);
    }
    if items.is_empty() {
        return Err(Error::format(path, "no inference items"));
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateScoring {
    /// Mean per-token log-probability.
    #[default]
    LengthNormalized,
    /// Total log-probability.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiOutcome {
    pub accuracy: f64,
    /// 1.0 where the selected candidate was the correct one.
    pub hits: Vec<f64>,
    /// Items whose best score was shared by more than one candidate.
    pub ties: usize,
}

pub fn ci_accuracy<M: LanguageModel + ?Sized>(
    model: &M,
    items: &[CiItem],
    scoring: CandidateScoring,
) -> Result<CiOutcome> {
    if items.is_empty() {
        return Err(Error::Metric("no inference items".into()));
    }
    let picks: Vec<(usize, bool)> = items
        .par_iter()
        .map(|item| {
            let mut scores = [0.0; 4];
            for (s, cand) in scores.iter_mut().zip(&item.candidates) {
                let lp = model.sequence_logprob(cand, &item.prompt)?;
                *s = match scoring {
                    CandidateScoring::LengthNormalized => lp / cand.len() as f64,
                    CandidateScoring::Raw => lp,
                };
            }
            let mut best = 0;
            for i in 1..4 {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            let tied = scores.iter().filter(|&&s| s == scores[best]).count() > 1;
            Ok((best, tied))
        })
        .collect::<Result<_>>()?;
    let hits: Vec<f64> = picks
        .iter()
        .zip(items)
        .map(|(&(pick, _), item)| f64::from(u8::from(pick == item.correct_index)))
        .collect();
    Ok(CiOutcome {
        accuracy: hits.iter().sum::<f64>() / hits.len() as f64,
        ties: picks.iter().filter(|p| p.1).count(),
        hits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NextTokenEvalConfig {
    pub prompt_tokens: usize,
    pub top_n: usize,
    pub tau: f64,
}

impl Default for NextTokenEvalConfig {
    fn default() -> Self {
        NextTokenEvalConfig {
            prompt_tokens: DEFAULT_PROMPT_TOKENS,
            top_n: DEFAULT_TOP_N,
            tau: DEFAULT_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenEval {
    pub gini: Vec<f64>,
    /// 100 for a collapsed prediction, 0 otherwise.
    pub collapsed: Vec<f64>,
    pub skipped: usize,
}

impl NextTokenEval {
    pub fn mean_gini(&self) -> f64 {
        mean_stderr(&self.gini).0
    }

    pub fn collapsed_pct(&self) -> f64 {
        mean_stderr(&self.collapsed).0
    }
}

/// Gini and collapse indicator of the top-n next-token distribution after
/// the first `prompt_tokens` tokens of every document.
pub fn eval_next_token<M: LanguageModel + ?Sized>(
    model: &M,
    docs: &[Document],
    config: &NextTokenEvalConfig,
) -> Result<NextTokenEval> {
    let eligible: Vec<&Document> = docs
        .iter()
        .filter(|d| d.len() >= config.prompt_tokens)
        .collect();
    let per_doc: Vec<(f64, f64)> = eligible
        .par_iter()
        .map(|d| {
            let q = model.top_n_distribution(&d.tokens[..config.prompt_tokens], config.top_n)?;
            let probs = q.probabilities();
            let c = if collapsed(&probs, config.tau) { 100.0 } else { 0.0 };
            Ok((gini(&probs)?, c))
        })
        .collect::<Result<_>>()?;
    Ok(NextTokenEval {
        gini: per_doc.iter().map(|p| p.0).collect(),
        collapsed: per_doc.iter().map(|p| p.1).collect(),
        skipped: docs.len() - eligible.len(),
    })
}
