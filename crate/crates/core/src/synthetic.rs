//! Seeded generator for stand-in "human" corpora and four-choice items.
//!
//! Each source is a first-order Markov chain over a shared pseudo-word
//! vocabulary. A source's branching factor sets how predictable its text is:
//! low-branching sources are easy for a model to absorb, high-branching ones
//! keep surprising it.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::corpus::{Document, RawCorpus, RawLine};
use crate::error::{Error, Result};
use crate::metrics::CiItem;
use crate::seed;
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub label: String,
    /// Successors per word.
    pub branching: usize,
    /// Range of the per-word Zipf exponent over successors. High exponents
    /// give near-deterministic continuations.
    pub skew: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub docs: usize,
    pub words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub sources: Vec<SourceSpec>,
    pub seed: u64,
}

impl CorpusSpec {
    /// Three sources from predictable to diverse, documents split evenly.
    pub fn standard(docs: usize, seed: u64) -> Self {
        let source = |label: &str, branching, lo, hi| SourceSpec {
            label: label.into(),
            branching,
            skew: (lo, hi),
        };
        CorpusSpec {
            docs,
            words: 1200,
            min_len: 130,
            max_len: 180,
            sources: vec![
                source("wiki", 4, 1.0, 5.0),
                source("xls", 10, 0.8, 4.0),
                source("sci", 24, 0.6, 3.0),
            ],
            seed,
        }
    }
}

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Distinct pronounceable word for every index.
fn word(mut i: usize) -> String {
    let mut out = String::new();
    let base = ONSETS.len() * VOWELS.len();
    loop {
        let syl = i % base;
        out.push_str(ONSETS[syl / VOWELS.len()]);
        out.push_str(VOWELS[syl % VOWELS.len()]);
        i /= base;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    out
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-s)).collect()
}

fn draw<R: Rng>(weights: &[f64], total: f64, rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

struct Chain {
    successors: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

/// Text and source label for every document, sources interleaved.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<(String, String)>> {
    if spec.sources.is_empty() || spec.words < 2 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidArgument("degenerate synthetic corpus spec".into()));
    }
    // Index 0 and 1 are punctuation so they stay frequent.
    let mut lexicon = vec![".".to_string(), ",".to_string()];
    lexicon.extend((0..spec.words - 2).map(word));
    let global = zipf_weights(lexicon.len(), 1.0);
    let global_total: f64 = global.iter().sum();

    let chains: Vec<Chain> = spec
        .sources
        .iter()
        .enumerate()
        .map(|(s, src)| {
            let mut rng = seed::rng(spec.seed, &[seed::stream::CORPUS, s as u64]);
            let successors: Vec<Vec<usize>> = (0..lexicon.len())
                .map(|_| {
                    let mut next = Vec::with_capacity(src.branching);
                    while next.len() < src.branching.min(lexicon.len()) {
                        let w = draw(&global, global_total, &mut rng);
                        if !next.contains(&w) {
                            next.push(w);
                        }
                    }
                    next
                })
                .collect();
            let weights = successors
                .iter()
                .map(|next| {
                    let skew = if src.skew.0 < src.skew.1 {
                        rng.gen_range(src.skew.0..src.skew.1)
                    } else {
                        src.skew.0
                    };
                    zipf_weights(next.len(), skew)
                })
                .collect();
            Chain { successors, weights }
        })
        .collect();

    let mut rng = seed::rng(spec.seed, &[seed::stream::CORPUS, u64::MAX]);
    let mut out = Vec::with_capacity(spec.docs);
    for d in 0..spec.docs {
        let s = d % spec.sources.len();
        let chain = &chains[s];
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut w = 2 + rng.gen_range(0..lexicon.len() - 2);
        let mut words = Vec::with_capacity(len);
        for _ in 0..len {
            words.push(lexicon[w].as_str());
            let weights = &chain.weights[w];
            w = chain.successors[w][draw(weights, weights.iter().sum(), &mut rng)];
        }
        out.push((words.join(" "), spec.sources[s].label.clone()));
    }
    Ok(out)
}

/// The generated corpus as if read from a file called `label`.
pub fn raw_corpus(spec: &CorpusSpec, label: &str) -> Result<RawCorpus> {
    let lines = generate(spec)?
        .into_iter()
        .enumerate()
        .map(|(line, (text, source))| RawLine {
            line,
            text,
            source: Some(source),
        })
        .collect();
    Ok(RawCorpus {
        label: label.to_string(),
        lines,
        warnings: 0,
    })
}

#[derive(Serialize)]
struct Line<'a> {
    text: &'a str,
    source: &'a str,
}

pub fn write_corpus(path: &Path, spec: &CorpusSpec) -> Result<()> {
    let mut body = String::new();
    for (text, source) in generate(spec)? {
        body.push_str(&serde_json::to_string(&Line { text: &text, source: &source }).map_err(|e| Error::format(path, e))?);
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Four-choice items cut from documents: the prompt is a document prefix,
/// the correct candidate its true continuation, and the distractors are
/// shuffles of that continuation. The correct slot is drawn per item.
pub fn ci_items(docs: &[Document], prompt_len: usize, cont_len: usize, seed: u64) -> Vec<CiItem> {
    let mut rng = seed::rng(seed, &[seed::stream::EVAL]);
    docs.iter()
        .filter(|d| d.len() >= prompt_len + cont_len)
        .filter_map(|d| {
            let prompt = d.tokens[..prompt_len].to_vec();
            let truth: Vec<TokenId> = d.tokens[prompt_len..prompt_len + cont_len].to_vec();
            let correct = rng.gen_range(0..4);
            let mut cands: [Vec<TokenId>; 4] = Default::default();
            for (i, c) in cands.iter_mut().enumerate() {
                *c = truth.clone();
                if i != correct {
                    c.shuffle(&mut rng);
                }
            }
            CiItem::new(prompt, cands, correct).ok()
        })
        .collect()
}
