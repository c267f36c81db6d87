//! Documents, corpora and the fixed prompt set.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Vocabulary};

/// Where a document came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Origin {
    Human,
    /// Generated by the model during simulation step `step`.
    Ai { step: u32 },
}

impl Origin {
    pub fn is_human(self) -> bool {
        matches!(self, Origin::Human)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Human => f.write_str("human"),
            Origin::Ai { step } => write!(f, "ai:{step}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub tokens: Arc<[TokenId]>,
    pub origin: Origin,
    pub source_label: String,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        tokens: impl Into<Arc<[TokenId]>>,
        origin: Origin,
        source_label: impl Into<String>,
    ) -> Result<Self> {
        let tokens = tokens.into();
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::InvalidArgument(format!("document {id} has no tokens")));
        }
        Ok(Document {
            id,
            tokens,
            origin,
            source_label: source_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Copy of this document cut to at most `max_len` tokens.
    pub fn truncated(&self, max_len: usize) -> Document {
        if self.tokens.len() <= max_len {
            return self.clone();
        }
        Document {
            tokens: self.tokens[..max_len.max(1)].into(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub label: String,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(label: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let label = label.into();
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate document id {} in corpus {label}",
                    d.id
                )));
            }
        }
        Ok(Corpus { label, documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// One accepted line of a corpus file, before tokenization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLine {
    pub line: usize,
    pub text: String,
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCorpus {
    pub label: String,
    pub lines: Vec<RawLine>,
    pub warnings: usize,
}

#[derive(Deserialize)]
struct JsonLine {
    text: String,
    #[serde(default)]
    source: Option<String>,
}

#[derive(Serialize)]
struct JsonLineOut<'a> {
    text: &'a str,
    source: &'a str,
}

impl RawCorpus {
    /// Reads a JSONL file with a required `text` and optional `source` field.
    /// Malformed and blank lines are skipped and counted.
    pub fn read(path: &Path, label: &str) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Vec::new();
        let mut warnings = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            match serde_json::from_str::<JsonLine>(&line) {
                Ok(parsed) if !parsed.text.trim().is_empty() => lines.push(RawLine {
                    line: n,
                    text: parsed.text,
                    source: parsed.source,
                }),
                Ok(_) => {
                    warnings += 1;
                    warn!("{}:{}: blank text, skipped", path.display(), n + 1);
                }
                Err(e) => {
                    warnings += 1;
                    warn!("{}:{}: malformed line skipped ({e})", path.display(), n + 1);
                }
            }
        }
        if lines.is_empty() {
            return Err(Error::EmptyCorpus(path.display().to_string()));
        }
        Ok(RawCorpus {
            label: label.to_string(),
            lines,
            warnings,
        })
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().map(|l| l.text.as_str())
    }

    /// Tokenizes every line into a human document with id `<label>:<line>`.
    pub fn tokenize(&self, vocab: &Vocabulary) -> Result<Corpus> {
        let mut docs = Vec::with_capacity(self.lines.len());
        for l in &self.lines {
            let tokens = vocab.tokenize(&l.text);
            if tokens.is_empty() {
                continue;
            }
            let source = l.source.as_deref().unwrap_or(&self.label);
            docs.push(Document::new(
                format!("{}:{}", self.label, l.line),
                tokens,
                Origin::Human,
                source,
            )?);
        }
        if docs.is_empty() {
            return Err(Error::EmptyCorpus(self.label.clone()));
        }
        Corpus::new(self.label.clone(), docs)
    }
}

/// Loads a corpus file and tokenizes it with `vocab`.
pub fn load_corpus(path: &Path, label: &str, vocab: &Vocabulary) -> Result<Corpus> {
    RawCorpus::read(path, label)?.tokenize(vocab)
}

/// Writes documents back out as JSONL text.
pub fn write_jsonl<'a, I>(path: &Path, docs: I, vocab: &Vocabulary) -> Result<()>
where
    I: IntoIterator<Item = &'a Document>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in docs {
        let text = vocab.detokenize(&d.tokens)?;
        let line = JsonLineOut {
            text: &text,
            source: &d.source_label,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::format(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub source_id: String,
    pub source_label: String,
    pub tokens: Arc<[TokenId]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub k: usize,
    pub prompts: Vec<Prompt>,
    /// Documents shorter than `k`.
    pub skipped: usize,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    /// True if `tokens` starts with one of the prompts.
    pub fn is_prefix_of_any(&self, tokens: &[TokenId]) -> bool {
        tokens.len() >= self.k
            && self
                .prompts
                .iter()
                .any(|p| tokens[..self.k] == p.tokens[..])
    }
}

/// Truncates every document with at least `k` tokens to its first `k`.
pub fn make_prompts<'a, I>(docs: I, k: usize) -> Result<PromptSet>
where
    I: IntoIterator<Item = &'a Document>,
{
    if k == 0 {
        return Err(Error::InvalidArgument("prompt length k must be at least 1".into()));
    }
    let mut prompts = Vec::new();
    let mut skipped = 0;
    for d in docs {
        if d.len() < k {
            skipped += 1;
            continue;
        }
        prompts.push(Prompt {
            source_id: d.id.clone(),
            source_label: d.source_label.clone(),
            tokens: d.tokens[..k].into(),
        });
    }
    if prompts.is_empty() {
        return Err(Error::NoEligiblePrompts { k, skipped });
    }
    if skipped > 0 {
        warn!("{skipped} documents shorter than {k} tokens skipped for prompting");
    }
    Ok(PromptSet { k, prompts, skipped })
}
