//! Word-level tokenizer shared by the corpus loader, the models and the
//! metrics, so that token ids mean the same thing everywhere.
//!
//! Text is split on Unicode whitespace; every character that is neither
//! alphanumeric nor whitespace becomes a token of its own. Case is kept.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: TokenId = 0;
pub const EOS: TokenId = 1;
pub const UNK: TokenId = 2;
pub const RESERVED: usize = 3;

const BOS_STR: &str = "<s>";
const EOS_STR: &str = "</s>";
const UNK_STR: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabLine {
    token: String,
    id: TokenId,
    count: u64,
}

impl Vocabulary {
    fn with_reserved() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        };
        for s in [BOS_STR, EOS_STR, UNK_STR] {
            v.push(s.to_string(), 0);
        }
        v
    }

    fn push(&mut self, token: String, count: u64) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        self.counts.push(count);
        id
    }

    /// Builds a vocabulary from raw text. Ids after the reserved block are
    /// assigned by descending count, ties broken lexicographically.
    pub fn build<I, S>(texts: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for piece in split(text.as_ref()) {
                *counts.entry(piece.to_string()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyVocabularyInput);
        }
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(tok, c)| *c >= min_count.max(1) && !is_reserved_surface(tok))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut vocab = Vocabulary::with_reserved();
        for (tok, count) in entries {
            vocab.push(tok, count);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of ordinary (non-reserved) tokens.
    pub fn word_count(&self) -> usize {
        self.tokens.len() - RESERVED
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split(text)
            .map(|piece| {
                if piece == UNK_STR {
                    UNK
                } else {
                    match self.index.get(piece) {
                        Some(&id) if id as usize >= RESERVED => id,
                        _ => UNK,
                    }
                }
            })
            .collect()
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(Error::UnknownTokenId(id))?;
            if id == BOS || id == EOS {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(tok);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, (token, &count)) in self.tokens.iter().zip(&self.counts).enumerate() {
            let line = VocabLine {
                token: token.clone(),
                id: id as TokenId,
                count,
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| Error::format(path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: VocabLine = serde_json::from_str(&line).map_err(|e| Error::format(path, e))?;
            lines.push(parsed);
        }
        Self::from_lines(lines).map_err(|m| Error::format(path, m))
    }

    fn from_lines(mut lines: Vec<VocabLine>) -> std::result::Result<Self, String> {
        lines.sort_by_key(|l| l.id);
        if let Some((expected, _)) = lines
            .iter()
            .enumerate()
            .find(|(i, l)| l.id as usize != *i)
        {
            return Err(format!("vocabulary ids are not dense at {expected}"));
        }
        Self::from_tokens(lines.into_iter().map(|l| (l.token, l.count)))
    }

    /// Rebuilds a vocabulary from `(token, count)` pairs listed in id order.
    pub(crate) fn from_tokens<I>(tokens: I) -> std::result::Result<Self, String>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            counts: Vec::new(),
            index: HashMap::new(),
        };
        for (token, count) in tokens {
            if vocab.index.contains_key(&token) {
                return Err(format!("duplicate token {token:?}"));
            }
            vocab.push(token, count);
        }
        let reserved_ok = vocab.tokens.len() >= RESERVED
            && vocab.tokens[BOS as usize] == BOS_STR
            && vocab.tokens[EOS as usize] == EOS_STR
            && vocab.tokens[UNK as usize] == UNK_STR;
        if !reserved_ok {
            return Err("reserved tokens missing or misplaced".into());
        }
        Ok(vocab)
    }
}

fn is_reserved_surface(s: &str) -> bool {
    matches!(s, BOS_STR | EOS_STR | UNK_STR)
}

fn is_separate(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits text into surface tokens.
pub fn split(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace().flat_map(|chunk| {
        let whole = (chunk == UNK_STR).then_some(chunk);
        let pieces = if whole.is_some() {
            None
        } else {
            Some(split_chunk(chunk))
        };
        whole.into_iter().chain(pieces.into_iter().flatten())
    })
}

fn split_chunk(chunk: &str) -> impl Iterator<Item = &str> {
    let mut rest = chunk;
    std::iter::from_fn(move || {
        let first = rest.chars().next()?;
        let end = if is_separate(first) {
            first.len_utf8()
        } else {
            rest.char_indices()
                .find(|&(_, c)| is_separate(c))
                .map_or(rest.len(), |(i, _)| i)
        };
        let (piece, tail) = rest.split_at(end);
        rest = tail;
        Some(piece)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ids_follow_descending_count() {
        let v = Vocabulary::build(["a a b"], 1).unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.id("a").unwrap() < v.id("b").unwrap());
        assert_eq!(v.id("a"), Some(3));
        assert_eq!(v.token(BOS), Some("<s>"));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = Vocabulary::build(["zeta alpha mid"], 1).unwrap();
        assert_eq!(v.id("alpha"), Some(3));
        assert_eq!(v.id("mid"), Some(4));
        assert_eq!(v.id("zeta"), Some(5));
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let v = Vocabulary::build(["a a b"], 2).unwrap();
        assert_eq!(v.id("b"), None);
        assert_eq!(v.tokenize("b a"), vec![UNK, v.id("a").unwrap()]);
    }

    #[test]
    fn build_is_deterministic() {
        let text = "the cat sat on the mat , the end .";
        assert_eq!(
            Vocabulary::build([text], 1).unwrap(),
            Vocabulary::build([text], 1).unwrap()
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            Vocabulary::build(Vec::<&str>::new(), 1),
            Err(Error::EmptyVocabularyInput)
        ));
        assert!(Vocabulary::build(["   ", ""], 1).is_err());
    }

    #[test]
    fn punctuation_splits_into_single_characters() {
        let pieces: Vec<_> = split("hello, world").collect();
        assert_eq!(pieces, ["hello", ",", "world"]);
        let pieces: Vec<_> = split("end.\"(x)").collect();
        assert_eq!(pieces, ["end", ".", "\"", "(", "x", ")"]);
        assert_eq!(split("").count(), 0);
        assert_eq!(split("  \t\n").count(), 0);
    }

    #[test]
    fn tokenize_known_words() {
        let v = Vocabulary::build(["The church is a building"], 1).unwrap();
        let ids = v.tokenize("The church is a");
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|&i| i != UNK));
        assert!(v.tokenize("").is_empty());
    }

    #[test]
    fn detokenize_drops_sequence_markers() {
        let v = Vocabulary::build(["a b x"], 1).unwrap();
        let a = v.id("a").unwrap();
        let b = v.id("b").unwrap();
        let x = v.id("x").unwrap();
        assert_eq!(v.detokenize(&[a, b]).unwrap(), "a b");
        assert_eq!(v.detokenize(&[BOS, x, EOS]).unwrap(), "x");
        assert!(matches!(v.detokenize(&[99]), Err(Error::UnknownTokenId(99))));
    }

    #[test]
    fn vocabulary_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.jsonl");
        let v = Vocabulary::build(["one two two three three three ."], 1).unwrap();
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn retokenizing_detokenized_text_is_stable(
            vocab_text in "[a-e ,.!]{1,60}",
            text in "[a-h ,.;!\\t]{0,80}",
        ) {
            prop_assume!(split(&vocab_text).next().is_some());
            let v = Vocabulary::build([vocab_text.as_str()], 1).unwrap();
            let ids = v.tokenize(&text);
            prop_assert!(ids.iter().all(|&i| (i as usize) < v.len()));
            let again = v.tokenize(&v.detokenize(&ids).unwrap());
            prop_assert_eq!(again, ids);
        }
    }
}
