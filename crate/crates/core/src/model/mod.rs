//! The language-model interface and its implementations.
//!
//! [`NgramModel`] is the built-in reference model; [`RemoteModel`] forwards
//! the same calls to an OpenAI-style completions endpoint.

mod ngram;
mod remote;
mod sampling;

pub use ngram::{NgramConfig, NgramModel};
pub use remote::{RemoteConfig, RemoteModel};
pub use sampling::{sample_index, SamplingConfig};

use std::path::Path;

use thiserror::Error;

use crate::corpus::Document;
use crate::tokenizer::TokenId;

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is not supported by this model")]
    Unsupported(&'static str),

    #[error("request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("unexpected response: {0}")]
    Protocol(String),

    #[error("endpoint returned no log-probability for position {0}")]
    MissingLogprob(usize),

    #[error("model snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    FullVocab,
    TopN(usize),
}

/// A next-token distribution, either over the whole support of the model
/// or truncated to its `n` most likely entries.
///
/// Zero-probability tokens are not listed. Full vectors are ordered by token
/// id; top-n vectors by descending probability, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    entries: Vec<(TokenId, f64)>,
    scope: Scope,
}

impl ProbVector {
    pub fn full(mut entries: Vec<(TokenId, f64)>) -> Result<Self, ModelError> {
        entries.retain(|&(_, p)| p > 0.0);
        entries.sort_by_key(|&(t, _)| t);
        check_probabilities(&entries)?;
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::InvalidArgument(format!(
                "full distribution sums to {total}"
            )));
        }
        Ok(ProbVector {
            entries,
            scope: Scope::FullVocab,
        })
    }

    /// Builds a truncated vector, keeping the `n` most likely entries.
    pub fn top_n_from(mut entries: Vec<(TokenId, f64)>, n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidArgument("top-n cutoff must be at least 1".into()));
        }
        entries.retain(|&(_, p)| p > 0.0);
        check_probabilities(&entries)?;
        sort_descending(&mut entries);
        entries.truncate(n);
        let total: f64 = entries.iter().map(|&(_, p)| p).sum();
        if total > 1.0 + MASS_TOLERANCE {
            return Err(ModelError::InvalidArgument(format!(
                "top-n mass {total} exceeds 1"
            )));
        }
        Ok(ProbVector {
            entries,
            scope: Scope::TopN(n),
        })
    }

    /// The `n` most likely entries, without renormalization.
    pub fn top_n(&self, n: usize) -> Result<ProbVector, ModelError> {
        ProbVector::top_n_from(self.entries.clone(), n)
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn scope(&self) -> Scope {
        self.scope
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, p)| p).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.entries
            .iter()
            .find(|&&(t, _)| t == token)
            .map_or(0.0, |&(_, p)| p)
    }

    /// Most likely token; the lowest id wins a tie.
    pub fn argmax(&self) -> Option<(TokenId, f64)> {
        self.entries.iter().copied().reduce(|best, e| {
            if e.1 > best.1 || (e.1 == best.1 && e.0 < best.0) {
                e
            } else {
                best
            }
        })
    }
}

fn check_probabilities(entries: &[(TokenId, f64)]) -> Result<(), ModelError> {
    match entries.iter().find(|&&(_, p)| !(0.0..=1.0).contains(&p)) {
        Some(&(t, p)) => Err(ModelError::InvalidArgument(format!(
            "probability {p} for token {t} is outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

pub(crate) fn sort_descending(entries: &mut [(TokenId, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Behavioural contract shared by every model driven by the simulator.
///
/// Read operations take `&self` and may run concurrently; `fine_tune`
/// takes `&mut self`.
pub trait LanguageModel: Send + Sync {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<ProbVector, ModelError>;

    fn top_n_distribution(&self, context: &[TokenId], n: usize) -> Result<ProbVector, ModelError> {
        self.next_token_distribution(context)?.top_n(n)
    }

    /// `P(tokens[i] | context ++ tokens[..i])` for every position.
    fn token_probabilities(
        &self,
        tokens: &[TokenId],
        context: &[TokenId],
    ) -> Result<Vec<f64>, ModelError> {
        let mut ctx = context.to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            out.push(self.next_token_distribution(&ctx)?.get(t));
            ctx.push(t);
        }
        Ok(out)
    }

    /// Natural-log probability of `tokens` following `context`.
    fn sequence_logprob(&self, tokens: &[TokenId], context: &[TokenId]) -> Result<f64, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::InvalidArgument("empty token sequence".into()));
        }
        Ok(self
            .token_probabilities(tokens, context)?
            .into_iter()
            .map(f64::ln)
            .sum())
    }

    fn generate_continuation(
        &self,
        prompt: &[TokenId],
        max_new_tokens: usize,
        sampling: &SamplingConfig,
    ) -> Result<Vec<TokenId>, ModelError>;

    fn fine_tune(&mut self, documents: &[Document], weight: f64) -> Result<(), ModelError>;

    fn save_snapshot(&self, _path: &Path) -> Result<(), ModelError> {
        Err(ModelError::Unsupported("snapshotting"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_vector_rejects_bad_mass() {
        assert!(ProbVector::full(vec![(3, 0.5), (4, 0.4)]).is_err());
        assert!(ProbVector::full(vec![(3, 1.5), (4, -0.5)]).is_err());
        let v = ProbVector::full(vec![(4, 0.25), (3, 0.75), (5, 0.0)]).unwrap();
        assert_eq!(v.entries(), &[(3, 0.75), (4, 0.25)]);
    }

    #[test]
    fn top_n_sorts_and_truncates() {
        let v = ProbVector::full(vec![(3, 0.2), (4, 0.5), (5, 0.2), (6, 0.1)]).unwrap();
        let t = v.top_n(3).unwrap();
        assert_eq!(t.entries(), &[(4, 0.5), (3, 0.2), (5, 0.2)]);
        assert_eq!(t.scope(), Scope::TopN(3));
        assert_eq!(v.top_n(1).unwrap().entries(), &[(4, 0.5)]);
        assert_eq!(v.top_n(10).unwrap().len(), 4);
        assert!(v.top_n(0).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_id_on_ties() {
        let v = ProbVector::full(vec![(9, 0.4), (5, 0.4), (7, 0.2)]).unwrap();
        assert_eq!(v.argmax(), Some((5, 0.4)));
    }
}
