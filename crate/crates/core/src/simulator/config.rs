use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{CandidateScoring, NextTokenEvalConfig};
use crate::model::SamplingConfig;
use crate::selection::Strategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Held-out human documents used for next-token metrics.
    pub n_eval_docs: usize,
    pub next_token: NextTokenEvalConfig,
    pub ci_scoring: CandidateScoring,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_eval_docs: 1000,
            next_token: NextTokenEvalConfig::default(),
            ci_scoring: CandidateScoring::default(),
        }
    }
}

/// Full parameterization of an autophagy run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Prompt length in tokens.
    pub prompt_len: usize,
    /// Upper bound on prompt plus continuation.
    pub max_doc_len: usize,
    pub steps: usize,
    /// Documents selected per step by sampling and ranking strategies.
    pub selection_size: usize,
    /// Prompts to use; all eligible training documents when unset.
    pub n_prompts: Option<usize>,
    pub strategy: Strategy,
    pub sampling: SamplingConfig,
    pub fine_tune_weight: f64,
    pub eval: EvalConfig,
    pub master_seed: u64,
    pub repeats: usize,
    /// Pool every past generation instead of only the latest one.
    pub accumulate: bool,
    /// Rank surplexity against the initial model rather than the current one.
    pub score_against_initial: bool,
    /// Worker threads; the global pool when unset. Results do not depend on it.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            prompt_len: 64,
            max_doc_len: 128,
            steps: 10,
            selection_size: 1000,
            n_prompts: None,
            strategy: Strategy::AiOnly,
            sampling: SamplingConfig::default(),
            fine_tune_weight: 1.0,
            eval: EvalConfig::default(),
            master_seed: 0,
            repeats: 3,
            accumulate: false,
            score_against_initial: false,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.prompt_len < 1 {
            return fail("k must be at least 1");
        }
        if self.prompt_len >= self.max_doc_len {
            return fail("k must be < L");
        }
        if self.steps < 1 {
            return fail("T must be at least 1");
        }
        if self.selection_size < 1 {
            return fail("z must be at least 1");
        }
        if self.repeats < 1 {
            return fail("repeats must be at least 1");
        }
        if self.n_prompts == Some(0) {
            return fail("n_prompts must be at least 1");
        }
        if !(self.fine_tune_weight > 0.0 && self.fine_tune_weight.is_finite()) {
            return fail("fine-tune weight must be positive");
        }
        if self.eval.next_token.top_n < 1 || self.eval.next_token.prompt_tokens < 1 {
            return fail("evaluation top_n and prompt_tokens must be at least 1");
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1");
        }
        self.strategy.validate()?;
        self.sampling
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Continuation budget per prompt.
    pub fn continuation_len(&self) -> usize {
        self.max_doc_len - self.prompt_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!((c.prompt_len, c.max_doc_len, c.steps), (64, 128, 10));
        assert_eq!(c.continuation_len(), 64);
        assert_eq!(c.selection_size, 1000);
        assert_eq!(c.eval.next_token.top_n, 100);
        assert_eq!(c.eval.next_token.prompt_tokens, 32);
        assert_eq!(c.eval.next_token.tau, 0.99);
    }

    #[test]
    fn prompt_must_be_shorter_than_documents() {
        let c = SimConfig {
            prompt_len: 200,
            ..Default::default()
        };
        assert_eq!(c.validate().unwrap_err().to_string(), "invalid configuration: k must be < L");
        let c = SimConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
