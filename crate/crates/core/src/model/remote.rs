//! [`LanguageModel`] backed by an OpenAI-compatible `/v1/completions`
//! endpoint that returns per-token log-probabilities.
//!
//! Token ids are translated through the local vocabulary: contexts are
//! detokenized into text, and the endpoint's tokens are mapped back onto
//! local tokens by character offset.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{LanguageModel, ModelError, ProbVector, SamplingConfig, MASS_TOLERANCE};
use crate::corpus::Document;
use crate::tokenizer::{TokenId, Vocabulary, UNK};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub attempts: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    /// Alternatives requested for full-distribution queries.
    pub logprobs: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "http://127.0.0.1:8000".into(),
            model: "default".into(),
            api_key_env: "AUTOPHAGY_API_KEY".into(),
            max_in_flight: 4,
            attempts: 3,
            backoff: Duration::from_millis(250),
            timeout: Duration::from_secs(60),
            logprobs: 100,
        }
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<usize>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    echo: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Default, Deserialize)]
struct Logprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
    #[serde(default)]
    text_offset: Vec<usize>,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Clones share the connection pool and the in-flight bound.
#[derive(Debug, Clone)]
pub struct RemoteModel {
    config: RemoteConfig,
    vocab: Arc<Vocabulary>,
    agent: ureq::Agent,
    auth: Option<String>,
    slots: Arc<Slots>,
}

impl RemoteModel {
    pub fn new(config: RemoteConfig, vocab: Arc<Vocabulary>) -> Result<Self, ModelError> {
        if config.attempts == 0 || config.max_in_flight == 0 {
            return Err(ModelError::InvalidArgument(
                "attempts and max_in_flight must be at least 1".into(),
            ));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let auth = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .map(|k| format!("Bearer {k}"));
        Ok(RemoteModel {
            slots: Arc::new(Slots {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            }),
            config,
            vocab,
            agent,
            auth,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Choice, ModelError> {
        let _slot = self.slots.acquire();
        let url = self.endpoint();
        let mut last = String::new();
        for attempt in 0..self.config.attempts {
            if attempt > 0 {
                thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            let mut call = self.agent.post(&url);
            if let Some(auth) = &self.auth {
                call = call.header("Authorization", auth);
            }
            match call.send_json(req) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        let parsed: CompletionResponse = resp
                            .body_mut()
                            .read_json()
                            .map_err(|e| ModelError::Protocol(e.to_string()))?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .ok_or_else(|| ModelError::Protocol("no choices in response".into()));
                    }
                    let body = resp.body_mut().read_to_string().unwrap_or_default();
                    if status != 429 && status < 500 {
                        return Err(ModelError::Http { status, body });
                    }
                    last = format!("HTTP {status}: {body}");
                }
                Err(e) => last = e.to_string(),
            }
            warn!("completion request attempt {} failed: {last}", attempt + 1);
        }
        Err(ModelError::Transport {
            attempts: self.config.attempts,
            message: last,
        })
    }

    fn text(&self, ids: &[TokenId]) -> Result<String, ModelError> {
        self.vocab
            .detokenize(ids)
            .map_err(|e| ModelError::InvalidArgument(e.to_string()))
    }

    /// Maps an endpoint token onto a local id; multi-word pieces become UNK.
    fn local_id(&self, piece: &str) -> Option<TokenId> {
        let ids = self.vocab.tokenize(piece.trim());
        match ids.as_slice() {
            [] => None,
            [one] => Some(*one),
            _ => Some(UNK),
        }
    }

    fn distribution(&self, context: &[TokenId], n: usize) -> Result<ProbVector, ModelError> {
        let prompt = self.text(context)?;
        let choice = self.complete(&CompletionRequest {
            model: &self.config.model,
            prompt: &prompt,
            max_tokens: 1,
            temperature: 0.0,
            logprobs: Some(n),
            echo: false,
            seed: None,
        })?;
        let top = choice
            .logprobs
            .and_then(|l| l.top_logprobs.into_iter().next().flatten())
            .ok_or(ModelError::MissingLogprob(0))?;
        let mut merged: BTreeMap<TokenId, f64> = BTreeMap::new();
        for (piece, lp) in top {
            if let Some(id) = self.local_id(&piece) {
                *merged.entry(id).or_default() += lp.exp();
            }
        }
        let entries: Vec<(TokenId, f64)> = merged
            .into_iter()
            .map(|(t, p)| (t, p.min(1.0)))
            .collect();
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if total > 1.0 + MASS_TOLERANCE {
            return Err(ModelError::Protocol(format!("top log-probabilities sum to {total}")));
        }
        ProbVector::top_n_from(entries, n)
    }
}

/// Start offset of every local token inside `text`, which must be the
/// space-joined detokenization of those tokens.
fn token_starts(pieces: &[&str]) -> Vec<usize> {
    let mut pos = 0;
    pieces
        .iter()
        .map(|p| {
            let start = pos;
            pos += p.len() + 1;
            start
        })
        .collect()
}

impl LanguageModel for RemoteModel {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<ProbVector, ModelError> {
        self.distribution(context, self.config.logprobs)
    }

    fn top_n_distribution(&self, context: &[TokenId], n: usize) -> Result<ProbVector, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidArgument("top-n cutoff must be at least 1".into()));
        }
        self.distribution(context, n)
    }

    fn token_probabilities(
        &self,
        tokens: &[TokenId],
        context: &[TokenId],
    ) -> Result<Vec<f64>, ModelError> {
        let mut all = context.to_vec();
        all.extend_from_slice(tokens);
        let pieces: Vec<&str> = all
            .iter()
            .filter_map(|&t| self.vocab.token(t))
            .collect();
        if pieces.len() != all.len() {
            return Err(ModelError::InvalidArgument("token id outside vocabulary".into()));
        }
        let starts = token_starts(&pieces);
        let text = pieces.join(" ");
        let choice = self.complete(&CompletionRequest {
            model: &self.config.model,
            prompt: &text,
            max_tokens: 0,
            temperature: 0.0,
            logprobs: Some(0),
            echo: true,
            seed: None,
        })?;
        let lp = choice.logprobs.unwrap_or_default();
        if lp.text_offset.len() != lp.tokens.len() || lp.token_logprobs.len() != lp.tokens.len() {
            return Err(ModelError::Protocol("ragged logprobs arrays".into()));
        }

        let first = context.len();
        let mut acc = vec![0.0; tokens.len()];
        let mut seen = vec![false; tokens.len()];
        for ((piece, &offset), logprob) in lp.tokens.iter().zip(&lp.text_offset).zip(&lp.token_logprobs) {
            let lead = piece.len() - piece.trim_start().len();
            let at = offset + lead;
            let owner = starts.partition_point(|&s| s <= at).saturating_sub(1);
            if owner < first || piece.trim().is_empty() {
                continue;
            }
            let i = owner - first;
            match logprob {
                Some(v) => acc[i] += v,
                None => return Err(ModelError::MissingLogprob(i)),
            }
            seen[i] = true;
        }
        // A local token with no endpoint token of its own was absorbed by the
        // preceding endpoint token, whose log-probability already covers it.
        if !seen.first().copied().unwrap_or(true) {
            return Err(ModelError::MissingLogprob(0));
        }
        Ok(acc.into_iter().map(f64::exp).collect())
    }

    fn generate_continuation(
        &self,
        prompt: &[TokenId],
        max_new_tokens: usize,
        sampling: &SamplingConfig,
    ) -> Result<Vec<TokenId>, ModelError> {
        sampling.validate()?;
        if max_new_tokens == 0 {
            return Ok(Vec::new());
        }
        let text = self.text(prompt)?;
        let choice = self.complete(&CompletionRequest {
            model: &self.config.model,
            prompt: &text,
            max_tokens: max_new_tokens,
            temperature: if sampling.greedy { 0.0 } else { sampling.temperature },
            logprobs: None,
            echo: false,
            seed: Some(sampling.seed),
        })?;
        let mut ids = self.vocab.tokenize(&choice.text);
        ids.truncate(max_new_tokens);
        Ok(ids)
    }

    fn fine_tune(&mut self, _documents: &[Document], _weight: f64) -> Result<(), ModelError> {
        Err(ModelError::Unsupported("fine-tuning"))
    }
}
