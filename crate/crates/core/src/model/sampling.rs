use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tokenizer::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub seed: u64,
    pub stop_at_eos: bool,
    /// Always take the most likely token; temperature and seed are ignored.
    pub greedy: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 0.8,
            top_k: 40,
            seed: 0,
            stop_at_eos: true,
            greedy: false,
        }
    }
}

impl SamplingConfig {
    pub fn greedy() -> Self {
        SamplingConfig {
            greedy: true,
            ..Default::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplingConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.top_k == 0 {
            return Err(ModelError::InvalidArgument("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draws from `candidates` (sorted by descending probability) after
/// tempering by `1 / temperature`. Returns an index into `candidates`.
pub fn sample_index<R: Rng + ?Sized>(
    candidates: &[(TokenId, f64)],
    temperature: f64,
    rng: &mut R,
) -> usize {
    let top = candidates[0].1;
    let inv_t = 1.0 / temperature;
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&(_, p)| (p / top).powf(inv_t))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    candidates.len() - 1
}
