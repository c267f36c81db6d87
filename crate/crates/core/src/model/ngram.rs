//! Interpolated n-gram model with additive fine-tuning.
//!
//! The unigram level is add-`alpha` smoothed over the ordinary (non-reserved)
//! words, so every word keeps positive probability in every context. Each
//! higher level `m` mixes its maximum-likelihood estimate with level `m - 1`:
//!
//! ```text
//! P_m(w | h) = (1 - b(h)) * c(h, w) / c(h) + b(h) * P_{m-1}(w | h')
//! b(h)       = lambda * T(h) / (lambda * T(h) + (1 - lambda) * c(h))
//! ```
//!
//! where `T(h)` is the number of distinct followers of `h`. A context whose
//! followers were each seen once backs off with weight exactly `lambda`; the
//! weight shrinks as counts pile up on the same followers, which is what
//! lets repeated self-training sharpen the model.
//!
//! Fine-tuning adds `weight` to every n-gram count of every document
//! (BOS-padded, EOS-terminated); earlier counts are kept.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use super::{sampling, sort_descending, LanguageModel, ModelError, ProbVector, SamplingConfig};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Vocabulary, BOS, EOS, RESERVED};

const SNAPSHOT_FORMAT: &str = "autophagy-ngram";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NgramConfig {
    /// Tokens per n-gram, including the predicted one.
    pub order: usize,
    pub alpha: f64,
    pub backoff_lambda: f64,
}

impl Default for NgramConfig {
    fn default() -> Self {
        NgramConfig {
            order: 3,
            alpha: 0.1,
            backoff_lambda: 0.4,
        }
    }
}

impl NgramConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.order == 0 {
            return Err(ModelError::InvalidArgument("n-gram order must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(ModelError::InvalidArgument("alpha must be positive".into()));
        }
        if !(self.backoff_lambda > 0.0 && self.backoff_lambda <= 1.0) {
            return Err(ModelError::InvalidArgument(
                "backoff_lambda must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Followers {
    total: f64,
    next: FxHashMap<TokenId, f64>,
}

impl Followers {
    fn backoff_weight(&self, lambda: f64) -> f64 {
        if self.total <= 0.0 {
            return 1.0;
        }
        let types = lambda * self.next.len() as f64;
        types / (types + (1.0 - lambda) * self.total)
    }
}

#[derive(Debug, Clone)]
pub struct NgramModel {
    config: NgramConfig,
    vocab: Arc<Vocabulary>,
    unigram: Vec<f64>,
    unigram_total: f64,
    /// `levels[m - 1]` maps contexts of length `m` to their followers.
    levels: Vec<FxHashMap<Vec<TokenId>, Followers>>,
    /// Predictable ids by descending unigram probability, ties by id.
    ranked: Vec<TokenId>,
}

impl NgramModel {
    pub fn new(vocab: Arc<Vocabulary>, config: NgramConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut model = NgramModel {
            unigram: vec![0.0; vocab.len()],
            unigram_total: 0.0,
            levels: vec![FxHashMap::default(); config.order - 1],
            ranked: Vec::new(),
            config,
            vocab,
        };
        model.rerank();
        Ok(model)
    }

    pub fn config(&self) -> NgramConfig {
        self.config
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Raw count of `token` after `context`; the context length picks the level.
    pub fn count(&self, context: &[TokenId], token: TokenId) -> f64 {
        if context.is_empty() {
            return self.unigram.get(token as usize).copied().unwrap_or(0.0);
        }
        self.levels
            .get(context.len() - 1)
            .and_then(|l| l.get(context))
            .and_then(|f| f.next.get(&token))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn context_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    fn unigram_prob(&self, token: TokenId) -> f64 {
        if token == BOS {
            return 0.0;
        }
        let words = self.vocab.word_count() as f64;
        let denom = self.unigram_total + self.config.alpha * words;
        if denom <= 0.0 {
            return 0.0;
        }
        let count = self.unigram[token as usize];
        if (token as usize) < RESERVED {
            count / denom
        } else {
            (count + self.config.alpha) / denom
        }
    }

    /// Follower tables for each context length `1..order`, shortest first.
    fn states(&self, context: &[TokenId]) -> Vec<Option<&Followers>> {
        let width = self.config.order - 1;
        let mut window = vec![BOS; width.saturating_sub(context.len())];
        window.extend_from_slice(&context[context.len().saturating_sub(width)..]);
        (1..=width)
            .map(|m| self.levels[m - 1].get(&window[width - m..]))
            .collect()
    }

    fn prob(&self, token: TokenId, states: &[Option<&Followers>]) -> f64 {
        let lambda = self.config.backoff_lambda;
        let mut p = self.unigram_prob(token);
        for f in states.iter().flatten() {
            let b = f.backoff_weight(lambda);
            let c = f.next.get(&token).copied().unwrap_or(0.0);
            p = (1.0 - b) * c / f.total + b * p;
        }
        p
    }

    /// The `k` most likely next tokens, identical to sorting the full
    /// distribution. Tokens that follow none of the contexts score
    /// proportionally to their unigram probability, so only the first few
    /// of them in `ranked` order can make the cut.
    fn top_candidates(&self, states: &[Option<&Followers>], k: usize) -> Vec<(TokenId, f64)> {
        let mut followers: Vec<TokenId> = states
            .iter()
            .flatten()
            .flat_map(|f| f.next.keys().copied())
            .collect();
        followers.sort_unstable();
        followers.dedup();

        let mut cands: Vec<(TokenId, f64)> = followers
            .iter()
            .map(|&t| (t, self.prob(t, states)))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        let mut taken = 0;
        for &t in &self.ranked {
            if taken == k {
                break;
            }
            if followers.binary_search(&t).is_ok() {
                continue;
            }
            let p = self.prob(t, states);
            if p <= 0.0 {
                break;
            }
            cands.push((t, p));
            taken += 1;
        }
        sort_descending(&mut cands);
        cands.truncate(k);
        cands
    }

    fn rerank(&mut self) {
        let mut ranked: Vec<(TokenId, f64)> = (1..self.vocab.len() as TokenId)
            .map(|t| (t, self.unigram_prob(t)))
            .collect();
        sort_descending(&mut ranked);
        self.ranked = ranked.into_iter().map(|(t, _)| t).collect();
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), ModelError> {
        match tokens.iter().find(|&&t| t as usize >= self.vocab.len()) {
            Some(t) => Err(ModelError::InvalidArgument(format!(
                "token id {t} outside vocabulary of {}",
                self.vocab.len()
            ))),
            None => Ok(()),
        }
    }

    fn add_sequence(&mut self, tokens: &[TokenId], weight: f64) {
        let width = self.config.order - 1;
        let mut padded = vec![BOS; width];
        padded.extend_from_slice(tokens);
        padded.push(EOS);
        for i in width..padded.len() {
            let target = padded[i];
            self.unigram[target as usize] += weight;
            self.unigram_total += weight;
            for m in 1..=width {
                let ctx = &padded[i - m..i];
                let level = &mut self.levels[m - 1];
                let f = match level.get_mut(ctx) {
                    Some(f) => f,
                    None => level.entry(ctx.to_vec()).or_default(),
                };
                f.total += weight;
                *f.next.entry(target).or_default() += weight;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_snapshot()).map_err(|e| Error::format(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let snap: Snapshot =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e))?;
        NgramModel::from_snapshot(snap).map_err(|e| Error::format(path, e))
    }

    fn to_snapshot(&self) -> Snapshot {
        let vocab = (0..self.vocab.len() as TokenId)
            .map(|id| SnapshotToken {
                token: self.vocab.token(id).unwrap_or_default().to_string(),
                count: self.vocab.count(id).unwrap_or_default(),
            })
            .collect();
        let mut contexts = Vec::new();
        for level in &self.levels {
            let mut keys: Vec<&Vec<TokenId>> = level.keys().collect();
            keys.sort();
            for key in keys {
                let mut next: Vec<(TokenId, f64)> =
                    level[key].next.iter().map(|(&t, &c)| (t, c)).collect();
                next.sort_by_key(|&(t, _)| t);
                contexts.push(SnapshotContext {
                    context: key.clone(),
                    next,
                });
            }
        }
        Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            config: self.config,
            vocab,
            unigram: self.unigram.clone(),
            contexts,
        }
    }

    fn from_snapshot(snap: Snapshot) -> Result<Self, ModelError> {
        if snap.format != SNAPSHOT_FORMAT || snap.version != SNAPSHOT_VERSION {
            return Err(ModelError::Snapshot(format!(
                "unsupported snapshot {} v{}",
                snap.format, snap.version
            )));
        }
        let vocab = Vocabulary::from_tokens(snap.vocab.into_iter().map(|t| (t.token, t.count)))
            .map_err(ModelError::Snapshot)?;
        if snap.unigram.len() != vocab.len() {
            return Err(ModelError::Snapshot("unigram table size mismatch".into()));
        }
        let mut model = NgramModel::new(Arc::new(vocab), snap.config)?;
        model.unigram_total = snap.unigram.iter().sum();
        model.unigram = snap.unigram;
        for c in snap.contexts {
            let m = c.context.len();
            if m == 0 || m >= model.config.order {
                return Err(ModelError::Snapshot(format!("bad context length {m}")));
            }
            model.check_tokens(&c.context)?;
            let f = model.levels[m - 1].entry(c.context).or_default();
            for (t, count) in c.next {
                f.total += count;
                f.next.insert(t, count);
            }
        }
        model.rerank();
        Ok(model)
    }
}

impl LanguageModel for NgramModel {
    fn next_token_distribution(&self, context: &[TokenId]) -> Result<ProbVector, ModelError> {
        let states = self.states(context);
        let entries = (1..self.vocab.len() as TokenId)
            .map(|t| (t, self.prob(t, &states)))
            .collect();
        ProbVector::full(entries)
    }

    fn top_n_distribution(&self, context: &[TokenId], n: usize) -> Result<ProbVector, ModelError> {
        if n == 0 {
            return Err(ModelError::InvalidArgument("top-n cutoff must be at least 1".into()));
        }
        let states = self.states(context);
        ProbVector::top_n_from(self.top_candidates(&states, n), n)
    }

    fn token_probabilities(
        &self,
        tokens: &[TokenId],
        context: &[TokenId],
    ) -> Result<Vec<f64>, ModelError> {
        self.check_tokens(tokens)?;
        let mut ctx = context.to_vec();
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            out.push(self.prob(t, &self.states(&ctx)));
            ctx.push(t);
        }
        Ok(out)
    }

    fn generate_continuation(
        &self,
        prompt: &[TokenId],
        max_new_tokens: usize,
        sampling: &SamplingConfig,
    ) -> Result<Vec<TokenId>, ModelError> {
        sampling.validate()?;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sampling.seed);
        let k = if sampling.greedy { 1 } else { sampling.top_k };
        let mut ctx = prompt.to_vec();
        let mut out = Vec::with_capacity(max_new_tokens);
        while out.len() < max_new_tokens {
            let cands = self.top_candidates(&self.states(&ctx), k);
            if cands.is_empty() {
                break;
            }
            let pick = if sampling.greedy {
                0
            } else {
                sampling::sample_index(&cands, sampling.temperature, &mut rng)
            };
            let token = cands[pick].0;
            if token == EOS && sampling.stop_at_eos {
                break;
            }
            out.push(token);
            ctx.push(token);
        }
        Ok(out)
    }

    fn fine_tune(&mut self, documents: &[Document], weight: f64) -> Result<(), ModelError> {
        if documents.is_empty() {
            return Err(ModelError::InvalidArgument("fine-tuning set is empty".into()));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(ModelError::InvalidArgument(format!(
                "fine-tuning weight must be positive, got {weight}"
            )));
        }
        for d in documents {
            self.check_tokens(&d.tokens)?;
        }
        for d in documents {
            self.add_sequence(&d.tokens, weight);
        }
        self.rerank();
        Ok(())
    }

    fn save_snapshot(&self, path: &Path) -> Result<(), ModelError> {
        self.save(path).map_err(|e| ModelError::Snapshot(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotToken {
    token: String,
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotContext {
    context: Vec<TokenId>,
    next: Vec<(TokenId, f64)>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    config: NgramConfig,
    vocab: Vec<SnapshotToken>,
    unigram: Vec<f64>,
    contexts: Vec<SnapshotContext>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Origin;
    use proptest::prelude::*;

    fn vocab(text: &str) -> Arc<Vocabulary> {
        Arc::new(Vocabulary::build([text], 1).unwrap())
    }

    fn doc(tokens: Vec<TokenId>) -> Document {
        Document::new("d", tokens, Origin::Human, "t").unwrap()
    }

    fn trained(text: &str, order: usize) -> NgramModel {
        let v = vocab(text);
        let tokens = v.tokenize(text);
        let mut m = NgramModel::new(
            v,
            NgramConfig {
                order,
                ..Default::default()
            },
        )
        .unwrap();
        m.fine_tune(&[doc(tokens)], 1.0).unwrap();
        m
    }

    #[test]
    fn untrained_model_is_uniform_over_words() {
        let v = vocab("a b c d e");
        let m = NgramModel::new(v.clone(), NgramConfig::default()).unwrap();
        let dist = m.next_token_distribution(&[]).unwrap();
        assert_eq!(dist.len(), 5);
        for &(t, p) in dist.entries() {
            assert!(t as usize >= RESERVED);
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_bigram_is_the_mode() {
        let m = trained("a b a b a b a b a b a b", 2);
        let a = m.vocab().id("a").unwrap();
        let b = m.vocab().id("b").unwrap();
        let dist = m.next_token_distribution(&[a]).unwrap();
        assert_eq!(dist.argmax().unwrap().0, b);
    }

    #[test]
    fn distributions_sum_to_one_and_stay_positive() {
        let m = trained("the cat sat on the mat . the dog sat on the log .", 3);
        let the = m.vocab().id("the").unwrap();
        for ctx in [vec![], vec![the], vec![the, the], vec![2, 3, 4, 5]] {
            let d = m.next_token_distribution(&ctx).unwrap();
            assert!((d.mass() - 1.0).abs() < 1e-9);
            let words = d.entries().iter().filter(|&&(t, _)| t as usize >= RESERVED).count();
            assert_eq!(words, m.vocab().word_count());
        }
    }

    #[test]
    fn backoff_weight_equals_lambda_for_singleton_followers() {
        let mut f = Followers {
            total: 3.0,
            ..Followers::default()
        };
        for t in 3..6 {
            f.next.insert(t, 1.0);
        }
        assert!((f.backoff_weight(0.4) - 0.4).abs() < 1e-15);
        assert_eq!(Followers::default().backoff_weight(0.4), 1.0);
    }

    #[test]
    fn fine_tune_on_same_data_doubles_counts() {
        let text = "x y z x y w";
        let mut m = trained(text, 3);
        let before = m.clone();
        let tokens = m.vocab().tokenize(text);
        m.fine_tune(&[doc(tokens.clone())], 1.0).unwrap();
        let (x, y) = (tokens[0], tokens[1]);
        assert_eq!(m.count(&[x], y), 2.0 * before.count(&[x], y));
        assert_eq!(m.count(&[BOS, x], y), 2.0 * before.count(&[BOS, x], y));
        assert_eq!(m.count(&[], x), 2.0 * before.count(&[], x));
        assert_eq!(m.count(&[], EOS), 2.0);
    }

    #[test]
    fn fine_tune_is_linear_in_weight() {
        let text = "p q r p q s p";
        let v = vocab(text);
        let d = doc(v.tokenize(text));
        let mut twice = NgramModel::new(v.clone(), NgramConfig::default()).unwrap();
        twice.fine_tune(std::slice::from_ref(&d), 0.75).unwrap();
        twice.fine_tune(std::slice::from_ref(&d), 0.75).unwrap();
        let mut once = NgramModel::new(v, NgramConfig::default()).unwrap();
        once.fine_tune(&[d], 1.5).unwrap();
        assert_eq!(twice.to_snapshot().contexts.len(), once.to_snapshot().contexts.len());
        for (a, b) in twice.to_snapshot().contexts.iter().zip(once.to_snapshot().contexts.iter()) {
            assert_eq!(a.context, b.context);
            assert_eq!(a.next, b.next);
        }
        assert_eq!(twice.unigram, once.unigram);
    }

    #[test]
    fn fine_tune_rejects_bad_input() {
        let mut m = trained("a b", 2);
        assert!(m.fine_tune(&[], 1.0).is_err());
        assert!(m.fine_tune(&[doc(vec![3])], 0.0).is_err());
        assert!(m.fine_tune(&[doc(vec![3, 999])], 1.0).is_err());
    }

    #[test]
    fn sequence_logprob_follows_the_chain_rule() {
        let m = trained("u v w u v x u", 3);
        let toks = m.vocab().tokenize("u v x");
        let lp = m.sequence_logprob(&toks, &[]).unwrap();
        let mut ctx = vec![];
        let mut oracle = 0.0;
        for &t in &toks {
            oracle += m.next_token_distribution(&ctx).unwrap().get(t).ln();
            ctx.push(t);
        }
        assert!((lp - oracle).abs() < 1e-12);
        assert!(lp < 0.0);
        assert!(m.sequence_logprob(&[], &[]).is_err());
    }

    #[test]
    fn generation_respects_budget_and_seed() {
        let m = trained("a b c d e f g a b c d e f g a c e g", 3);
        let prompt = m.vocab().tokenize("a b");
        let s = SamplingConfig::default().with_seed(9);
        assert!(m.generate_continuation(&prompt, 0, &s).unwrap().is_empty());
        let g1 = m.generate_continuation(&prompt, 64, &s).unwrap();
        let g2 = m.generate_continuation(&prompt, 64, &s).unwrap();
        assert_eq!(g1, g2);
        assert!(g1.len() <= 64);
        assert!(!g1.contains(&BOS));
    }

    #[test]
    fn greedy_generation_follows_the_argmax_chain() {
        let m = trained("a b c a b c a b c a b d", 2);
        let prompt = m.vocab().tokenize("a");
        let g = m
            .generate_continuation(&prompt, 5, &SamplingConfig::greedy().with_seed(1))
            .unwrap();
        let g_other = m
            .generate_continuation(&prompt, 5, &SamplingConfig::greedy().with_seed(2))
            .unwrap();
        assert_eq!(g, g_other);
        let mut ctx = prompt.clone();
        for &t in &g {
            assert_eq!(m.next_token_distribution(&ctx).unwrap().argmax().unwrap().0, t);
            ctx.push(t);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let m = trained("one two three two one three three .", 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = NgramModel::load(&path).unwrap();
        let ctx = m.vocab().tokenize("two one");
        assert_eq!(
            m.next_token_distribution(&ctx).unwrap(),
            back.next_token_distribution(&ctx).unwrap()
        );
        assert_eq!(**m.vocab(), **back.vocab());
        back.save(&dir.path().join("m2.json")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("m2.json")).unwrap()
        );
    }

    proptest! {
        #[test]
        fn fast_top_n_matches_sorted_full_distribution(
            words in proptest::collection::vec(0u8..12, 5..80),
            ctx in proptest::collection::vec(0u8..12, 0..4),
            n in 1usize..20,
        ) {
            let text: String = words.iter().map(|w| format!("w{w} ")).collect();
            let m = trained(&text, 3);
            let ctx: Vec<TokenId> = ctx
                .iter()
                .map(|w| m.vocab().id(&format!("w{w}")).unwrap_or(crate::tokenizer::UNK))
                .collect();
            let fast = m.top_n_distribution(&ctx, n).unwrap();
            let oracle = m.next_token_distribution(&ctx).unwrap().top_n(n).unwrap();
            prop_assert_eq!(fast, oracle);
        }

        #[test]
        fn every_context_is_normalised(
            words in proptest::collection::vec(0u8..30, 1..120),
            ctx in proptest::collection::vec(0u8..30, 0..5),
            order in 1usize..5,
        ) {
            let text: String = words.iter().map(|w| format!("w{w} ")).collect();
            let m = trained(&text, order);
            let ctx: Vec<TokenId> = ctx
                .iter()
                .map(|w| m.vocab().id(&format!("w{w}")).unwrap_or(crate::tokenizer::UNK))
                .collect();
            let d = m.next_token_distribution(&ctx).unwrap();
            let direct: f64 = d.entries().iter().map(|&(_, p)| p).sum();
            prop_assert!((direct - 1.0).abs() < 1e-9);
            prop_assert!(d.entries().iter().filter(|&&(t, _)| t as usize >= RESERVED).all(|&(_, p)| p > 0.0));
        }
    }
}
