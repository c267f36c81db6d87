//! The autophagy loop: generate from fixed prompts, select, fine-tune,
//! evaluate, repeat.

mod config;
mod record;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

pub use config::{EvalConfig, SimConfig};
pub use record::{
    compare_runs, compare_tables, persist_run, Comparison, MetricRow, PersistedPaths, RepeatRecord,
    RunRecord, RunTable, SelectionRow, Series, SeriesPoint, StepRecord, CI_ACCURACY, COLLAPSED,
    ENTROPY, GINI, SURPLEXITY,
};

use crate::corpus::{make_prompts, Corpus, Document, Origin, PromptSet};
use crate::error::{Error, Result};
use crate::metrics::{self, CiItem, MetricSample};
use crate::model::{LanguageModel, NgramConfig, NgramModel};
use crate::selection::{select_training_set, Strategy};
use crate::seed;
use crate::tokenizer::Vocabulary;

/// Human documents split into a training side and a held-out evaluation side.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Vec<Document>,
    pub eval: Vec<Document>,
}

/// Carves the evaluation holdout: the `n_eval_docs` eligible documents
/// (at least `prompt_tokens` long) with the greatest ids. Everything else
/// is training data.
pub fn split_holdout(corpora: &[Corpus], config: &SimConfig) -> Result<DataSplit> {
    let mut docs: Vec<&Document> = corpora.iter().flat_map(|c| &c.documents).collect();
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("no human documents".into()));
    }
    let mut seen = HashSet::new();
    if let Some(d) = docs.iter().find(|d| !seen.insert(d.id.as_str())) {
        return Err(Error::InvalidArgument(format!("duplicate document id {}", d.id)));
    }
    let need = config.eval.n_eval_docs;
    let min_len = config.eval.next_token.prompt_tokens;
    let mut eligible: Vec<&str> = docs
        .iter()
        .filter(|d| d.len() >= min_len)
        .map(|d| d.id.as_str())
        .collect();
    if eligible.len() < need {
        return Err(Error::Config(format!(
            "{need} held-out evaluation documents requested but only {} have at least {min_len} tokens",
            eligible.len()
        )));
    }
    eligible.sort_unstable();
    let held: HashSet<String> = eligible[eligible.len() - need..]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (mut eval, mut train) = (Vec::new(), Vec::new());
    for d in docs.drain(..) {
        if held.contains(&d.id) {
            eval.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    Ok(DataSplit { train, eval })
}

/// The reference `M_0`: an n-gram model trained once on the training side.
pub fn pretrain_reference(
    vocab: Arc<Vocabulary>,
    config: NgramConfig,
    split: &DataSplit,
) -> Result<NgramModel> {
    let mut model = NgramModel::new(vocab, config)?;
    if !split.train.is_empty() {
        model.fine_tune(&split.train, 1.0)?;
    }
    Ok(model)
}

struct Setup {
    split: DataSplit,
    eval_ids: HashSet<String>,
    prompts: PromptSet,
    human_pool: Vec<Document>,
}

fn setup(config: &SimConfig, corpora: &[Corpus]) -> Result<Setup> {
    config.validate()?;
    let split = split_holdout(corpora, config)?;
    let mut prompts = make_prompts(&split.train, config.prompt_len)?;
    if let Some(n) = config.n_prompts {
        if prompts.len() < n {
            return Err(Error::Config(format!(
                "{n} prompts requested but only {} training documents have at least {} tokens",
                prompts.len(),
                config.prompt_len
            )));
        }
        prompts.prompts.truncate(n);
    }
    let human_pool = split
        .train
        .iter()
        .map(|d| d.truncated(config.max_doc_len))
        .collect();
    Ok(Setup {
        eval_ids: split.eval.iter().map(|d| d.id.clone()).collect(),
        split,
        prompts,
        human_pool,
    })
}

fn generate<M: LanguageModel>(
    model: &M,
    config: &SimConfig,
    prompts: &PromptSet,
    repeat: usize,
    step: usize,
) -> Result<Vec<Document>> {
    let budget = config.continuation_len();
    prompts
        .prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let sampling = config.sampling.clone().with_seed(seed::derive(
                config.master_seed,
                &[seed::stream::GENERATION, repeat as u64, step as u64, i as u64],
            ));
            let cont = model.generate_continuation(&p.tokens, budget, &sampling)?;
            let mut tokens = p.tokens.to_vec();
            tokens.extend(cont);
            if tokens.len() > config.max_doc_len || tokens[..p.tokens.len()] != p.tokens[..] {
                return Err(Error::Invariant(format!(
                    "generated document {i} at step {step} breaks its prompt or length bound"
                )));
            }
            Document::new(
                format!("ai{step}:{}", p.source_id),
                tokens,
                Origin::Ai { step: step as u32 },
                p.source_label.clone(),
            )
        })
        .collect()
}

fn evaluate<M: LanguageModel>(
    model: &M,
    config: &SimConfig,
    generated: &[Document],
    eval_docs: &[Document],
    ci: Option<&[CiItem]>,
) -> Result<BTreeMap<String, MetricSample>> {
    let mut out = BTreeMap::new();
    let entropy = generated
        .par_iter()
        .map(metrics::document_entropy)
        .collect::<Result<Vec<f64>>>()?;
    out.insert(ENTROPY.to_string(), MetricSample::new(ENTROPY, entropy));
    let next = metrics::eval_next_token(model, eval_docs, &config.eval.next_token)?;
    out.insert(GINI.to_string(), MetricSample::new(GINI, next.gini));
    out.insert(COLLAPSED.to_string(), MetricSample::new(COLLAPSED, next.collapsed));
    let surp = metrics::surplexity_scores(model, generated)?;
    out.insert(SURPLEXITY.to_string(), MetricSample::new(SURPLEXITY, surp));
    if let Some(items) = ci {
        let outcome = metrics::ci_accuracy(model, items, config.eval.ci_scoring)?;
        out.insert(CI_ACCURACY.to_string(), MetricSample::new(CI_ACCURACY, outcome.hits));
    }
    Ok(out)
}

fn deviations(
    metrics: &BTreeMap<String, MetricSample>,
    base: &BTreeMap<String, MetricSample>,
) -> BTreeMap<String, f64> {
    metrics
        .iter()
        .filter_map(|(k, m)| base.get(k).map(|b| (k.clone(), m.mean - b.mean)))
        .collect()
}

fn snapshot<M: LanguageModel>(
    model: &M,
    dir: Option<&Path>,
    repeat: usize,
    step: usize,
) -> Result<Option<std::path::PathBuf>> {
    let Some(dir) = dir else { return Ok(None) };
    let step_dir = dir.join(format!("step_{step}"));
    std::fs::create_dir_all(&step_dir).map_err(|e| Error::io(&step_dir, e))?;
    let path = step_dir.join(format!("repeat_{repeat}.json"));
    model.save_snapshot(&path)?;
    Ok(Some(path))
}

/// One repeat of the loop. Completed steps are pushed to `steps` as they
/// finish so a failure still leaves the partial series.
fn run_repeat<M: LanguageModel + Clone>(
    config: &SimConfig,
    setup: &Setup,
    ci: Option<&[CiItem]>,
    m0: &M,
    snapshot_dir: Option<&Path>,
    repeat: usize,
    steps: &mut Vec<StepRecord>,
) -> Result<()> {
    let mut model = m0.clone();
    let initial_ids: Vec<&str> = setup.prompts.prompts.iter().map(|p| p.source_id.as_str()).collect();

    let started = Instant::now();
    let mut generated = generate(&model, config, &setup.prompts, repeat, 0)?;
    let base = evaluate(&model, config, &generated, &setup.split.eval, ci)?;
    steps.push(StepRecord {
        step: 0,
        deviations: deviations(&base, &base),
        metrics: base.clone(),
        selection: None,
        pool_size: 0,
        wall_clock_ms: started.elapsed().as_millis(),
        snapshot: snapshot(&model, snapshot_dir, repeat, 0)?,
    });

    let mut history: Vec<Document> = Vec::new();
    for step in 1..=config.steps {
        let started = Instant::now();
        if setup
            .prompts
            .prompts
            .iter()
            .map(|p| p.source_id.as_str())
            .ne(initial_ids.iter().copied())
        {
            return Err(Error::Invariant("prompt set changed during the run".into()));
        }
        let mut pool = setup.human_pool.clone();
        if config.accumulate {
            history.append(&mut generated);
            pool.extend(history.iter().cloned());
        } else {
            pool.append(&mut generated);
        }
        let scorer: Option<&dyn LanguageModel> = match config.strategy {
            Strategy::TopSurplexity if config.score_against_initial => Some(m0),
            Strategy::TopSurplexity => Some(&model),
            _ => None,
        };
        let selection = select_training_set(
            &pool,
            config.strategy,
            scorer,
            config.selection_size,
            seed::derive(
                config.master_seed,
                &[seed::stream::SELECTION, repeat as u64, step as u64],
            ),
        )?;
        if let Some(d) = selection.documents.iter().find(|d| setup.eval_ids.contains(&d.id)) {
            return Err(Error::Invariant(format!(
                "held-out document {} selected for fine-tuning",
                d.id
            )));
        }
        model.fine_tune(&selection.documents, config.fine_tune_weight)?;

        generated = generate(&model, config, &setup.prompts, repeat, step)?;
        let metrics = evaluate(&model, config, &generated, &setup.split.eval, ci)?;
        info!(
            "repeat {repeat} step {step}: H={:.4} gini={:.4} collapsed={:.1}%",
            metrics[ENTROPY].mean, metrics[GINI].mean, metrics[COLLAPSED].mean
        );
        steps.push(StepRecord {
            step,
            deviations: deviations(&metrics, &base),
            metrics,
            selection: Some(selection.report),
            pool_size: pool.len(),
            wall_clock_ms: started.elapsed().as_millis(),
            snapshot: snapshot(&model, snapshot_dir, repeat, step)?,
        });
    }
    Ok(())
}

/// Runs `config.repeats` independent loops from `m0`.
///
/// Configuration and data problems are returned as errors before any
/// generation. A failure inside the loop (typically a remote backend giving
/// up) ends the run early: the record keeps the steps completed so far and
/// carries the reason in `failure`.
///
/// Step `j` metrics describe `M_j`: entropy and surplexity are taken over the
/// documents `M_j` generates from the fixed prompts, which also form the AI
/// share of the pool for step `j + 1`. Gini and collapse use the held-out
/// human documents.
pub fn run_autophagy<M: LanguageModel + Clone>(
    config: &SimConfig,
    corpora: &[Corpus],
    ci: Option<&[CiItem]>,
    m0: &M,
    snapshot_dir: Option<&Path>,
) -> Result<RunRecord> {
    let setup = setup(config, corpora)?;
    if let Some([]) = ci {
        return Err(Error::Config("empty inference item set".into()));
    }
    info!(
        "{} prompts, {} held-out documents, {} human pool documents",
        setup.prompts.len(),
        setup.split.eval.len(),
        setup.human_pool.len()
    );
    let body = || {
        let mut record = RunRecord {
            config: config.clone(),
            repeats: Vec::with_capacity(config.repeats),
            failure: None,
        };
        for repeat in 0..config.repeats {
            let mut steps = Vec::with_capacity(config.steps + 1);
            let outcome = run_repeat(config, &setup, ci, m0, snapshot_dir, repeat, &mut steps);
            record.repeats.push(RepeatRecord {
                repeat,
                seed: seed::derive(config.master_seed, &[repeat as u64]),
                steps,
            });
            if let Err(e) = outcome {
                warn!("repeat {repeat} aborted: {e}");
                record.failure = Some(format!("repeat {repeat}: {e}"));
                break;
            }
        }
        record
    };
    Ok(match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    })
}
