use std::sync::Arc;

use autophagy::corpus::{Corpus, Document};
use autophagy::model::{LanguageModel, ModelError, NgramConfig, NgramModel, ProbVector, SamplingConfig};
use autophagy::report::metric_chart;
use autophagy::selection::Strategy;
use autophagy::simulator::{
    compare_runs, persist_run, pretrain_reference, run_autophagy, split_holdout, RunRecord, RunTable,
    SimConfig, ENTROPY, GINI,
};
use autophagy::synthetic::{raw_corpus, CorpusSpec};
use autophagy::tokenizer::Vocabulary;
use autophagy::Error;

fn config() -> SimConfig {
    let mut c = SimConfig {
        prompt_len: 16,
        max_doc_len: 48,
        steps: 2,
        selection_size: 30,
        n_prompts: Some(40),
        repeats: 2,
        master_seed: 3,
        ..SimConfig::default()
    };
    c.eval.n_eval_docs = 40;
    c
}

fn lab() -> (Vec<Corpus>, NgramModel) {
    let raw = raw_corpus(&CorpusSpec::standard(200, 1), "human").unwrap();
    let vocab = Arc::new(Vocabulary::build(raw.texts(), 1).unwrap());
    let corpora = vec![raw.tokenize(&vocab).unwrap()];
    let split = split_holdout(&corpora, &config()).unwrap();
    let m0 = pretrain_reference(vocab, NgramConfig::default(), &split).unwrap();
    (corpora, m0)
}

fn run(config: &SimConfig) -> RunRecord {
    let (corpora, m0) = lab();
    run_autophagy(config, &corpora, None, &m0, None).unwrap()
}

#[test]
fn record_has_a_row_per_step_metric_and_repeat() {
    let c = config();
    let record = run(&c);
    assert!(record.failure.is_none());
    assert_eq!(record.repeats.len(), 2);
    for rep in &record.repeats {
        assert_eq!(rep.steps.len(), c.steps + 1);
        assert!(rep.steps[0].selection.is_none());
        assert!(rep.steps[0].deviations.values().all(|&d| d == 0.0));
        for step in &rep.steps[1..] {
            let sel = step.selection.as_ref().unwrap();
            assert_eq!(sel.selected, c.n_prompts.unwrap());
            let d = step.deviations[ENTROPY];
            let want = step.metrics[ENTROPY].mean - rep.steps[0].metrics[ENTROPY].mean;
            assert!((d - want).abs() < 1e-15);
        }
    }
    let per_metric = record.metric_rows().iter().filter(|r| r.metric == GINI).count();
    assert_eq!(per_metric, 2 * (c.steps + 1));
}

#[test]
fn thread_count_does_not_change_results() {
    let one = run(&SimConfig { threads: Some(1), strategy: Strategy::TopSurplexity, ..config() });
    let four = run(&SimConfig { threads: Some(4), strategy: Strategy::TopSurplexity, ..config() });
    assert_eq!(one.metric_rows(), four.metric_rows());
    assert_eq!(one.selection_rows(), four.selection_rows());
}

#[test]
fn different_seeds_differ() {
    let a = run(&config());
    let b = run(&SimConfig { master_seed: 4, ..config() });
    assert_ne!(a.metric_rows(), b.metric_rows());
}

#[test]
fn accumulation_grows_the_pool() {
    let flat = run(&SimConfig { strategy: Strategy::Mixed { human_fraction: 0.5 }, ..config() });
    let grown = run(&SimConfig { strategy: Strategy::Mixed { human_fraction: 0.5 }, accumulate: true, ..config() });
    let sizes = |r: &RunRecord| r.repeats[0].steps.iter().map(|s| s.pool_size).collect::<Vec<_>>();
    let (f, g) = (sizes(&flat), sizes(&grown));
    assert_eq!(f[1], f[2]);
    assert_eq!(g[1], f[1]);
    assert_eq!(g[2], g[1] + 40);
}

#[test]
fn persisted_run_reads_back() {
    let record = run(&config());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/ai-only");
    let paths = persist_run(&record, &out).unwrap();
    assert!(paths.metrics.is_file() && paths.timing.is_file());
    assert!(!out.join("FAILED").exists());
    let table = RunTable::load(&out).unwrap();
    assert_eq!(table, RunTable::from_record("ai-only", &record));
}

#[test]
fn comparison_requires_matching_k() {
    let a = run(&config());
    let b = run(&SimConfig { prompt_len: 12, ..config() });
    assert!(matches!(compare_runs(&[a, b]), Err(Error::MismatchedRuns { field: "k", .. })));
}

#[test]
fn chart_points_carry_the_csv_values() {
    let record = run(&config());
    let table = RunTable::from_record("base", &record);
    let svg = metric_chart(GINI, std::slice::from_ref(&table)).unwrap();
    let mut seen = 0;
    for tag in svg.split("<circle").skip(1) {
        let value = |name: &str| {
            let key = format!("{name}=\"");
            let start = tag.find(&key).unwrap() + key.len();
            tag[start..start + tag[start..].find('"').unwrap()].to_string()
        };
        let step: usize = value("data-step").parse().unwrap();
        let repeats: Vec<f64> = value("data-repeats").split(';').map(|v| v.parse().unwrap()).collect();
        let rows: Vec<f64> = table
            .metrics
            .iter()
            .filter(|r| r.metric == GINI && r.step == step)
            .map(|r| r.value)
            .collect();
        assert_eq!(repeats, rows);
        let mean: f64 = value("data-value").parse().unwrap();
        assert_eq!(mean, record.mean_at(GINI, step).unwrap());
        seen += 1;
    }
    assert_eq!(seen, config().steps + 1);
}

/// Reference model whose fine-tuning always fails.
#[derive(Clone)]
struct Brittle(NgramModel);

impl LanguageModel for Brittle {
    fn next_token_distribution(&self, context: &[u32]) -> Result<ProbVector, ModelError> {
        self.0.next_token_distribution(context)
    }
    fn generate_continuation(&self, prompt: &[u32], n: usize, s: &SamplingConfig) -> Result<Vec<u32>, ModelError> {
        self.0.generate_continuation(prompt, n, s)
    }
    fn fine_tune(&mut self, _: &[Document], _: f64) -> Result<(), ModelError> {
        Err(ModelError::Unsupported("fine-tuning"))
    }
}

#[test]
fn failure_keeps_completed_steps_and_marks_the_run() {
    let (corpora, m0) = lab();
    let record = run_autophagy(&config(), &corpora, None, &Brittle(m0), None).unwrap();
    let reason = record.failure.clone().unwrap();
    assert!(reason.starts_with("repeat 0"), "{reason}");
    assert_eq!(record.repeats.len(), 1);
    assert_eq!(record.repeats[0].steps.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    persist_run(&record, dir.path()).unwrap();
    let marker = std::fs::read_to_string(dir.path().join("FAILED")).unwrap();
    assert!(marker.contains("repeat 0"));
}
