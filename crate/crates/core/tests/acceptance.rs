//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use autophagy::corpus::{Corpus, Document, Origin};
use autophagy::metrics::{
    ci_accuracy, collapsed, gini, linguistic_entropy, surplexity, CandidateScoring, CiItem,
};
use autophagy::model::{
    LanguageModel, ModelError, NgramConfig, NgramModel, ProbVector, SamplingConfig,
};
use autophagy::report::selection_chart;
use autophagy::selection::Strategy;
use autophagy::simulator::{
    pretrain_reference, run_autophagy, split_holdout, RunRecord, RunTable, SimConfig, COLLAPSED,
    ENTROPY, GINI,
};
use autophagy::synthetic::{raw_corpus, CorpusSpec};
use autophagy::tokenizer::Vocabulary;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, what: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what)
    }
}

// ---- criterion 1 ----

fn double_sum_gini(q: &[f64]) -> f64 {
    let n = q.len() as f64;
    let mut num = 0.0;
    for a in q {
        for b in q {
            num += (a - b).abs();
        }
    }
    num / (2.0 * n * q.iter().sum::<f64>())
}

fn metric_oracles() -> Outcome {
    let g = gini(&[0.01; 100]).map_err(|e| e.to_string())?;
    check(g == 0.0, format!("gini(uniform) = {g}"))?;
    let mut one_hot = vec![0.0; 100];
    one_hot[42] = 1.0;
    let g = gini(&one_hot).map_err(|e| e.to_string())?;
    check(g == 0.99, format!("gini(one-hot) = {g}"))?;
    let mut halves = vec![0.0; 100];
    halves[0] = 0.5;
    halves[1] = 0.5;
    let g = gini(&halves).map_err(|e| e.to_string())?;
    check((g - 0.98).abs() < 1e-12, format!("gini(halves) = {g}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for i in 0..1000 {
        let n = rng.gen_range(1..=100);
        let raw: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen::<f64>().powi(3) })
            .collect();
        let total: f64 = raw.iter().sum::<f64>() + 1e-3;
        // Truncated mass, as a top-n vector would have.
        let mass = rng.gen_range(0.3..=1.0);
        let q: Vec<f64> = raw.iter().map(|v| (v + 1e-3 / n as f64) / total * mass).collect();
        let got = gini(&q).map_err(|e| e.to_string())?;
        let want = double_sum_gini(&q);
        worst = worst.max((got - want).abs());
        check((got - want).abs() < 1e-12, format!("random vector {i}: {got} vs {want}"))?;
    }

    let h = linguistic_entropy(&[9; 50]).map_err(|e| e.to_string())?;
    check(h == 0.0, format!("entropy(identical) = {h}"))?;
    let distinct: Vec<u32> = (3..103).collect();
    let h = linguistic_entropy(&distinct).map_err(|e| e.to_string())?;
    check((h - 1.0).abs() < 1e-12, format!("entropy(distinct) = {h}"))?;

    check(!collapsed(&[0.99, 0.01], 0.99), "0.99 counted as collapsed".into())?;
    check(collapsed(&[0.990_000_000_001, 0.009_999_999_999], 0.99), "just above tau not collapsed".into())?;
    Ok(format!("max |gini - double sum| = {worst:.1e}"))
}

// ---- criterion 2 ----

struct Constant(f64);

impl LanguageModel for Constant {
    fn next_token_distribution(&self, _: &[u32]) -> Result<ProbVector, ModelError> {
        ProbVector::full(vec![(3, self.0), (4, 1.0 - self.0)])
    }
    fn generate_continuation(&self, _: &[u32], _: usize, _: &SamplingConfig) -> Result<Vec<u32>, ModelError> {
        Ok(Vec::new())
    }
    fn fine_tune(&mut self, _: &[Document], _: f64) -> Result<(), ModelError> {
        Ok(())
    }
}

/// Surplexity from the product of full next-token distribution lookups.
fn product_form(model: &NgramModel, tokens: &[u32]) -> f64 {
    let mut product = 1.0;
    for i in 0..tokens.len() {
        let q = model.next_token_distribution(&tokens[..i]).unwrap();
        product *= q.get(tokens[i]);
    }
    product.powf(-1.0 / tokens.len() as f64)
}

fn surplexity_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut pairs = 0;
    let mut worst = 0f64;
    while pairs < 500 {
        let words = rng.gen_range(3..25);
        let lines: Vec<String> = (0..rng.gen_range(2..8))
            .map(|_| {
                (0..rng.gen_range(3..30))
                    .map(|_| format!("w{}", rng.gen_range(0..words)))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let vocab = Arc::new(Vocabulary::build(lines.iter(), 1).map_err(|e| e.to_string())?);
        let config = NgramConfig {
            order: rng.gen_range(1..=4),
            ..NgramConfig::default()
        };
        let mut model = NgramModel::new(vocab.clone(), config).map_err(|e| e.to_string())?;
        let docs: Vec<Document> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| Document::new(format!("d{i}"), vocab.tokenize(l), Origin::Human, "r").unwrap())
            .collect();
        model.fine_tune(&docs, rng.gen_range(0.5..3.0)).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let len = rng.gen_range(1..40);
            let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(3..vocab.len() as u32)).collect();
            let a = surplexity(&model, &ids).map_err(|e| e.to_string())?;
            let b = product_form(&model, &ids);
            worst = worst.max((a - b).abs());
            check((a - b).abs() < 1e-9, format!("pair {pairs}: {a} vs {b}"))?;
            pairs += 1;
        }
    }

    let s = surplexity(&Constant(0.5), &[3, 4, 3, 3, 4, 4, 3]).map_err(|e| e.to_string())?;
    check(s == 2.0, format!("constant 0.5 gives {s}"))?;

    let vocab = Arc::new(Vocabulary::build(["a b c d e f g h i j k l m"], 1).map_err(|e| e.to_string())?);
    let untrained = NgramModel::new(vocab.clone(), NgramConfig::default()).map_err(|e| e.to_string())?;
    let s = surplexity(&untrained, &vocab.tokenize("a c e g a b")).map_err(|e| e.to_string())?;
    let words = vocab.word_count() as f64;
    check((s - words).abs() < 1e-9, format!("untrained gives {s}, expected {words}"))?;
    Ok(format!("500 pairs, max gap {worst:.1e}"))
}

// ---- simulation criteria 3-6 ----

struct Lab {
    corpora: Vec<Corpus>,
    m0: NgramModel,
}

fn base_config() -> SimConfig {
    let mut c = SimConfig {
        prompt_len: 64,
        max_doc_len: 128,
        steps: 10,
        repeats: 3,
        master_seed: 2024,
        ..SimConfig::default()
    };
    c.eval.n_eval_docs = 200;
    c
}

fn lab() -> Result<Lab, String> {
    let raw = raw_corpus(&CorpusSpec::standard(1000, 7), "human").map_err(|e| e.to_string())?;
    let vocab = Arc::new(Vocabulary::build(raw.texts(), 1).map_err(|e| e.to_string())?);
    let corpora = vec![raw.tokenize(&vocab).map_err(|e| e.to_string())?];
    let split = split_holdout(&corpora, &base_config()).map_err(|e| e.to_string())?;
    let m0 = pretrain_reference(vocab, NgramConfig::default(), &split).map_err(|e| e.to_string())?;
    Ok(Lab { corpora, m0 })
}

fn run(lab: &Lab, config: &SimConfig) -> Result<RunRecord, String> {
    let record = run_autophagy(config, &lab.corpora, None, &lab.m0, None).map_err(|e| e.to_string())?;
    match &record.failure {
        Some(f) => Err(f.clone()),
        None => Ok(record),
    }
}

fn at(record: &RunRecord, metric: &str, step: usize) -> f64 {
    record.mean_at(metric, step).unwrap_or(f64::NAN)
}

fn collapse_direction(ai64: &RunRecord) -> Outcome {
    let t = ai64.config.steps;
    for rep in &ai64.repeats {
        let (first, last) = (&rep.steps[0], &rep.steps[t]);
        for (metric, label) in [(ENTROPY, "H"), (COLLAPSED, "collapsed %"), (GINI, "Gini")] {
            let (a, b) = (first.metrics[metric].mean, last.metrics[metric].mean);
            let ok = if metric == ENTROPY { b < a } else { b > a };
            check(ok, format!("repeat {}: {label} {a:.4} -> {b:.4}", rep.repeat))?;
        }
    }
    Ok(format!(
        "H {:.4} -> {:.4}, collapsed {:.2} -> {:.2}, Gini {:.4} -> {:.4}",
        at(ai64, ENTROPY, 0),
        at(ai64, ENTROPY, t),
        at(ai64, COLLAPSED, 0),
        at(ai64, COLLAPSED, t),
        at(ai64, GINI, 0),
        at(ai64, GINI, t)
    ))
}

fn k_sweep(lab: &Lab, ai64: &RunRecord) -> Outcome {
    let mut values = BTreeMap::new();
    for k in [32, 96] {
        let config = SimConfig {
            prompt_len: k,
            ..base_config()
        };
        values.insert(k, at(&run(lab, &config)?, COLLAPSED, config.steps));
    }
    values.insert(64, at(ai64, COLLAPSED, ai64.config.steps));
    let (c32, c64, c96) = (values[&32], values[&64], values[&96]);
    let summary = format!("collapsed % k=32 {c32:.2}, k=64 {c64:.2}, k=96 {c96:.2}");
    check(c32 + 1.0 >= c64 && c64 + 1.0 >= c96, summary.clone())?;
    Ok(summary)
}

fn mitigation(lab: &Lab, ai64: &RunRecord) -> Result<(String, RunRecord), String> {
    let mut records = BTreeMap::new();
    for strategy in [Strategy::TopSurplexity, Strategy::RandomHuman, Strategy::TopEntropy] {
        let config = SimConfig {
            strategy,
            selection_size: 400,
            ..base_config()
        };
        records.insert(strategy.to_string(), run(lab, &config)?);
    }
    let t = ai64.config.steps;
    let top = &records["top-surplexity"];
    let human = &records["random-human"];
    let (h_top, h_ai) = (at(top, ENTROPY, t), at(ai64, ENTROPY, t));
    let (c_top, c_human) = (at(top, COLLAPSED, t), at(human, COLLAPSED, t));
    let (g_top, g_ai) = (at(top, GINI, t), at(ai64, GINI, t));
    let summary = format!(
        "H top-surplexity {h_top:.4} vs ai-only {h_ai:.4}; collapsed {c_top:.2} vs random-human {c_human:.2}; Gini {g_top:.4} vs {g_ai:.4}; top-entropy H {:.4}",
        at(&records["top-entropy"], ENTROPY, t)
    );
    check(h_top > h_ai && c_top <= c_human + 2.0 && g_top <= g_ai, summary.clone())?;
    Ok((summary, records.remove("top-surplexity").unwrap()))
}

fn attr<'a>(tag: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = tag.find(&key)? + key.len();
    let len = tag[start..].find('"')?;
    Some(&tag[start..start + len])
}

fn provenance(top: &RunRecord) -> Outcome {
    let z = top.config.selection_size;
    let mut expected: BTreeMap<(usize, usize, String), usize> = BTreeMap::new();
    for rep in &top.repeats {
        for step in &rep.steps[1..] {
            let sel = step
                .selection
                .as_ref()
                .ok_or(format!("repeat {} step {} has no selection report", rep.repeat, step.step))?;
            let total: usize = sel.composition.iter().map(|r| r.count).sum();
            check(total == z, format!("repeat {} step {}: {total} != {z}", rep.repeat, step.step))?;
            for row in &sel.composition {
                *expected
                    .entry((rep.repeat, step.step, format!("{}|{}", row.source_label, row.origin)))
                    .or_default() += row.count;
            }
        }
    }
    let svg = selection_chart(&RunTable::from_record("top-surplexity", top));
    let mut parsed: BTreeMap<(usize, usize, String), usize> = BTreeMap::new();
    for tag in svg.split("<rect").skip(1) {
        let tag = &tag[..tag.find("/>").unwrap_or(tag.len())];
        let (Some(r), Some(s), Some(c), Some(n)) = (
            attr(tag, "data-repeat"),
            attr(tag, "data-step"),
            attr(tag, "data-category"),
            attr(tag, "data-count"),
        ) else {
            continue;
        };
        let key = (
            r.parse().map_err(|_| format!("bad repeat {r}"))?,
            s.parse().map_err(|_| format!("bad step {s}"))?,
            c.to_string(),
        );
        *parsed.entry(key).or_default() += n.parse::<usize>().map_err(|_| format!("bad count {n}"))?;
    }
    check(parsed == expected, format!("svg gives {} segments, record {}", parsed.len(), expected.len()))?;
    Ok(format!("{} segments over {} bars, each bar sums to {z}", parsed.len(), top.repeats.len() * top.config.steps))
}

// ---- CLI criteria 7 and 9 ----

fn cli(args: &[&str], out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let output = Command::new(env!("CARGO_BIN_EXE_autophagy"))
        .arg("simulate")
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        output.status.success(),
        format!("exit {:?}: {}", output.status.code(), String::from_utf8_lossy(&output.stderr)),
    )?;
    Ok(elapsed)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "--T", "3", "--k", "16", "--L", "48", "--n-prompts", "60", "--z", "40",
        "--strategy", "top-surplexity", "--synthetic-docs", "400", "--n-eval", "50",
        "--repeats", "2", "--seed", "99",
    ];
    let mut files = Vec::new();
    for threads in ["1", "4", "1"] {
        let out = dir.path().join(format!("run{}", files.len()));
        let mut with_threads = args.to_vec();
        with_threads.extend(["--threads", threads]);
        cli(&with_threads, &out)?;
        files.push(std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?);
    }
    check(files[0] == files[1], "metrics.csv differs between 1 and 4 threads".into())?;
    check(files[0] == files[2], "metrics.csv differs between reruns".into())?;
    Ok(format!("3 runs, {} identical bytes", files[0].len()))
}

fn smoke() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("smoke");
    let elapsed = cli(&["--T", "1", "--n-prompts", "10", "--z", "10"], &out)?;
    for f in ["config.json", "metrics.csv", "selection.csv", "record.json", "timing.csv"] {
        check(out.join(f).is_file(), format!("{f} missing"))?;
    }
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("{elapsed:.2?}"))
}

// ---- criterion 8 ----

fn ci_scoring(lab: &Lab) -> Outcome {
    let docs: Vec<&Document> = lab.corpora.iter().flat_map(|c| &c.documents).collect();
    let mut trained = NgramModel::new(lab.m0.vocab().clone(), NgramConfig::default()).map_err(|e| e.to_string())?;
    let owned: Vec<Document> = docs.iter().map(|d| (*d).clone()).collect();
    trained.fine_tune(&owned, 1.0).map_err(|e| e.to_string())?;
    let untrained = NgramModel::new(lab.m0.vocab().clone(), NgramConfig::default()).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (prompt_len, cont_len) = (32, 8);
    let mut items = Vec::new();
    for d in docs.choose_multiple(&mut rng, 100) {
        let truth = d.tokens[prompt_len..prompt_len + cont_len].to_vec();
        let correct = rng.gen_range(0..4);
        let mut candidates: [Vec<u32>; 4] = Default::default();
        for (i, c) in candidates.iter_mut().enumerate() {
            *c = if i == correct {
                truth.clone()
            } else {
                let other = docs.choose(&mut rng).unwrap();
                let start = rng.gen_range(0..other.len() - cont_len);
                let mut toks = other.tokens[start..start + cont_len].to_vec();
                toks.shuffle(&mut rng);
                toks
            };
        }
        items.push(CiItem::new(d.tokens[..prompt_len].to_vec(), candidates, correct).map_err(|e| e.to_string())?);
    }
    let good = ci_accuracy(&trained, &items, CandidateScoring::LengthNormalized)
        .map_err(|e| e.to_string())?
        .accuracy;
    let flat = ci_accuracy(&untrained, &items, CandidateScoring::LengthNormalized)
        .map_err(|e| e.to_string())?
        .accuracy;
    let expected = items.iter().filter(|i| i.correct_index == 0).count() as f64 / items.len() as f64;
    let summary = format!("trained {good:.2}, untrained {flat:.2} vs tie-rule expectation {expected:.2}");
    check(good >= 0.75 && (flat - expected).abs() <= 0.1, summary.clone())?;
    Ok(summary)
}

fn report(n: usize, name: &str, started: Instant, limit: Duration, outcome: Outcome, failures: &mut usize) {
    let elapsed = started.elapsed();
    let outcome = outcome.and_then(|s| {
        if elapsed > limit {
            Err(format!("{s}; took {elapsed:.1?}, limit {limit:?}"))
        } else {
            Ok(s)
        }
    });
    match outcome {
        Ok(s) => println!("PASS criterion {n} {name}: {s} ({elapsed:.1?})"),
        Err(e) => {
            *failures += 1;
            println!("FAIL criterion {n} {name}: {e} ({elapsed:.1?})");
        }
    }
}

fn main() -> ExitCode {
    let mut failures = 0;
    let secs = Duration::from_secs;

    let t = Instant::now();
    report(1, "metric oracles", t, secs(5), metric_oracles(), &mut failures);
    let t = Instant::now();
    report(2, "surplexity forms", t, secs(10), surplexity_forms(), &mut failures);

    let t = Instant::now();
    let lab = lab();
    let ai64 = lab.as_ref().map_err(Clone::clone).and_then(|l| run(l, &base_config()));
    report(3, "collapse direction", t, secs(300), ai64.clone().and_then(|r| collapse_direction(&r)), &mut failures);

    let t = Instant::now();
    let sweep = match (&lab, &ai64) {
        (Ok(l), Ok(r)) => k_sweep(l, r),
        _ => Err("reference run unavailable".into()),
    };
    report(4, "k-sweep ordering", t, secs(900), sweep, &mut failures);

    let t = Instant::now();
    let mitigated = match (&lab, &ai64) {
        (Ok(l), Ok(r)) => mitigation(l, r),
        _ => Err("reference run unavailable".into()),
    };
    report(5, "mitigation ordering", t, secs(1200), mitigated.as_ref().map(|m| m.0.clone()).map_err(Clone::clone), &mut failures);

    let t = Instant::now();
    let prov = match &mitigated {
        Ok((_, top)) => provenance(top),
        Err(e) => Err(format!("top-surplexity run unavailable: {e}")),
    };
    report(6, "selection provenance", t, Duration::MAX, prov, &mut failures);

    let t = Instant::now();
    report(7, "determinism", t, Duration::MAX, determinism(), &mut failures);

    let t = Instant::now();
    let ci = lab.as_ref().map_err(Clone::clone).and_then(ci_scoring);
    report(8, "inference scoring", t, Duration::MAX, ci, &mut failures);

    let t = Instant::now();
    report(9, "end-to-end smoke", t, Duration::MAX, smoke(), &mut failures);

    if failures == 0 {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
