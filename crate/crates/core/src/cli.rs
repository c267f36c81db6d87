//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
//! configuration errors.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use crate::corpus::{write_jsonl, Corpus, RawCorpus};
use crate::error::Error;
use crate::metrics::{self, load_ci_items, CandidateScoring, CiItem, MetricSample, NextTokenEvalConfig};
use crate::model::{NgramConfig, NgramModel, RemoteConfig, RemoteModel};
use crate::report;
use crate::selection::{rank, Strategy};
use crate::simulator::{
    persist_run, pretrain_reference, run_autophagy, split_holdout, RunRecord, RunTable, SimConfig,
    COLLAPSED, ENTROPY, GINI, SURPLEXITY, CI_ACCURACY,
};
use crate::synthetic::{self, CorpusSpec};
use crate::tokenizer::Vocabulary;

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) | Error::NoEligiblePrompts { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "autophagy", version, about = "Self-consuming training loop simulator")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the generate / select / fine-tune / evaluate loop.
    Simulate(Box<SimulateArgs>),
    /// Per-document metric values for a corpus file.
    Metrics(MetricsArgs),
    /// Keep the top-z documents of a corpus by surplexity or entropy.
    Filter(FilterArgs),
    /// SVG charts and a summary table from run directories.
    Report(ReportArgs),
    /// Write the built-in synthetic corpus as JSONL.
    Synth(SynthArgs),
}

/// Simulation settings. Every field is optional so that a config file can
/// fill whatever the command line leaves out.
#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation steps.
    #[arg(long = "T")]
    pub steps: Option<usize>,
    /// Prompt length in tokens.
    #[arg(long = "k")]
    pub prompt_len: Option<usize>,
    /// Maximum document length in tokens.
    #[arg(long = "L")]
    pub max_doc_len: Option<usize>,
    /// Documents selected per step.
    #[arg(long = "z")]
    pub selection_size: Option<usize>,
    #[arg(long)]
    pub n_prompts: Option<usize>,
    /// ai-only, human-only, mixed[:f], random-human, random-ai, top-entropy, top-surplexity.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Human corpus as PATH or PATH:LABEL; repeatable. Without it a
    /// synthetic corpus is generated.
    #[arg(long)]
    pub corpus: Vec<String>,
    /// Documents in the built-in synthetic corpus.
    #[arg(long)]
    pub synthetic_docs: Option<usize>,
    /// Four-choice inference items (JSONL).
    #[arg(long)]
    pub ci_items: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Keep every past generation in the selection pool.
    #[arg(long)]
    pub accumulate: bool,
    /// Save a model snapshot after every step.
    #[arg(long)]
    pub snapshots: bool,
    /// Rank surplexity against the initial model.
    #[arg(long)]
    pub score_against_initial: bool,
    #[arg(long)]
    pub greedy: bool,
    #[arg(long)]
    pub fine_tune_weight: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub prompt_tokens: Option<usize>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// length-normalized or raw.
    #[arg(long)]
    pub ci_scoring: Option<String>,
    /// n-gram order of the reference model.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub backoff_lambda: Option<f64>,
    /// Minimum count for a word to enter the vocabulary.
    #[arg(long)]
    pub min_count: Option<u64>,
    /// Use a completion endpoint instead of the reference model.
    #[arg(long)]
    pub remote_url: Option<String>,
    #[arg(long)]
    pub remote_model: Option<String>,
}

macro_rules! config_keys {
    ($self:ident, $key:ident, $value:ident; $($name:literal => $field:ident),* $(,)?) => {
        match $key {
            $($name => $self.$field = Some(parse($key, $value)?),)*
            "corpus" => $self.corpus = $value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            "accumulate" => $self.accumulate = parse($key, $value)?,
            "snapshots" => $self.snapshots = parse($key, $value)?,
            "score_against_initial" => $self.score_against_initial = parse($key, $value)?,
            "greedy" => $self.greedy = parse($key, $value)?,
            other => return usage(format!("unknown configuration key `{other}`")),
        }
    };
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .or_else(|_| usage(format!("bad value {value:?} for `{key}`")))
}

impl SimulateArgs {
    fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        config_keys!(self, key, value;
            "T" => steps, "steps" => steps,
            "k" => prompt_len, "prompt_len" => prompt_len,
            "L" => max_doc_len, "max_doc_len" => max_doc_len,
            "z" => selection_size, "selection_size" => selection_size,
            "n_prompts" => n_prompts,
            "strategy" => strategy,
            "synthetic_docs" => synthetic_docs,
            "ci_items" => ci_items,
            "out" => out,
            "repeats" => repeats,
            "seed" => seed, "master_seed" => seed,
            "threads" => threads,
            "fine_tune_weight" => fine_tune_weight,
            "temperature" => temperature,
            "top_k" => top_k,
            "n_eval" => n_eval, "n_eval_docs" => n_eval,
            "prompt_tokens" => prompt_tokens,
            "top_n" => top_n,
            "tau" => tau,
            "ci_scoring" => ci_scoring,
            "order" => order,
            "alpha" => alpha,
            "backoff_lambda" => backoff_lambda,
            "min_count" => min_count,
            "remote_url" => remote_url,
            "remote_model" => remote_model,
        );
        Ok(())
    }

    /// Reads a flat `key = value` file. `#` and `;` start comments.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .or_else(|e| usage(format!("{}: {e}", path.display())))?;
        let mut out = SimulateArgs::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("{}:{}: expected key = value", path.display(), n + 1));
            };
            out.set(key.trim(), value.trim())
                .map_err(|e| match e {
                    CliError::Usage(m) => CliError::Usage(format!("{}:{}: {m}", path.display(), n + 1)),
                    other => other,
                })?;
        }
        Ok(out)
    }

    /// Fields set here win over `base`.
    pub fn over(self, base: SimulateArgs) -> SimulateArgs {
        macro_rules! pick {
            ($($f:ident),*) => {
                SimulateArgs {
                    config: self.config,
                    corpus: if self.corpus.is_empty() { base.corpus } else { self.corpus },
                    accumulate: self.accumulate || base.accumulate,
                    snapshots: self.snapshots || base.snapshots,
                    score_against_initial: self.score_against_initial || base.score_against_initial,
                    greedy: self.greedy || base.greedy,
                    $($f: self.$f.or(base.$f),)*
                }
            };
        }
        pick!(
            steps, prompt_len, max_doc_len, selection_size, n_prompts, strategy, synthetic_docs,
            ci_items, out, repeats, seed, threads, fine_tune_weight, temperature, top_k, n_eval,
            prompt_tokens, top_n, tau, ci_scoring, order, alpha, backoff_lambda, min_count,
            remote_url, remote_model
        )
    }

    pub fn sim_config(&self) -> CliResult<SimConfig> {
        let mut c = SimConfig::default();
        macro_rules! put {
            ($($src:ident => $($dst:ident).+),*) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        put!(
            steps => steps, prompt_len => prompt_len, max_doc_len => max_doc_len,
            selection_size => selection_size, repeats => repeats, seed => master_seed,
            fine_tune_weight => fine_tune_weight, temperature => sampling.temperature,
            top_k => sampling.top_k, n_eval => eval.n_eval_docs,
            prompt_tokens => eval.next_token.prompt_tokens, top_n => eval.next_token.top_n,
            tau => eval.next_token.tau
        );
        c.n_prompts = self.n_prompts;
        c.threads = self.threads;
        c.accumulate = self.accumulate;
        c.score_against_initial = self.score_against_initial;
        c.sampling.greedy = self.greedy;
        if let Some(s) = &self.strategy {
            c.strategy = s.parse::<Strategy>()?;
        }
        if let Some(s) = &self.ci_scoring {
            c.eval.ci_scoring = match s.as_str() {
                "length-normalized" | "normalized" => CandidateScoring::LengthNormalized,
                "raw" => CandidateScoring::Raw,
                other => return usage(format!("unknown ci scoring {other:?}")),
            };
        }
        c.validate()?;
        Ok(c)
    }

    fn ngram_config(&self) -> NgramConfig {
        let d = NgramConfig::default();
        NgramConfig {
            order: self.order.unwrap_or(d.order),
            alpha: self.alpha.unwrap_or(d.alpha),
            backoff_lambda: self.backoff_lambda.unwrap_or(d.backoff_lambda),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Entropy,
    Surplexity,
    Gini,
    Collapsed,
    Ci,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Corpus JSONL (`{"text": ...}` per line).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricName,
    /// Model snapshot, required for every metric except entropy.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Inference items, required for `ci`.
    #[arg(long)]
    pub ci_items: Option<PathBuf>,
    /// Write CSV here instead of TSV on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = metrics::DEFAULT_PROMPT_TOKENS)]
    pub prompt_tokens: usize,
    #[arg(long, default_value_t = metrics::DEFAULT_TOP_N)]
    pub top_n: usize,
    #[arg(long, default_value_t = metrics::DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FilterBy {
    Surplexity,
    Entropy,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub z: usize,
    #[arg(long, value_enum, default_value = "surplexity")]
    pub by: FilterBy,
    /// Output JSONL; scores go to `<out>.scores.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories written by `simulate`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub docs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(*args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Report(args) => cmd_report(args),
        Command::Synth(args) => {
            synthetic::write_corpus(&args.out, &CorpusSpec::standard(args.docs, args.seed))?;
            Ok(())
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.log)
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn corpus_arg(spec: &str) -> (PathBuf, String) {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "human".into())
    };
    match spec.rsplit_once(':') {
        Some((path, label)) if !label.is_empty() && !label.contains(['/', '\\']) => {
            (PathBuf::from(path), label.to_string())
        }
        _ => {
            let p = PathBuf::from(spec);
            let label = stem(&p);
            (p, label)
        }
    }
}

struct Inputs {
    vocab: Arc<Vocabulary>,
    corpora: Vec<Corpus>,
    synthetic: bool,
}

fn load_inputs(args: &SimulateArgs, config: &SimConfig) -> CliResult<Inputs> {
    let min_count = args.min_count.unwrap_or(1);
    let raws: Vec<RawCorpus> = if args.corpus.is_empty() {
        let docs = args.synthetic_docs.unwrap_or(2000);
        vec![synthetic::raw_corpus(&CorpusSpec::standard(docs, config.master_seed), "synthetic")?]
    } else {
        let mut labels = HashSet::new();
        let mut out = Vec::new();
        for spec in &args.corpus {
            let (path, label) = corpus_arg(spec);
            if !labels.insert(label.clone()) {
                return usage(format!("corpus label {label:?} used twice"));
            }
            out.push(RawCorpus::read(&path, &label)?);
        }
        out
    };
    let vocab = Arc::new(Vocabulary::build(raws.iter().flat_map(|r| r.texts()), min_count)?);
    let corpora = raws
        .iter()
        .map(|r| r.tokenize(&vocab))
        .collect::<crate::Result<Vec<_>>>()?;
    Ok(Inputs {
        vocab,
        corpora,
        synthetic: args.corpus.is_empty(),
    })
}

fn summary_line(repeat: usize, step: &crate::simulator::StepRecord) -> String {
    let m = |k: &str| step.metrics.get(k).map(|s| s.mean).unwrap_or(f64::NAN);
    let mut line = format!(
        "repeat {repeat} step {:>2}: H={:.4} gini={:.4} collapsed={:.2}% surplexity={:.3}",
        step.step,
        m(ENTROPY),
        m(GINI),
        m(COLLAPSED),
        m(SURPLEXITY)
    );
    if step.metrics.contains_key(CI_ACCURACY) {
        let _ = write!(line, " A_CI={:.3}", m(CI_ACCURACY));
    }
    if let Some(sel) = &step.selection {
        let _ = write!(line, " selected={} human={:.0}%", sel.selected, sel.human_share() * 100.0);
    }
    line
}

fn finish(record: &RunRecord, out: &Path) -> CliResult<()> {
    let paths = persist_run(record, out)?;
    for r in &record.repeats {
        for s in &r.steps {
            println!("{}", summary_line(r.repeat, s));
        }
    }
    println!("wrote {}", paths.metrics.display());
    match &record.failure {
        Some(reason) => Err(CliError::Runtime(format!("run aborted: {reason}"))),
        None => Ok(()),
    }
}

fn cmd_simulate(flags: SimulateArgs) -> CliResult<()> {
    let args = match &flags.config {
        Some(path) => flags.clone().over(SimulateArgs::from_file(path)?),
        None => flags,
    };
    let config = args.sim_config()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let inputs = load_inputs(&args, &config)?;
    let split = split_holdout(&inputs.corpora, &config)?;

    let ci: Option<Vec<CiItem>> = match &args.ci_items {
        Some(path) => Some(load_ci_items(path, &inputs.vocab)?),
        None if inputs.synthetic => {
            let items = synthetic::ci_items(&split.eval, config.eval.next_token.prompt_tokens, 8, config.master_seed);
            (!items.is_empty()).then_some(items)
        }
        None => None,
    };
    let snapshots = args.snapshots.then(|| out.join("snapshots"));

    let record = match &args.remote_url {
        Some(url) => {
            let remote = RemoteModel::new(
                RemoteConfig {
                    base_url: url.clone(),
                    model: args.remote_model.clone().unwrap_or_else(|| RemoteConfig::default().model),
                    ..RemoteConfig::default()
                },
                inputs.vocab.clone(),
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
            run_autophagy(&config, &inputs.corpora, ci.as_deref(), &remote, snapshots.as_deref())?
        }
        None => {
            let m0 = pretrain_reference(inputs.vocab.clone(), args.ngram_config(), &split)?;
            run_autophagy(&config, &inputs.corpora, ci.as_deref(), &m0, snapshots.as_deref())?
        }
    };
    finish(&record, &out)
}

fn load_model(path: Option<&Path>, what: &str) -> CliResult<NgramModel> {
    match path {
        Some(p) => Ok(NgramModel::load(p)?),
        None => usage(format!("{what} needs --model")),
    }
}

fn read_input(path: &Path, vocab: Option<&Vocabulary>) -> CliResult<(Arc<Vocabulary>, Corpus)> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    let raw = RawCorpus::read(path, &label)?;
    let vocab = match vocab {
        Some(v) => Arc::new(v.clone()),
        None => Arc::new(Vocabulary::build(raw.texts(), 1)?),
    };
    let corpus = raw.tokenize(&vocab)?;
    Ok((vocab, corpus))
}

fn cmd_metrics(args: MetricsArgs) -> CliResult<()> {
    let model = match args.metric {
        MetricName::Entropy => args.model.as_deref().map(NgramModel::load).transpose()?,
        other => Some(load_model(args.model.as_deref(), &format!("{other:?}").to_lowercase())?),
    };
    let (vocab, corpus) = read_input(&args.input, model.as_ref().map(|m| m.vocab().as_ref()))?;
    let docs = &corpus.documents;
    let eval_cfg = NextTokenEvalConfig {
        prompt_tokens: args.prompt_tokens,
        top_n: args.top_n,
        tau: args.tau,
    };
    let (ids, values): (Vec<String>, Vec<f64>) = match args.metric {
        MetricName::Entropy => {
            let v = docs.iter().map(metrics::document_entropy).collect::<crate::Result<Vec<_>>>()?;
            (docs.iter().map(|d| d.id.clone()).collect(), v)
        }
        MetricName::Surplexity => {
            let m = model.as_ref().expect("checked above");
            (docs.iter().map(|d| d.id.clone()).collect(), metrics::surplexity_scores(m, docs)?)
        }
        MetricName::Gini | MetricName::Collapsed => {
            let m = model.as_ref().expect("checked above");
            let eval = metrics::eval_next_token(m, docs, &eval_cfg)?;
            if eval.skipped > 0 {
                warn!("{} documents shorter than {} tokens skipped", eval.skipped, args.prompt_tokens);
            }
            let ids = docs
                .iter()
                .filter(|d| d.len() >= args.prompt_tokens)
                .map(|d| d.id.clone())
                .collect();
            (ids, if args.metric == MetricName::Gini { eval.gini } else { eval.collapsed })
        }
        MetricName::Ci => {
            let m = model.as_ref().expect("checked above");
            let Some(path) = &args.ci_items else {
                return usage("ci needs --ci-items");
            };
            let items = load_ci_items(path, &vocab)?;
            let outcome = metrics::ci_accuracy(m, &items, CandidateScoring::default())?;
            ((0..items.len()).map(|i| format!("item:{i}")).collect(), outcome.hits)
        }
    };
    let sample = MetricSample::new(format!("{:?}", args.metric).to_lowercase(), values);
    match &args.out {
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
            w.write_record(["id", sample.name.as_str()]).map_err(io)?;
            for (id, v) in ids.iter().zip(&sample.values) {
                w.write_record([id.clone(), v.to_string()]).map_err(io)?;
            }
            w.write_record(["mean".to_string(), sample.mean.to_string()]).map_err(io)?;
            w.write_record(["stderr".to_string(), sample.stderr.to_string()]).map_err(io)?;
            w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        None => {
            let mut text = format!("id\t{}\n", sample.name);
            for (id, v) in ids.iter().zip(&sample.values) {
                let _ = writeln!(text, "{id}\t{v}");
            }
            let _ = writeln!(text, "mean\t{}\nstderr\t{}", sample.mean, sample.stderr);
            print!("{text}");
        }
    }
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> CliResult<()> {
    if args.z == 0 {
        return usage("z must be at least 1");
    }
    let model = match args.by {
        FilterBy::Surplexity => Some(load_model(args.model.as_deref(), "surplexity filtering")?),
        FilterBy::Entropy => args.model.as_deref().map(NgramModel::load).transpose()?,
    };
    let (vocab, corpus) = read_input(&args.input, model.as_ref().map(|m| m.vocab().as_ref()))?;
    let docs = &corpus.documents;
    let scores = match (&model, args.by) {
        (Some(m), FilterBy::Surplexity) => metrics::surplexity_scores(m, docs)?,
        _ => docs.iter().map(metrics::document_entropy).collect::<crate::Result<Vec<_>>>()?,
    };
    if args.z > docs.len() {
        warn!("only {} documents available, {} requested", docs.len(), args.z);
    }
    let order = rank(docs, &scores);
    let keep = &order[..args.z.min(docs.len())];
    write_jsonl(&args.out, keep.iter().map(|&i| &docs[i]), &vocab)?;
    let sidecar = PathBuf::from(format!("{}.scores.csv", args.out.display()));
    let mut w = csv::Writer::from_path(&sidecar).map_err(|e| CliError::Runtime(format!("{}: {e}", sidecar.display())))?;
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", sidecar.display()));
    w.write_record(["id", "score", "rank"]).map_err(io)?;
    for (r, &i) in keep.iter().enumerate() {
        w.write_record([docs[i].id.clone(), scores[i].to_string(), (r + 1).to_string()])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("kept {} of {} documents", keep.len(), docs.len());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult<()> {
    let mut tables = Vec::new();
    for dir in &args.runs {
        match RunTable::load(dir) {
            Ok(t) => tables.push(t),
            Err(e) => warn!("skipping {}: {e}", dir.display()),
        }
    }
    if tables.is_empty() {
        return Err(CliError::Runtime("no readable run directories".into()));
    }
    let written = report::write_report(&tables, &args.out).map_err(|e| match e {
        Error::MismatchedRuns { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
