use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ragtree::config::{PolicyBackend, RetrieverBackend, RunConfig};
use ragtree::data::{load_dataset, write_jsonl};
use ragtree::run::{self, BenchOptions, ExpandOptions};
use ragtree::store::load_snapshots;
use ragtree_core::expansion::Strategy;
use ragtree_core::export::PathStrategy;
use ragtree_core::{Question, ScoreMetric};

#[derive(Parser)]
#[command(name = "ragtree", version, about = "Grow pruned decision/execution trees and export SFT/DPO data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand every dataset question into a snapshot.
    Expand {
        #[command(flatten)]
        common: Common,
        /// Output directory (snapshots/ and manifest.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-expand questions that already have a finished snapshot.
        #[arg(long)]
        no_resume: bool,
    },
    /// Write SFT segments of each snapshot's selected chain.
    ExportSft {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Expansion output directory or a directory of snapshots.
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        path_strategy: Option<PathArg>,
        #[arg(long)]
        min_final_reward: Option<f64>,
    },
    /// Write decision and execution preference pairs.
    ExportDpo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        margin: Option<f64>,
        /// Per-snapshot decision-pair availability (JSONL).
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Expand with every strategy and write a CSV of costs.
    BenchExpansion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Use this many synthetic questions when no dataset is given.
        #[arg(long, default_value_t = 1)]
        questions: usize,
        #[arg(long, value_enum, value_delimiter = ',')]
        strategies: Vec<StrategyArg>,
        #[arg(long, default_value_t = 100_000)]
        max_full_node_leaves: u128,
    },
    /// Run the agent loop on a dataset and report EM/F1.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Transcript JSONL.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        max_searches: Option<usize>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        exclude_failures: bool,
    },
    /// Print the effective configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tmax: Option<usize>,
    /// Skip-retrieval threshold on the best self-answer reward.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long)]
    majority_samples: Option<usize>,
    /// Use the synthetic counting policy.
    #[arg(long, conflicts_with = "script")]
    counting: bool,
    /// Use a scripted policy from this rule file.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Use a lexical retriever over this corpus JSONL.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Pruning,
    NoPruning,
    FullNode,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Pruning => Strategy::Pruning,
            StrategyArg::NoPruning => Strategy::NoPruning,
            StrategyArg::FullNode => Strategy::FullNode,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    F1,
    Em,
}

#[derive(Clone, Copy, ValueEnum)]
enum PathArg {
    Retained,
    Most,
    Least,
}

fn base_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

impl Common {
    /// Config file plus flags; flag paths stay relative to the working
    /// directory.
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = base_config(self.config.as_deref())?;
        let cwd = std::env::current_dir()?;
        let abs = |p: &PathBuf| cwd.join(p);
        let e = &mut cfg.expansion;
        if let Some(v) = self.k {
            e.k = v;
        }
        if let Some(v) = self.n {
            e.n = v;
        }
        if let Some(v) = self.tmax {
            e.t_max = v;
        }
        if let Some(v) = self.threshold {
            e.tau = v;
        }
        if let Some(v) = self.strategy {
            e.strategy = v.into();
        }
        if let Some(v) = self.seed {
            e.seed = v;
        }
        if let Some(v) = self.metric {
            e.score_metric = match v {
                MetricArg::F1 => ScoreMetric::F1,
                MetricArg::Em => ScoreMetric::Em,
            };
        }
        if let Some(v) = self.majority_samples {
            e.majority_samples = v;
        }
        if let Some(v) = self.concurrency {
            cfg.concurrency = v;
        }
        if let Some(p) = &self.dataset {
            cfg.paths.dataset = Some(abs(p));
        }
        if self.counting {
            cfg.backends.policy = PolicyBackend::Counting;
        }
        if let Some(p) = &self.script {
            cfg.backends.policy = PolicyBackend::Scripted { script: abs(p) };
        }
        if let Some(p) = &self.corpus {
            cfg.backends.retriever = RetrieverBackend::Lexical { corpus: Some(abs(p)) };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dataset(cfg: &RunConfig) -> Result<(String, Vec<Question>)> {
    let path = cfg.paths.dataset.as_ref().context("no dataset given (--dataset or paths.dataset)")?;
    let path = cfg.resolve(path);
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((name, load_dataset(&path)?))
}

fn synthetic(count: usize) -> Vec<Question> {
    (0..count)
        .map(|i| Question::new(format!("synthetic-{i}"), format!("synthetic question {i}"), vec!["answer".into()]).unwrap())
        .collect()
}

fn snapshot_dir(config: &Option<PathBuf>, snapshots: &Option<PathBuf>) -> Result<(RunConfig, PathBuf)> {
    let cfg = base_config(config.as_deref())?;
    let dir = match snapshots {
        Some(d) => d.clone(),
        None => cfg.output_dir(),
    };
    Ok((cfg, dir))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// `Ok(true)` when every item succeeded.
fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Expand { common, out, no_resume } => {
            let cfg = common.config()?;
            let (_, questions) = dataset(&cfg)?;
            let out = out.unwrap_or_else(|| cfg.output_dir());
            let backends = cfg.backends()?;
            let opts = ExpandOptions {
                config: &cfg.expansion,
                generation: &cfg.generation,
                concurrency: cfg.concurrency,
                resume: cfg.resume && !no_resume,
            };
            let m = run::expand_all(&backends, &questions, &out, &opts)?;
            println!("expanded {}: ok {}, failed {}, skipped {}", out.display(), m.ok, m.failed, m.skipped);
            Ok(m.failed == 0)
        }
        Command::ExportSft { config, snapshots, out, path_strategy, min_final_reward } => {
            let (cfg, dir) = snapshot_dir(&config, &snapshots)?;
            let mut opts = cfg.export.sft;
            if let Some(p) = path_strategy {
                opts.strategy = match p {
                    PathArg::Retained => PathStrategy::Retained,
                    PathArg::Most => PathStrategy::MostRetrievalCost,
                    PathArg::Least => PathStrategy::LeastRetrievalCost,
                };
            }
            if let Some(r) = min_final_reward {
                opts.min_final_reward = r;
            }
            let snaps = load_snapshots(&dir)?;
            let result = run::export_sft_records(&snaps, &opts, &cfg.history)?;
            write_jsonl(&out, &result.records)?;
            println!("{} segments from {} snapshots ({} failed snapshots skipped)", result.records.len(), snaps.len(), result.skipped.len());
            Ok(true)
        }
        Command::ExportDpo { config, snapshots, out, margin, meta } => {
            let (cfg, dir) = snapshot_dir(&config, &snapshots)?;
            let snaps = load_snapshots(&dir)?;
            let (result, metadata) = run::export_dpo_records(&snaps, margin.unwrap_or(cfg.export.margin), &cfg.history);
            write_jsonl(&out, &result.records)?;
            if let Some(m) = meta {
                write_jsonl(&m, &metadata)?;
            }
            println!("{} pairs from {} snapshots ({} failed snapshots skipped)", result.records.len(), snaps.len(), result.skipped.len());
            Ok(true)
        }
        Command::BenchExpansion { common, out, questions, strategies, max_full_node_leaves } => {
            let mut cfg = common.config()?;
            if common.majority_samples.is_none() {
                // keeps counts comparable with the closed-form totals
                cfg.expansion.majority_samples = cfg.expansion.k;
            }
            let qs = match cfg.paths.dataset {
                Some(_) => dataset(&cfg)?.1,
                None => synthetic(questions),
            };
            let strategies =
                if strategies.is_empty() { Strategy::ALL.to_vec() } else { strategies.into_iter().map(Strategy::from).collect() };
            let opts = BenchOptions { strategies, concurrency: cfg.concurrency, max_full_node_leaves };
            let rows = run::bench(&cfg.backends()?, &qs, &cfg.expansion, &cfg.generation, &opts)?;
            run::write_bench_csv(&out, &rows)?;
            for r in &rows {
                println!("{:<11} {:>8} count/question {:>10} (formula {})", r.strategy, r.status, r.count_per_question, r.theoretical);
            }
            Ok(rows.iter().all(|r| r.failed == 0))
        }
        Command::Evaluate { common, out, transcripts, max_searches, max_steps, exclude_failures } => {
            let mut cfg = common.config()?;
            if let Some(v) = max_searches {
                cfg.evaluate.caps.max_searches = v;
            }
            if let Some(v) = max_steps {
                cfg.evaluate.caps.max_steps = v;
            }
            cfg.evaluate.exclude_failures |= exclude_failures;
            let (name, questions) = dataset(&cfg)?;
            let (report, ts) =
                run::evaluate_all(&cfg.backends()?, &questions, &name, &cfg.evaluate, cfg.expansion.seed, cfg.concurrency)?;
            write_json(&out, &report)?;
            if let Some(p) = transcripts {
                write_jsonl(&p, &ts)?;
            }
            println!("{}: n {} em {:.4} f1 {:.4} failures {}", report.dataset, report.n, report.em, report.f1, report.failures);
            Ok(report.failures == 0)
        }
        Command::ShowConfig { common } => {
            print!("{}", common.config()?.to_toml());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
