//! Command-line driver: argument parsing, configuration merging and the
//! subcommands that wire the library modules into batch runs.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sitgraph::graph::WeightPolicy;
use sitgraph::learn::Behavior;
use sitgraph::measures::Measure;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "sitgraph",
    version,
    about = "Friendship-closeness measures, boosted-tree scoring and feed-window recommendation over directed weighted graphs",
    after_help = "Precedence: flag > config file > default. SIT_OUT_DIR overrides the configured output directory."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; every key is optional
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root seed of every random stream [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs fully serially [default: one per core]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Edge list (`src dst weight`) or `.snap` snapshot [default: <out>/graph.snap]
    #[arg(long, global = true, value_name = "FILE")]
    pub graph: Option<PathBuf>,
    /// Event outcome file (`source target exposed invited adopted`) [default: <out>/outcome.tsv]
    #[arg(long, global = true, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Embedding file (`node v1 ... vdim`) to use instead of training node2vec [default: none]
    #[arg(long, global = true, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Feature file [default: <out>/features.tsv]
    #[arg(long, global = true, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Model file [default: <out>/model.json]
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Weights outside (0, 1]: reject, clamp or minmax [default: reject]
    #[arg(long, global = true)]
    pub weight_policy: Option<WeightPolicy>,
    /// Print the effective configuration as TOML and exit
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load an edge list and write a binary snapshot plus graph statistics
    Ingest,
    /// Compute every measure for every source-target pair
    Features(FeatureArgs),
    /// Train the boosted-tree scorer on the exposed pairs of an event
    Train(TrainArgs),
    /// Score every pair of the feature file
    Predict,
    /// Write the top-k feed window of every source
    Recommend(RecommendArgs),
    /// Simulate one event on a generated (or given) graph
    Simulate(SimulateArgs),
    /// Write the metrics, importance, conversion-curve and CC-size bundle
    Analyze(AnalyzeArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Features(_) => "features",
            Command::Train(_) => "train",
            Command::Predict => "predict",
            Command::Recommend(_) => "recommend",
            Command::Simulate(_) => "simulate",
            Command::Analyze(_) => "analyze",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct FeatureArgs {
    /// PageRank teleport probability [default: 0.15]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// PageRank series truncation tolerance [default: 1e-6]
    #[arg(long)]
    pub eps: Option<f64>,
    /// Forward-push residual threshold; unset computes the exact series [default: unset]
    #[arg(long)]
    pub push_rmax: Option<f64>,
    /// Nodes per random walk [default: 20]
    #[arg(long)]
    pub walk_length: Option<usize>,
    /// Walks started from every node [default: 4]
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    /// node2vec return parameter [default: 1]
    #[arg(long)]
    pub p: Option<f64>,
    /// node2vec in-out parameter [default: 1]
    #[arg(long)]
    pub q: Option<f64>,
    /// Embedding dimension [default: 32]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Skip-gram context window [default: 4]
    #[arg(long)]
    pub window: Option<usize>,
    /// Negative samples per context pair [default: 4]
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Passes over the walk corpus [default: 1]
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// Label to learn: adoption or invitation [default: adoption]
    #[arg(long)]
    pub behavior: Option<Behavior>,
    /// Comma-separated measure columns [default: all measures]
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<Measure>,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Fraction of each class held out for testing [default: 0.2]
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct LearnerArgs {
    /// Boosting rounds [default: 100]
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Maximum tree depth [default: 6]
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Shrinkage applied to every leaf [default: 0.1]
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// L2 penalty on leaf values [default: 1]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Penalty per leaf [default: 0]
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct RecommendArgs {
    /// Feed-window size [default: 5]
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Planted targets of the generated graph [default: 100]
    #[arg(long)]
    pub targets: Option<usize>,
    /// Random exposures per source; unset exposes every candidate [default: unset]
    #[arg(long)]
    pub exposure_k: Option<usize>,
    /// Recommendation file to use as exposure instead of random exposure [default: none]
    #[arg(long, value_name = "FILE")]
    pub windows: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct AnalyzeArgs {
    /// Seeded repetitions averaged in the metrics table [default: 3]
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Fraction of each class held out for testing [default: 0.2]
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub learner: LearnerArgs,
}

/// Effective configuration: defaults, then the config file, then
/// `SIT_OUT_DIR`, then flags.
pub fn resolve_config(cli: &Cli, env_out_dir: Option<PathBuf>) -> Result<RunConfig> {
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = env_out_dir {
        cfg.paths.out_dir = dir;
    }
    set(&mut cfg.paths.out_dir, g.out.clone());
    set(&mut cfg.seed, g.seed);
    if g.workers.is_some() {
        cfg.workers = g.workers;
    }
    for (slot, flag) in [
        (&mut cfg.paths.graph, &g.graph),
        (&mut cfg.paths.labels, &g.labels),
        (&mut cfg.paths.embeddings, &g.embeddings),
        (&mut cfg.paths.features, &g.features),
        (&mut cfg.paths.model, &g.model),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    set(&mut cfg.weight_policy, g.weight_policy);
    apply_command(&mut cfg, &cli.command)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_command(cfg: &mut RunConfig, command: &Command) -> Result<()> {
    match command {
        Command::Ingest | Command::Predict => {}
        Command::Features(a) => apply_features(cfg, a),
        Command::Train(a) => {
            set(&mut cfg.behavior, a.behavior);
            if !a.columns.is_empty() {
                cfg.measures.columns = a.columns.clone();
            }
            apply_learner(cfg, &a.learner);
            set(&mut cfg.evaluation.test_fraction, a.test_fraction);
        }
        Command::Recommend(a) => set(&mut cfg.k, a.k),
        Command::Simulate(a) => {
            apply_features(cfg, &a.features);
            if let Some(t) = a.targets {
                match &mut cfg.simulate.generator {
                    sitgraph::eventsim::GraphFamily::PlantedGroups(p) => p.targets = t,
                    _ => return Err(CliError::Invalid("--targets applies to the planted_groups family only".into())),
                }
            }
            if a.exposure_k.is_some() {
                cfg.simulate.exposure_k = a.exposure_k;
            }
            if a.windows.is_some() {
                cfg.paths.windows = a.windows.clone();
            }
        }
        Command::Analyze(a) => {
            set(&mut cfg.evaluation.repetitions, a.repetitions);
            set(&mut cfg.evaluation.test_fraction, a.test_fraction);
            apply_learner(cfg, &a.learner);
        }
    }
    Ok(())
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn apply_features(cfg: &mut RunConfig, a: &FeatureArgs) {
    set(&mut cfg.measures.alpha, a.alpha);
    set(&mut cfg.measures.eps, a.eps);
    if a.push_rmax.is_some() {
        cfg.measures.push_rmax = a.push_rmax;
    }
    set(&mut cfg.walk.length, a.walk_length);
    set(&mut cfg.walk.walks_per_node, a.walks_per_node);
    set(&mut cfg.walk.p, a.p);
    set(&mut cfg.walk.q, a.q);
    set(&mut cfg.embedding.dim, a.dim);
    set(&mut cfg.embedding.window, a.window);
    set(&mut cfg.embedding.negatives, a.negatives);
    set(&mut cfg.embedding.epochs, a.epochs);
}

fn apply_learner(cfg: &mut RunConfig, a: &LearnerArgs) {
    set(&mut cfg.learner.rounds, a.rounds);
    set(&mut cfg.learner.max_depth, a.max_depth);
    set(&mut cfg.learner.learning_rate, a.learning_rate);
    set(&mut cfg.learner.lambda, a.lambda);
    set(&mut cfg.learner.gamma, a.gamma);
}

/// What a run produced.
#[derive(Debug)]
pub enum RunOutput {
    /// `--print-config`: the effective configuration.
    Config(String),
    Done { manifest: Manifest, summary: String },
}

/// Resolves the configuration and runs the subcommand on a pool of the
/// configured size.
pub fn run(cli: &Cli) -> Result<RunOutput> {
    let env_out = std::env::var_os(config::OUT_DIR_ENV).map(PathBuf::from);
    let cfg = resolve_config(cli, env_out)?;
    if cli.global.print_config {
        return Ok(RunOutput::Config(cfg.to_toml()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command, &cfg))
        .map(|(manifest, summary)| RunOutput::Done { manifest, summary })
}
