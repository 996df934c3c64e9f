//! Run configuration: a TOML file whose every field is optional, merged
//! with command-line flags (flag > `SIT_OUT_DIR` for the output directory >
//! file > default).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sitgraph::embed::{TrainConfig, WalkConfig};
use sitgraph::eventsim::{BehaviorModel, GraphFamily, PlantedGroups};
use sitgraph::graph::WeightPolicy;
use sitgraph::learn::{Behavior, BoostConfig};
use sitgraph::measures::{Measure, MeasureConfig, PprMethod};
use sitgraph::seed::substream;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "SIT_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream. At most `i64::MAX`, the largest TOML integer.
    pub seed: u64,
    /// Worker threads; absent means one per core.
    pub workers: Option<usize>,
    /// Feed-window size for `recommend`.
    pub k: usize,
    /// Label trained on by `train`.
    pub behavior: Behavior,
    pub weight_policy: WeightPolicy,
    pub paths: Paths,
    pub measures: MeasureParams,
    pub walk: WalkParams,
    pub embedding: EmbeddingParams,
    pub learner: BoostConfig,
    pub evaluation: EvaluationParams,
    pub simulate: SimulateParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: None,
            k: 5,
            behavior: Behavior::Adoption,
            weight_policy: WeightPolicy::RejectOutOfRange,
            paths: Paths::default(),
            measures: MeasureParams::default(),
            walk: WalkParams::default(),
            embedding: EmbeddingParams::default(),
            learner: BoostConfig::default(),
            evaluation: EvaluationParams::default(),
            simulate: SimulateParams::default(),
        }
    }
}

/// Inputs left unset fall back to the file an earlier subcommand writes
/// into `out_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Edge list, or a `.snap` snapshot. Defaults to `<out_dir>/graph.snap`.
    pub graph: Option<PathBuf>,
    /// Event outcome file. Defaults to `<out_dir>/outcome.tsv`.
    pub labels: Option<PathBuf>,
    /// Embedding file to import instead of training node2vec.
    pub embeddings: Option<PathBuf>,
    /// Defaults to `<out_dir>/features.tsv`.
    pub features: Option<PathBuf>,
    /// Defaults to `<out_dir>/model.json`.
    pub model: Option<PathBuf>,
    /// Recommendation file used as the exposure policy of `simulate`.
    pub windows: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            graph: None,
            labels: None,
            embeddings: None,
            features: None,
            model: None,
            windows: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureParams {
    /// Columns the model is trained on.
    pub columns: Vec<Measure>,
    pub alpha: f64,
    pub eps: f64,
    /// Use forward push with this residual threshold instead of the exact series.
    pub push_rmax: Option<f64>,
}

impl Default for MeasureParams {
    fn default() -> Self {
        MeasureParams {
            columns: Measure::ALL.to_vec(),
            alpha: 0.15,
            eps: 1e-6,
            push_rmax: None,
        }
    }
}

impl MeasureParams {
    pub fn measure_config(&self) -> MeasureConfig {
        MeasureConfig {
            alpha: self.alpha,
            eps: self.eps,
            ppr: match self.push_rmax {
                Some(r_max) => PprMethod::Push { r_max },
                None => PprMethod::Series,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkParams {
    pub length: usize,
    pub walks_per_node: usize,
    pub p: f64,
    pub q: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        let w = WalkConfig::default();
        WalkParams {
            length: w.length,
            walks_per_node: w.walks_per_node,
            p: w.p,
            q: w.q,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        let t = TrainConfig::default();
        EmbeddingParams {
            dim: t.dim,
            window: t.window,
            negatives: t.negatives,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationParams {
    pub test_fraction: f64,
    /// Seeded repetitions averaged by `analyze`.
    pub repetitions: usize,
    /// Train on all positives plus as many sampled negatives.
    pub balanced: bool,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        EvaluationParams {
            test_fraction: 0.2,
            repetitions: 3,
            balanced: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    /// Used when no graph path is given.
    pub generator: GraphFamily,
    /// Random exposures per source; absent exposes every candidate.
    pub exposure_k: Option<usize>,
    pub behavior: BehaviorModel,
}

impl Default for SimulateParams {
    fn default() -> Self {
        SimulateParams {
            generator: GraphFamily::PlantedGroups(PlantedGroups {
                noise_per_source: 6.0,
                ..PlantedGroups::default()
            }),
            exposure_k: None,
            behavior: BehaviorModel::single(Measure::Ugt, 12.0, -9.0),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Rejects values the file form cannot hold.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Invalid(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        if self.workers == Some(0) {
            return Err(CliError::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.message().to_string(),
        })
    }

    /// Hash of everything that can change results: paths and worker count
    /// are excluded, input contents are hashed separately.
    pub fn result_hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.workers = None;
        crate::manifest::hex_sha256(c.to_toml().as_bytes())
    }

    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            length: self.walk.length,
            walks_per_node: self.walk.walks_per_node,
            p: self.walk.p,
            q: self.walk.q,
            seed: self.stream("walk"),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.embedding.dim,
            window: self.embedding.window,
            negatives: self.embedding.negatives,
            epochs: self.embedding.epochs,
            learning_rate: self.embedding.learning_rate,
            seed: self.stream("embedding"),
        }
    }

    /// Seed of the named substream of the root seed.
    pub fn stream(&self, name: &str) -> u64 {
        substream(self.seed, name, 0)
    }

    pub fn out_dir(&self) -> &Path {
        &self.paths.out_dir
    }

    pub fn graph_path(&self) -> PathBuf {
        self.paths.graph.clone().unwrap_or_else(|| self.out_dir().join("graph.snap"))
    }

    pub fn labels_path(&self) -> PathBuf {
        self.paths.labels.clone().unwrap_or_else(|| self.out_dir().join("outcome.tsv"))
    }

    pub fn features_path(&self) -> PathBuf {
        self.paths.features.clone().unwrap_or_else(|| self.out_dir().join("features.tsv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.paths.model.clone().unwrap_or_else(|| self.out_dir().join("model.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn custom_values_round_trip() {
        let mut c = RunConfig::default();
        c.seed = i64::MAX as u64;
        c.workers = Some(3);
        c.measures.push_rmax = Some(1e-4);
        c.measures.columns = vec![Measure::Ugt, Measure::Igt];
        c.measures.alpha = 0.1 + 0.2;
        c.paths.graph = Some("g.txt".into());
        c.simulate.exposure_k = Some(3);
        c.simulate.generator = GraphFamily::PowerLaw {
            nodes: 10,
            edges: 20,
            exponent: 2.5,
            max_degree: 5,
        };
        c.behavior = Behavior::Invitation;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[learner]\nrounds = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.learner.rounds, 3);
        assert_eq!(c.learner.max_depth, BoostConfig::default().max_depth);
        assert_eq!(c.k, 5);
        assert!(RunConfig::from_toml("sede = 7").is_err());
    }

    #[test]
    fn result_hash_ignores_paths_and_workers() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = "elsewhere".into();
        b.workers = Some(1);
        assert_eq!(a.result_hash(), b.result_hash());
        b.seed = 1;
        assert_ne!(a.result_hash(), b.result_hash());
    }
}
