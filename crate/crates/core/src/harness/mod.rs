//! Experiment driver: table-style planning comparisons, the affordance
//! accuracy sweep and the verifiers, written out as CSV and JSON lines.
//!
//! Every output byte is a function of the [`ExperimentConfig`] (including its
//! master seed), except for the optional wall-clock field which is off by
//! default.

mod output;
mod tables;
mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksim::{ConfigError, TaskConfig};
use crate::llm_bridge::{BridgeError, EndpointConfig};
use crate::mc_search::SearchConfig;
use crate::seeding::short_digest;

pub use output::{
    write_outcome, Fig3Row, Table1Row, Table2Row, AGGREGATE_FILE, RECORDS_FILE, SCHEMA_VERSION, TRANSCRIPT_FILE,
    VERIFY_FILE,
};
pub use tables::{aggregate, run_fig3_sweep, run_table_experiment, Aggregate, MeanStd, RunRecord, StepSummary};
pub use verify::{run_verifiers, VerifyDetail, VerifyRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Task(#[from] ConfigError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("writing csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parsing experiment config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("verifier: {0}")]
    Verifier(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Table1,
    Table2,
    Fig3Sweep,
    Theorem1Verify,
    Theorem2Verify,
    LemmaA1Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Table1 => "table1",
            Experiment::Table2 => "table2",
            Experiment::Fig3Sweep => "fig3_sweep",
            Experiment::Theorem1Verify => "theorem1_verify",
            Experiment::Theorem2Verify => "theorem2_verify",
            Experiment::LemmaA1Verify => "lemma_a1_verify",
        }
    }

    pub fn is_verifier(self) -> bool {
        matches!(
            self,
            Experiment::Theorem1Verify | Experiment::Theorem2Verify | Experiment::LemmaA1Verify
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldChoice {
    Oracle,
    Noisy,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffordanceChoice {
    /// Full-model search over every candidate action.
    None,
    Oracle,
    Noisy,
    Llm,
}

impl fmt::Display for WorldChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorldChoice::Oracle => "oracle",
            WorldChoice::Noisy => "noisy",
            WorldChoice::Llm => "llm",
        })
    }
}

impl fmt::Display for AffordanceChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AffordanceChoice::None => "none",
            AffordanceChoice::Oracle => "oracle",
            AffordanceChoice::Noisy => "noisy",
            AffordanceChoice::Llm => "llm",
        })
    }
}

/// One row of a table experiment: a world model paired with an affordance
/// source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub model: WorldChoice,
    pub affordance: AffordanceChoice,
}

impl Method {
    pub const fn new(model: WorldChoice, affordance: AffordanceChoice) -> Self {
        Self { model, affordance }
    }

    pub fn is_full(&self) -> bool {
        self.affordance == AffordanceChoice::None
    }

    pub fn uses_llm(&self) -> bool {
        self.model == WorldChoice::Llm || self.affordance == AffordanceChoice::Llm
    }

    /// `full/noisy` or `partial/noisy+oracle-aff`.
    pub fn label(&self) -> String {
        if self.is_full() {
            format!("full/{}", self.model)
        } else {
            format!("partial/{}+{}-aff", self.model, self.affordance)
        }
    }
}

/// Default table rows: the same world model searched fully, with predicted
/// affordances and with oracle affordances.
pub fn default_methods(model: WorldChoice) -> Vec<Method> {
    let predicted = if model == WorldChoice::Llm {
        AffordanceChoice::Llm
    } else {
        AffordanceChoice::Noisy
    };
    vec![
        Method::new(model, AffordanceChoice::None),
        Method::new(model, predicted),
        Method::new(model, AffordanceChoice::Oracle),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub corruption_rate: f64,
    pub accuracy: f64,
    pub drop_rate: f64,
    pub spurious_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            corruption_rate: 0.3,
            accuracy: 0.5,
            drop_rate: 1.0,
            spurious_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskDefaults {
    pub close_threshold: f64,
    pub max_steps: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for TaskDefaults {
    fn default() -> Self {
        let t = TaskConfig::default();
        Self {
            close_threshold: t.close_threshold,
            max_steps: t.max_steps,
            width: t.width,
            height: t.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub accuracies: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            accuracies: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Grids and sample sizes for the verifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub t1_ps: Vec<f64>,
    pub t1_ns: Vec<u64>,
    pub t1_zetas: Vec<f64>,
    pub t1_deltas: Vec<f64>,
    pub t1_seeds: usize,
    pub t1_eps: f64,
    pub t2_ns: Vec<usize>,
    pub t2_ks: Vec<usize>,
    pub t2_lengths: Vec<usize>,
    pub t2_runs: usize,
    pub t2_grid_resolution: usize,
    pub lemma_max_n: usize,
    pub lemma_max_length: usize,
    pub lemma_grid_resolution: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            t1_ps: vec![0.2, 0.5, 0.8],
            t1_ns: vec![50, 200],
            t1_zetas: vec![0.0, 0.1],
            t1_deltas: vec![0.0, 0.05, 0.2],
            t1_seeds: 1000,
            t1_eps: crate::wm_extract::DEFAULT_EPS,
            t2_ns: vec![4, 6],
            t2_ks: vec![1, 2, 3],
            t2_lengths: vec![1, 2, 3],
            t2_runs: 1000,
            t2_grid_resolution: crate::intent_sampler::DEFAULT_GRID_RESOLUTION,
            lemma_max_n: 6,
            lemma_max_length: 4,
            lemma_grid_resolution: 100,
        }
    }
}

/// Everything that determines a run. Loadable from TOML; every key is
/// optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub num_blocks: usize,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    /// Table rows; empty means [`default_methods`] for `model`.
    pub methods: Vec<Method>,
    /// World model used by the default rows and the sweep.
    pub model: WorldChoice,
    pub search: SearchConfig,
    pub task: TaskDefaults,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
    pub endpoint: Option<EndpointConfig>,
    /// Serve completions from this transcript instead of the endpoint.
    pub replay: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Adds `wall_time_ms` to every record, which breaks byte-for-byte
    /// reproducibility of `records.jsonl`.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Table1,
            num_blocks: 3,
            seeds: vec![0, 1, 2, 3],
            master_seed: 0,
            methods: Vec::new(),
            model: WorldChoice::Noisy,
            search: SearchConfig::default(),
            task: TaskDefaults::default(),
            noise: NoiseConfig::default(),
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
            endpoint: None,
            replay: None,
            output_dir: PathBuf::from("out"),
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            context: format!("reading {}", path.display()),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn resolved_methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            default_methods(self.model)
        } else {
            self.methods.clone()
        }
    }

    pub fn task_config(&self, seed: u64) -> TaskConfig {
        TaskConfig {
            num_blocks: self.num_blocks,
            close_threshold: self.task.close_threshold,
            max_steps: self.task.max_steps,
            seed,
            width: self.task.width,
            height: self.task.height,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: &str| Err(HarnessError::Invalid(m.to_string()));
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty");
        }
        if self.search.num_simulations == 0 || self.search.max_depth == 0 {
            return invalid("num_simulations and max_depth must be at least 1");
        }
        if !self.experiment.is_verifier() {
            self.task_config(0).validate()?;
        }
        let uses_llm = match self.experiment {
            Experiment::Table1 | Experiment::Table2 => self.resolved_methods().iter().any(Method::uses_llm),
            _ => false,
        };
        if uses_llm && self.endpoint.is_none() && self.replay.is_none() {
            return invalid("llm model or affordances need an [endpoint] section or a replay transcript");
        }
        if self.sweep.accuracies.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return invalid("sweep accuracies must lie in [0, 1]");
        }
        Ok(())
    }

    /// Digest of the configuration, ignoring where outputs go.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        short_digest(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }
}

/// What a run produced, ready to be written by [`write_outcome`].
#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: Experiment,
    pub records: Vec<RunRecord>,
    pub aggregate_csv: Option<String>,
    pub verify: Vec<VerifyRecord>,
    /// False when a verifier check failed.
    pub passed: bool,
}

/// Runs the configured experiment and writes its files into `output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    config.validate()?;
    let outcome = match config.experiment {
        Experiment::Table1 | Experiment::Table2 => run_table_experiment(config)?,
        Experiment::Fig3Sweep => run_fig3_sweep(config)?,
        Experiment::Theorem1Verify | Experiment::Theorem2Verify | Experiment::LemmaA1Verify => run_verifiers(config)?,
    };
    write_outcome(&config.output_dir, &outcome)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_config_with_overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            experiment = "table2"
            num_blocks = 5
            seeds = [1, 2]
            [search]
            num_simulations = 8
            [[methods]]
            model = "oracle"
            affordance = "oracle"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, Experiment::Table2);
        assert_eq!(cfg.search.num_simulations, 8);
        assert_eq!(cfg.search.max_depth, 10);
        assert_eq!(cfg.resolved_methods().len(), 1);
        assert!(ExperimentConfig::from_toml_str("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml_str("unknown = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("model = \"llm\"").is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..a.clone()
        };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = ExperimentConfig {
            master_seed: 1,
            ..a.clone()
        };
        assert_ne!(a.config_hash(), c.config_hash());
    }

    #[test]
    fn default_rows() {
        let labels: Vec<String> = default_methods(WorldChoice::Noisy).iter().map(Method::label).collect();
        assert_eq!(labels, ["full/noisy", "partial/noisy+noisy-aff", "partial/noisy+oracle-aff"]);
    }
}
