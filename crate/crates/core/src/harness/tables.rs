use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AffordanceChoice, Experiment, ExperimentConfig, HarnessError, Method, Outcome, WorldChoice};
use crate::blocksim::{init_state, BlocksWorld};
use crate::llm_bridge::{
    CompletionSource, HttpCompletion, LlmAffordance, LlmWorld, PromptTemplate, RecordingSource, ReplaySource,
};
use crate::mc_search::{evaluate_online, Completion, EvalReport, SearchConfig, SearchMetrics};
use crate::model_iface::{
    noisy_affordance, noisy_world, oracle_affordance, oracle_world, AffordanceModel, NoisyAffordanceParams,
    NoisyWorldParams, WorldModel,
};
use crate::seeding::derive_seed;

use super::output::{fig3_csv, table_csv, TRANSCRIPT_FILE};

/// Search metrics averaged over the online steps of one episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub mc_score: f64,
    pub mc_mean_return: f64,
    pub simulations_used: f64,
    pub avg_leaf_node_score: f64,
    pub avg_tree_score: f64,
    pub avg_accumulated_reward: f64,
}

impl StepSummary {
    pub fn from_steps(steps: &[SearchMetrics]) -> Self {
        if steps.is_empty() {
            return Self::default();
        }
        let mean = |f: fn(&SearchMetrics) -> f64| steps.iter().map(f).sum::<f64>() / steps.len() as f64;
        Self {
            mc_score: mean(|m| m.mc_score),
            mc_mean_return: mean(|m| m.mc_mean_return),
            simulations_used: mean(|m| m.simulations_used as f64),
            avg_leaf_node_score: mean(|m| m.avg_leaf_node_score),
            avg_tree_score: mean(|m| m.avg_tree_score),
            avg_accumulated_reward: mean(|m| m.avg_accumulated_reward),
        }
    }
}

/// One seed of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub experiment: Experiment,
    pub method: String,
    pub model: WorldChoice,
    pub affordance: AffordanceChoice,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    pub seed: u64,
    pub task_seed: u64,
    pub num_blocks: usize,
    pub report: EvalReport,
    pub steps_display: String,
    pub steps_taken: usize,
    pub step_metrics: StepSummary,
    /// World-model predictions over the whole episode.
    pub model_calls: u64,
    pub affordance_calls: u64,
    /// Root expansion list size at the start state.
    pub root_branching: usize,
    pub tree_hashes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_ms: Option<u64>,
}

impl RunRecord {
    pub fn completed(&self) -> bool {
        self.report.steps_to_completion.is_completed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Per-method summary across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub accuracy: Option<f64>,
    pub num_blocks: usize,
    pub seeds: usize,
    pub mc_score: MeanStd,
    pub simulations: MeanStd,
    pub model_calls: MeanStd,
    pub affordance_calls: MeanStd,
    pub avg_leaf_node_score: MeanStd,
    pub avg_tree_score: MeanStd,
    pub avg_accumulated_reward: MeanStd,
    pub online_reward: MeanStd,
    pub root_branching: MeanStd,
    pub success_rate: f64,
    /// Mean steps of the completed runs, or `>budget` if none completed.
    pub steps_to_completion: String,
}

pub fn aggregate(records: &[RunRecord]) -> Aggregate {
    let first = &records[0];
    let stat = |f: fn(&RunRecord) -> f64| MeanStd::of(records.iter().map(f));
    let completed: Vec<usize> = records
        .iter()
        .filter_map(|r| r.report.steps_to_completion.steps())
        .collect();
    let steps_to_completion = if completed.is_empty() {
        match first.report.steps_to_completion {
            Completion::Exhausted { budget } => format!(">{budget}"),
            Completion::Completed { .. } => unreachable!("no completed runs"),
        }
    } else {
        format!("{:.2}", completed.iter().sum::<usize>() as f64 / completed.len() as f64)
    };
    Aggregate {
        method: first.method.clone(),
        accuracy: first.accuracy,
        num_blocks: first.num_blocks,
        seeds: records.len(),
        mc_score: stat(|r| r.step_metrics.mc_score),
        simulations: stat(|r| r.step_metrics.simulations_used),
        model_calls: stat(|r| r.model_calls as f64),
        affordance_calls: stat(|r| r.affordance_calls as f64),
        avg_leaf_node_score: stat(|r| r.step_metrics.avg_leaf_node_score),
        avg_tree_score: stat(|r| r.step_metrics.avg_tree_score),
        avg_accumulated_reward: stat(|r| r.step_metrics.avg_accumulated_reward),
        online_reward: stat(|r| r.report.online_cumulative_reward),
        root_branching: stat(|r| r.root_branching as f64),
        success_rate: completed.len() as f64 / records.len() as f64,
        steps_to_completion,
    }
}

/// Shared text-completion backend for llm rows.
fn completion_source(config: &ExperimentConfig) -> Result<Arc<dyn CompletionSource>, HarnessError> {
    if let Some(path) = &config.replay {
        return Ok(Arc::new(ReplaySource::load(path)?));
    }
    let endpoint = config
        .endpoint
        .clone()
        .ok_or_else(|| HarnessError::Invalid("llm rows need an endpoint".into()))?;
    let client = HttpCompletion::new(endpoint)?;
    client.check_reachable()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| HarnessError::Io {
        context: format!("creating {}", config.output_dir.display()),
        source,
    })?;
    Ok(Arc::new(RecordingSource::create(client, config.output_dir.join(TRANSCRIPT_FILE))?))
}

struct RunInputs<'a> {
    config: &'a ExperimentConfig,
    hash: &'a str,
    method: Method,
    accuracy: Option<f64>,
    source: Option<&'a Arc<dyn CompletionSource>>,
}

fn run_seed(inputs: &RunInputs<'_>, seed: u64) -> Result<RunRecord, HarnessError> {
    let config = inputs.config;
    let master = config.master_seed;
    let task_seed = derive_seed(master, "task", seed);
    let task = config.task_config(task_seed);
    let world = BlocksWorld::from_config(&task);
    let start = init_state(&task)?;
    let bad = |e: crate::model_iface::ParamError| HarnessError::Invalid(e.to_string());
    let llm_source = || {
        inputs
            .source
            .cloned()
            .ok_or_else(|| HarnessError::Invalid("llm rows need a completion source".into()))
    };

    let model: Box<dyn WorldModel> = match inputs.method.model {
        WorldChoice::Oracle => Box::new(oracle_world(world)),
        WorldChoice::Noisy => Box::new(
            noisy_world(
                world,
                NoisyWorldParams {
                    corruption_rate: config.noise.corruption_rate,
                    seed: derive_seed(master, "noisy-world", seed),
                },
            )
            .map_err(bad)?,
        ),
        WorldChoice::Llm => Box::new(LlmWorld::new(llm_source()?, PromptTemplate::default())),
    };
    let affordances: Box<dyn AffordanceModel> = match inputs.method.affordance {
        AffordanceChoice::None | AffordanceChoice::Oracle => Box::new(oracle_affordance(world)),
        AffordanceChoice::Noisy => Box::new(
            noisy_affordance(
                world,
                NoisyAffordanceParams {
                    accuracy: inputs.accuracy.unwrap_or(config.noise.accuracy),
                    drop_rate: config.noise.drop_rate,
                    spurious_rate: config.noise.spurious_rate,
                    seed: derive_seed(master, "noisy-affordance", seed),
                },
            )
            .map_err(bad)?,
        ),
        AffordanceChoice::Llm => Box::new(LlmAffordance::new(llm_source()?, PromptTemplate::default(), world)),
    };
    let search = SearchConfig {
        use_affordances: !inputs.method.is_full(),
        rollout_seed: derive_seed(derive_seed(master, "search", config.search.rollout_seed), "seed", seed),
        ..config.search.clone()
    };

    let clock = Instant::now();
    let run = evaluate_online(&world, &start, &*model, &*affordances, &search, task.max_steps);
    let wall_time_ms = config.record_wall_time.then(|| clock.elapsed().as_millis() as u64);

    Ok(RunRecord {
        config_hash: inputs.hash.to_string(),
        experiment: config.experiment,
        method: inputs.method.label(),
        model: inputs.method.model,
        affordance: inputs.method.affordance,
        accuracy: inputs.accuracy,
        seed,
        task_seed,
        num_blocks: config.num_blocks,
        steps_display: run.report.steps_to_completion.to_string(),
        report: run.report,
        steps_taken: run.actions.len(),
        step_metrics: StepSummary::from_steps(&run.step_metrics),
        model_calls: model.call_count(),
        affordance_calls: if search.use_affordances { affordances.call_count() } else { 0 },
        root_branching: run.root_branching.first().copied().unwrap_or(0),
        tree_hashes: run.tree_hashes,
        wall_time_ms,
    })
}

fn run_method(inputs: &RunInputs<'_>) -> Result<Vec<RunRecord>, HarnessError> {
    let seeds = &inputs.config.seeds;
    if inputs.method.uses_llm() {
        // Sequential so a recorded transcript has a reproducible order.
        seeds.iter().map(|&s| run_seed(inputs, s)).collect()
    } else {
        seeds.par_iter().map(|&s| run_seed(inputs, s)).collect()
    }
}

/// Runs every configured method over every seed and aggregates per method.
pub fn run_table_experiment(config: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    config.validate()?;
    let methods = config.resolved_methods();
    let hash = config.config_hash();
    let source = if methods.iter().any(Method::uses_llm) {
        Some(completion_source(config)?)
    } else {
        None
    };
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for method in methods {
        let inputs = RunInputs {
            config,
            hash: &hash,
            method,
            accuracy: None,
            source: source.as_ref(),
        };
        let rows = run_method(&inputs)?;
        aggregates.push(aggregate(&rows));
        records.extend(rows);
    }
    Ok(Outcome {
        experiment: config.experiment,
        aggregate_csv: Some(table_csv(config.experiment, &aggregates, &hash)?),
        records,
        verify: Vec::new(),
        passed: true,
    })
}

/// Perfect world model with noisy affordances at each configured accuracy.
pub fn run_fig3_sweep(config: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    config.validate()?;
    let hash = config.config_hash();
    let method = Method::new(WorldChoice::Oracle, AffordanceChoice::Noisy);
    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    for &accuracy in &config.sweep.accuracies {
        let inputs = RunInputs {
            config,
            hash: &hash,
            method,
            accuracy: Some(accuracy),
            source: None,
        };
        let rows = run_method(&inputs)?;
        aggregates.push(aggregate(&rows));
        records.extend(rows);
    }
    Ok(Outcome {
        experiment: config.experiment,
        aggregate_csv: Some(fig3_csv(&aggregates, &hash)?),
        records,
        verify: Vec::new(),
        passed: true,
    })
}
