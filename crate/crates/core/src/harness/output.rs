use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tables::Aggregate;
use super::{Experiment, HarnessError, Outcome};

/// Bumped whenever a column or record field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const VERIFY_FILE: &str = "verify_report.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

/// Search-quality row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub schema_version: u32,
    pub config_hash: String,
    pub method: String,
    pub num_blocks: usize,
    pub seeds: usize,
    pub mc_score_mean: f64,
    pub mc_score_std: f64,
    pub simulations_mean: f64,
    pub model_calls_mean: f64,
    pub model_calls_std: f64,
    pub affordance_calls_mean: f64,
    pub root_branching_mean: f64,
    pub success_rate: f64,
}

/// Online-execution row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub schema_version: u32,
    pub config_hash: String,
    pub method: String,
    pub num_blocks: usize,
    pub seeds: usize,
    pub steps_to_completion: String,
    pub success_rate: f64,
    pub online_reward_mean: f64,
    pub online_reward_std: f64,
    pub avg_leaf_node_score: f64,
    pub avg_tree_score: f64,
    pub avg_accumulated_reward: f64,
}

/// One accuracy level of the affordance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Row {
    pub schema_version: u32,
    pub config_hash: String,
    pub accuracy: f64,
    pub num_blocks: usize,
    pub seeds: usize,
    pub success_rate: f64,
    pub steps_to_completion: String,
    pub online_reward_mean: f64,
    pub online_reward_std: f64,
    pub mc_score_mean: f64,
}

impl Table1Row {
    pub fn from_aggregate(a: &Aggregate, hash: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.to_string(),
            method: a.method.clone(),
            num_blocks: a.num_blocks,
            seeds: a.seeds,
            mc_score_mean: a.mc_score.mean,
            mc_score_std: a.mc_score.std,
            simulations_mean: a.simulations.mean,
            model_calls_mean: a.model_calls.mean,
            model_calls_std: a.model_calls.std,
            affordance_calls_mean: a.affordance_calls.mean,
            root_branching_mean: a.root_branching.mean,
            success_rate: a.success_rate,
        }
    }
}

impl Table2Row {
    pub fn from_aggregate(a: &Aggregate, hash: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.to_string(),
            method: a.method.clone(),
            num_blocks: a.num_blocks,
            seeds: a.seeds,
            steps_to_completion: a.steps_to_completion.clone(),
            success_rate: a.success_rate,
            online_reward_mean: a.online_reward.mean,
            online_reward_std: a.online_reward.std,
            avg_leaf_node_score: a.avg_leaf_node_score.mean,
            avg_tree_score: a.avg_tree_score.mean,
            avg_accumulated_reward: a.avg_accumulated_reward.mean,
        }
    }
}

impl Fig3Row {
    pub fn from_aggregate(a: &Aggregate, hash: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_hash: hash.to_string(),
            accuracy: a.accuracy.unwrap_or(f64::NAN),
            num_blocks: a.num_blocks,
            seeds: a.seeds,
            success_rate: a.success_rate,
            steps_to_completion: a.steps_to_completion.clone(),
            online_reward_mean: a.online_reward.mean,
            online_reward_std: a.online_reward.std,
            mc_score_mean: a.mc_score.mean,
        }
    }
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, HarnessError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn table_csv(experiment: Experiment, aggregates: &[Aggregate], hash: &str) -> Result<String, HarnessError> {
    match experiment {
        Experiment::Table2 => to_csv(aggregates.iter().map(|a| Table2Row::from_aggregate(a, hash))),
        _ => to_csv(aggregates.iter().map(|a| Table1Row::from_aggregate(a, hash))),
    }
}

pub(crate) fn fig3_csv(aggregates: &[Aggregate], hash: &str) -> Result<String, HarnessError> {
    to_csv(aggregates.iter().map(|a| Fig3Row::from_aggregate(a, hash)))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|item| serde_json::to_string(item).expect("record serializes") + "\n")
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(contents.as_bytes()).map_err(io)
}

/// Writes `aggregate.csv` and `records.jsonl` for table runs and
/// `verify_report.jsonl` for verifier runs.
pub fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        context: format!("creating {}", dir.display()),
        source,
    })?;
    if outcome.experiment.is_verifier() {
        return write_file(&dir.join(VERIFY_FILE), &jsonl(&outcome.verify));
    }
    if let Some(csv) = &outcome.aggregate_csv {
        write_file(&dir.join(AGGREGATE_FILE), csv)?;
    }
    write_file(&dir.join(RECORDS_FILE), &jsonl(&outcome.records))
}
