use serde::{Deserialize, Serialize};

use super::{Experiment, ExperimentConfig, HarnessError, Outcome};
use crate::intent_sampler::{lemma_a1_check, synthetic_suite, theorem2_bound_check, IntentUniverse, LemmaA1Report, Theorem2Report};
use crate::seeding::derive_seed;
use crate::wm_extract::{theorem1_grid, verify_theorem1, Theorem1Record};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum VerifyDetail {
    Theorem1(Theorem1Record),
    Theorem2(Theorem2Report),
    LemmaA1(LemmaA1Report),
}

/// One line of `verify_report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRecord {
    pub config_hash: String,
    #[serde(flatten)]
    pub detail: VerifyDetail,
}

impl VerifyRecord {
    pub fn passed(&self) -> bool {
        match &self.detail {
            VerifyDetail::Theorem1(r) => r.pass,
            VerifyDetail::Theorem2(r) => r.pass,
            VerifyDetail::LemmaA1(r) => r.holds,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Verifier(e.to_string())
}

fn extraction_checks(config: &ExperimentConfig) -> Result<Vec<VerifyDetail>, HarnessError> {
    let v = &config.verify;
    let grid = theorem1_grid(&v.t1_ps, &v.t1_ns, &v.t1_zetas, &v.t1_deltas);
    let records = verify_theorem1(&grid, v.t1_seeds, v.t1_eps, config.master_seed).map_err(failed)?;
    Ok(records.into_iter().map(VerifyDetail::Theorem1).collect())
}

/// Every (n, k, L) with `1 <= k <= n / 2`.
fn restart_checks(config: &ExperimentConfig) -> Result<Vec<VerifyDetail>, HarnessError> {
    let v = &config.verify;
    let mut out = Vec::new();
    let mut index = 0;
    for &n in &v.t2_ns {
        for &k in v.t2_ks.iter().filter(|&&k| k >= 1 && 2 * k <= n) {
            let universe = IntentUniverse::prefix(n, k).map_err(failed)?;
            for &length in &v.t2_lengths {
                let tasks = synthetic_suite(&universe, length, config.master_seed);
                let seed = derive_seed(config.master_seed, "restart-check", index);
                index += 1;
                let report = theorem2_bound_check(&tasks, &universe, length, v.t2_runs, v.t2_grid_resolution, seed)
                    .map_err(failed)?;
                out.push(VerifyDetail::Theorem2(report));
            }
        }
    }
    Ok(out)
}

/// Every `2 <= n <= max_n`, `1 <= k < n`, `1 <= L <= max_length`.
fn mixture_checks(config: &ExperimentConfig) -> Result<Vec<VerifyDetail>, HarnessError> {
    let v = &config.verify;
    let mut out = Vec::new();
    for n in 2..=v.lemma_max_n {
        for k in 1..n {
            for length in 1..=v.lemma_max_length {
                let report = lemma_a1_check(n, k, length, v.lemma_grid_resolution).map_err(failed)?;
                out.push(VerifyDetail::LemmaA1(report));
            }
        }
    }
    Ok(out)
}

pub fn run_verifiers(config: &ExperimentConfig) -> Result<Outcome, HarnessError> {
    let details = match config.experiment {
        Experiment::Theorem1Verify => extraction_checks(config)?,
        Experiment::Theorem2Verify => restart_checks(config)?,
        Experiment::LemmaA1Verify => mixture_checks(config)?,
        other => return Err(HarnessError::Invalid(format!("{} is not a verifier", other.name()))),
    };
    let hash = config.config_hash();
    let verify: Vec<VerifyRecord> = details
        .into_iter()
        .map(|detail| VerifyRecord {
            config_hash: hash.clone(),
            detail,
        })
        .collect();
    Ok(Outcome {
        experiment: config.experiment,
        records: Vec::new(),
        aggregate_csv: None,
        passed: verify.iter().all(VerifyRecord::passed),
        verify,
    })
}
