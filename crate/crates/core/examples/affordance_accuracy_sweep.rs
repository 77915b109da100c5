//! Success rate of a perfect world model as its affordances get noisier.

use affordplan::harness::{run_fig3_sweep, Experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig {
        experiment: Experiment::Fig3Sweep,
        seeds: (0..20).collect(),
        ..ExperimentConfig::default()
    };
    let outcome = run_fig3_sweep(&config)?;
    println!("accuracy  success  mean reward");
    for &accuracy in &config.sweep.accuracies {
        let runs: Vec<_> = outcome.records.iter().filter(|r| r.accuracy == Some(accuracy)).collect();
        let success = runs.iter().filter(|r| r.completed()).count() as f64 / runs.len() as f64;
        let reward = runs.iter().map(|r| r.report.online_cumulative_reward).sum::<f64>() / runs.len() as f64;
        println!("{accuracy:>8.2}  {success:>7.2}  {reward:>11.3}");
    }
    Ok(())
}
