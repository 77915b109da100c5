//! Recovers an agent's success probability from yes/no answers alone, for a
//! compliant agent and one that exploits its tolerance band.

use affordplan::seeding::rng_from_seed;
use affordplan::wm_extract::{bound_tail, extract, Agent, AgentParams, AgentVariant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = AgentParams {
        depth_n: 200,
        zeta: 0.1,
        delta: 0.05,
        p_true: 0.35,
    };
    let eps = 0.05;
    println!(
        "p = {}, n = {}, P(|p_hat - p| >= phi + {eps}) <= {:.3e}",
        params.p_true,
        params.depth_n,
        bound_tail(params.depth_n, params.zeta, params.delta, eps)?
    );
    for variant in [AgentVariant::Compliant, AgentVariant::BandAdversarial] {
        let agent = Agent::new(params, variant)?;
        let mut rng = rng_from_seed(42);
        let runs: Vec<_> = (0..500).map(|_| extract(&agent, &mut rng)).collect();
        let phi = runs[0].phi;
        let misses = runs.iter().filter(|r| (r.p_hat - params.p_true).abs() >= phi + eps).count();
        let mean = runs.iter().map(|r| r.p_hat).sum::<f64>() / runs.len() as f64;
        println!("{variant:?}: mean p_hat {mean:.4}, phi {phi:.4}, {misses}/500 outside phi + eps");
    }
    Ok(())
}
