//! Recovering a transition probability from a goal-conditioned agent.
//!
//! For each `k` in `1..=n` the agent faces a composite task whose first
//! decision is whether "at most `k` of `n` attempts succeed" is the better
//! bet. A near-optimal agent picks `o1` once the binomial CDF at `k` passes
//! one half, so the switch point of its answers sits at the median of
//! `Bin(n, p)`. Fitting a step to the answers and dividing by `n` estimates
//! `p`, within `φ` plus a tail that decays geometrically in `n`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::{derive_seed, rng_from_seed};

/// Default extra error margin on top of `φ`.
pub const DEFAULT_EPS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
}

fn out_of_range(msg: String) -> ExtractError {
    ExtractError::OutOfRange(msg)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Natural log of the binomial coefficient.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial probabilities `P(X = k)` for every `k` in `0..=n`, computed in log
/// space.
pub fn binom_pmf_all(n: u64, p: f64) -> Result<Vec<f64>, ExtractError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(out_of_range(format!("p = {p} outside [0, 1]")));
    }
    let mut ln_fact = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    ln_fact.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        ln_fact.push(acc);
    }
    let (ln_p, ln_q) = (p.ln(), (1.0 - p).ln());
    Ok((0..=n)
        .map(|k| {
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            let (ki, ri) = (k as usize, (n - k) as usize);
            let ln = ln_fact[n as usize] - ln_fact[ki] - ln_fact[ri] + k as f64 * ln_p + (n - k) as f64 * ln_q;
            ln.exp()
        })
        .collect())
}

/// Cumulative probabilities `P(X <= k)` for every `k` in `0..=n`. The upper
/// half is summed from the right tail so values near one stay accurate.
pub fn binom_cdf_all(n: u64, p: f64) -> Result<Vec<f64>, ExtractError> {
    let pmf = binom_pmf_all(n, p)?;
    let len = pmf.len();
    let mut left = vec![0.0; len];
    let mut acc = 0.0;
    for k in 0..len {
        acc += pmf[k];
        left[k] = acc;
    }
    let mut right = vec![0.0; len];
    let mut tail = 0.0;
    for k in (0..len).rev() {
        right[k] = tail;
        tail += pmf[k];
    }
    Ok((0..len)
        .map(|k| if left[k] <= 0.5 { left[k] } else { (1.0 - right[k]).clamp(0.0, 1.0) })
        .collect())
}

/// `(P(X = k), P(X <= k))` for `X ~ Bin(n, p)`.
pub fn binom_pmf_cdf(n: u64, k: u64, p: f64) -> Result<(f64, f64), ExtractError> {
    if k > n {
        return Err(out_of_range(format!("k = {k} exceeds n = {n}")));
    }
    let pmf = binom_pmf_all(n, p)?;
    let cdf = binom_cdf_all(n, p)?;
    Ok((pmf[k as usize], cdf[k as usize]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    /// Number of repeated attempts `n`.
    pub depth_n: u64,
    pub zeta: f64,
    pub delta: f64,
    pub p_true: f64,
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.depth_n == 0 {
            return Err(out_of_range("depth_n must be at least 1".into()));
        }
        if !(0.0..0.5).contains(&self.zeta) {
            return Err(out_of_range(format!("zeta = {} outside [0, 0.5)", self.zeta)));
        }
        if !(0.0..0.5).contains(&self.delta) {
            return Err(out_of_range(format!("delta = {} outside [0, 0.5)", self.delta)));
        }
        if !(self.p_true > 0.0 && self.p_true < 1.0) {
            return Err(out_of_range(format!("p_true = {} outside (0, 1)", self.p_true)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    O1,
    O2,
}

impl Choice {
    fn flipped(self) -> Self {
        match self {
            Choice::O1 => Choice::O2,
            Choice::O2 => Choice::O1,
        }
    }

    /// `o1 -> 0`, `o2 -> 1`.
    pub fn indicator(self) -> u8 {
        match self {
            Choice::O1 => 0,
            Choice::O2 => 1,
        }
    }
}

/// How the agent answers inside the `ζ` band where both choices meet the
/// regret budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentVariant {
    /// `o1` iff `P(X <= k) >= P(X > k)`.
    Compliant,
    /// `o1` wherever it is allowed, pulling the fit toward smaller `k`.
    BandAdversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskQuery {
    pub k: u64,
    pub n: u64,
}

/// Simulated agent with the CDF of its task family precomputed.
#[derive(Debug, Clone)]
pub struct Agent {
    params: AgentParams,
    variant: AgentVariant,
    cdf: Vec<f64>,
}

impl Agent {
    pub fn new(params: AgentParams, variant: AgentVariant) -> Result<Self, ExtractError> {
        params.validate()?;
        Ok(Self {
            cdf: binom_cdf_all(params.depth_n, params.p_true)?,
            params,
            variant,
        })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    /// The answer before any regret violation.
    pub fn intended(&self, k: u64) -> Choice {
        let cdf = self.cdf[k as usize];
        let o1 = match self.variant {
            AgentVariant::Compliant => cdf >= 1.0 - cdf,
            AgentVariant::BandAdversarial => cdf >= (1.0 - self.params.zeta) / 2.0,
        };
        if o1 {
            Choice::O1
        } else {
            Choice::O2
        }
    }

    /// Answers one query, flipping the intended choice with probability `δ`.
    pub fn respond<R: Rng + ?Sized>(&self, k: u64, rng: &mut R) -> Choice {
        let choice = self.intended(k);
        if self.params.delta > 0.0 && rng.random_bool(self.params.delta) {
            choice.flipped()
        } else {
            choice
        }
    }
}

pub fn agent_respond<R: Rng + ?Sized>(
    query: TaskQuery,
    params: &AgentParams,
    rng: &mut R,
) -> Result<Choice, ExtractError> {
    if query.k > query.n || query.n != params.depth_n {
        return Err(out_of_range(format!(
            "query k = {}, n = {} does not match depth {}",
            query.k, query.n, params.depth_n
        )));
    }
    Ok(Agent::new(*params, AgentVariant::Compliant)?.respond(query.k, rng))
}

/// `f(k)` for `k = 1..=n`, stored at index `k - 1`.
pub fn collect_indicators<R: Rng + ?Sized>(agent: &Agent, rng: &mut R) -> Vec<u8> {
    (1..=agent.params.depth_n).map(|k| agent.respond(k, rng).indicator()).collect()
}

/// Switch point of the best step fit: predict `1` for `k < k̂` and `0` for
/// `k >= k̂`, minimising the number of mismatches over `k̂ in 0..=n`. Ties go
/// to the smallest `k̂`. Returns `(k̂, error)`.
pub fn fit_step(f: &[u8]) -> (u64, u64) {
    // error(k̂) = #{k < k̂ : f = 0} + #{k >= k̂ : f = 1}
    let ones: u64 = f.iter().map(|&v| u64::from(v)).sum();
    let mut best = (0u64, ones);
    let mut zeros_below = 0u64;
    let mut ones_below = 0u64;
    for k_hat in 1..=f.len() as u64 {
        // Shift k = k_hat - 1 from the ">= k̂" side to the "< k̂" side.
        if k_hat >= 2 {
            match f[(k_hat - 2) as usize] {
                0 => zeros_below += 1,
                _ => ones_below += 1,
            }
        }
        let error = zeros_below + (ones - ones_below);
        if error < best.1 {
            best = (k_hat, error);
        }
    }
    best
}

/// `φ = ½ √((1 + ζ) / (n (1 − ζ)))`.
pub fn phi(n: u64, zeta: f64) -> f64 {
    0.5 * ((1.0 + zeta) / (n as f64 * (1.0 - zeta))).sqrt()
}

/// `ρ = 2 √(δ (1 − δ))`.
pub fn rho(delta: f64) -> f64 {
    2.0 * (delta * (1.0 - delta)).sqrt()
}

/// `ρ^(n·eps) / (1 − ρ)`, clamped to `[0, 1]`.
pub fn bound_tail(n: u64, zeta: f64, delta: f64, eps: f64) -> Result<f64, ExtractError> {
    if !(0.0..0.5).contains(&delta) {
        return Err(out_of_range(format!("delta = {delta} must lie in [0, 0.5)")));
    }
    if !(0.0..1.0).contains(&zeta) {
        return Err(out_of_range(format!("zeta = {zeta} must lie in [0, 1)")));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(out_of_range(format!("eps = {eps} must be positive")));
    }
    let r = rho(delta);
    Ok((r.powf(n as f64 * eps) / (1.0 - r)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub k_hat: u64,
    pub p_hat: f64,
    pub fit_error: u64,
    pub phi: f64,
    pub rho: f64,
    pub indicator_curve: Vec<u8>,
}

pub fn extract<R: Rng + ?Sized>(agent: &Agent, rng: &mut R) -> ExtractionResult {
    let params = agent.params;
    let curve = collect_indicators(agent, rng);
    let (k_hat, fit_error) = fit_step(&curve);
    ExtractionResult {
        k_hat,
        p_hat: k_hat as f64 / params.depth_n as f64,
        fit_error,
        phi: phi(params.depth_n, params.zeta),
        rho: rho(params.delta),
        indicator_curve: curve,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Record {
    pub p_true: f64,
    pub n: u64,
    pub zeta: f64,
    pub delta: f64,
    pub eps: f64,
    pub seeds: usize,
    pub phi: f64,
    pub rho: f64,
    pub bound: f64,
    /// Three binomial standard deviations of a frequency at `bound`.
    pub slack: f64,
    pub freq_compliant: f64,
    pub freq_band_adversarial: f64,
    /// Fraction of compliant runs with `|k̂ − np| <= 1`.
    pub median_bracket_rate: f64,
    pub pass: bool,
}

/// Product grid of agent parameters.
pub fn theorem1_grid(ps: &[f64], ns: &[u64], zetas: &[f64], deltas: &[f64]) -> Vec<AgentParams> {
    let mut grid = Vec::new();
    for &p_true in ps {
        for &depth_n in ns {
            for &zeta in zetas {
                for &delta in deltas {
                    grid.push(AgentParams {
                        depth_n,
                        zeta,
                        delta,
                        p_true,
                    });
                }
            }
        }
    }
    grid
}

/// The default verification grid.
pub fn default_theorem1_grid() -> Vec<AgentParams> {
    theorem1_grid(&[0.2, 0.5, 0.8], &[50, 200], &[0.0, 0.1], &[0.0, 0.05, 0.2])
}

/// For each grid point, runs the extraction over `seeds` independent streams
/// with both agent variants and checks the violation frequency of
/// `|p̂ − p| >= φ + eps` against the tail bound plus sampling slack.
pub fn verify_theorem1(
    grid: &[AgentParams],
    seeds: usize,
    eps: f64,
    master_seed: u64,
) -> Result<Vec<Theorem1Record>, ExtractError> {
    for params in grid {
        params.validate()?;
    }
    if seeds == 0 {
        return Err(out_of_range("seeds must be at least 1".into()));
    }
    grid.par_iter()
        .enumerate()
        .map(|(index, &params)| {
            let n = params.depth_n;
            let bound = bound_tail(n, params.zeta, params.delta, eps)?;
            let slack = 3.0 * (bound * (1.0 - bound) / seeds as f64).sqrt();
            let threshold = phi(n, params.zeta) + eps;
            let point_seed = derive_seed(master_seed, "theorem1-point", index as u64);
            let mut violations = [0usize; 2];
            let mut bracketed = 0usize;
            for (slot, variant) in [AgentVariant::Compliant, AgentVariant::BandAdversarial].into_iter().enumerate() {
                let agent = Agent::new(params, variant)?;
                for seed in 0..seeds {
                    let mut rng = rng_from_seed(derive_seed(point_seed, "seed", seed as u64));
                    let result = extract(&agent, &mut rng);
                    if (result.p_hat - params.p_true).abs() >= threshold {
                        violations[slot] += 1;
                    }
                    if variant == AgentVariant::Compliant
                        && (result.k_hat as f64 - n as f64 * params.p_true).abs() <= 1.0 + 1e-9
                    {
                        bracketed += 1;
                    }
                }
            }
            let freq = violations.map(|v| v as f64 / seeds as f64);
            Ok(Theorem1Record {
                p_true: params.p_true,
                n,
                zeta: params.zeta,
                delta: params.delta,
                eps,
                seeds,
                phi: phi(n, params.zeta),
                rho: rho(params.delta),
                bound,
                slack,
                freq_compliant: freq[0],
                freq_band_adversarial: freq[1],
                median_bracket_rate: bracketed as f64 / seeds as f64,
                pass: freq.iter().all(|&f| f <= bound + slack),
            })
        })
        .collect()
}
