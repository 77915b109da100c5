//! World-model and affordance-model interfaces, with the simulator-backed
//! oracles and seeded noisy stand-ins used when no language model is wired in.
//!
//! Noise is keyed on the query, not on call order: every call derives its own
//! RNG from `(seed, state, action)` (or `(seed, state, m)`), so the same query
//! always gets the same answer and concurrent callers cannot perturb each
//! other.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksim::{serialize_state_text, Action, BlocksWorld, Cell, State};
use crate::seeding::{derive_seed, rng_from_seed, stable_hash};

/// Affordances requested per query when the caller does not say otherwise.
pub const DEFAULT_AFFORDANCE_COUNT: usize = 8;

/// Predicts the state reached by executing an option.
pub trait WorldModel: Send + Sync {
    fn predict_next(&self, state: &State, action: &Action) -> State;
    /// Number of `predict_next` invocations so far.
    fn call_count(&self) -> u64;
}

/// Proposes up to `m` afforded options for a state.
pub trait AffordanceModel: Send + Sync {
    /// At most `m` distinct actions in canonical (color, target) order.
    fn afforded(&self, state: &State, m: usize) -> Vec<Action>;
    fn call_count(&self) -> u64;
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

fn check_unit(name: &'static str, value: f64) -> Result<(), ParamError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ParamError::OutOfRange { name, value })
    }
}

fn state_key(state: &State) -> u64 {
    stable_hash(serialize_state_text(state).as_bytes())
}

fn action_key(action: &Action) -> u64 {
    stable_hash(action.to_string().as_bytes())
}

#[derive(Debug, Default)]
struct Counter(AtomicU64);

impl Counter {
    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// The simulator used as a perfect dynamics model.
#[derive(Debug)]
pub struct OracleWorld {
    world: BlocksWorld,
    calls: Counter,
}

pub fn oracle_world(world: BlocksWorld) -> OracleWorld {
    OracleWorld {
        world,
        calls: Counter::default(),
    }
}

impl WorldModel for OracleWorld {
    fn predict_next(&self, state: &State, action: &Action) -> State {
        self.calls.bump();
        self.world.transition(state, action).next_state
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyWorldParams {
    pub corruption_rate: f64,
    pub seed: u64,
}

impl NoisyWorldParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check_unit("corruption_rate", self.corruption_rate)
    }
}

/// Returns the true successor, except that with probability `corruption_rate`
/// one clear block is teleported to a random empty table cell: a plausible
/// but wrong prediction.
#[derive(Debug)]
pub struct NoisyWorld {
    world: BlocksWorld,
    params: NoisyWorldParams,
    calls: Counter,
}

pub fn noisy_world(world: BlocksWorld, params: NoisyWorldParams) -> Result<NoisyWorld, ParamError> {
    params.validate()?;
    Ok(NoisyWorld {
        world,
        params,
        calls: Counter::default(),
    })
}

impl NoisyWorld {
    /// Whether the query `(state, action)` falls in the corrupted fraction.
    pub fn is_corrupted(&self, state: &State, action: &Action) -> bool {
        let mut rng = self.query_rng(state, action);
        rng.random_bool(self.params.corruption_rate)
    }

    fn query_rng(&self, state: &State, action: &Action) -> rand_chacha::ChaCha8Rng {
        let seed = derive_seed(self.params.seed, "noisy-world", state_key(state));
        rng_from_seed(derive_seed(seed, "action", action_key(action)))
    }
}

impl WorldModel for NoisyWorld {
    fn predict_next(&self, state: &State, action: &Action) -> State {
        self.calls.bump();
        let truth = self.world.transition(state, action).next_state;
        let mut rng = self.query_rng(state, action);
        if !rng.random_bool(self.params.corruption_rate) {
            return truth;
        }
        let bounds = truth.bounds();
        let free: Vec<Cell> = (0..bounds.height)
            .flat_map(|y| (0..bounds.width).map(move |x| Cell::new(x, y)))
            .filter(|&c| !truth.is_occupied(c))
            .collect();
        let clear: Vec<_> = truth
            .colors()
            .filter(|&c| truth.is_clear(c))
            .collect();
        match (free.choose(&mut rng), clear.choose(&mut rng)) {
            (Some(&cell), Some(&color)) => truth.with_block_moved(color, cell),
            _ => truth,
        }
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

/// Ranks afforded actions for truncation to `m`. Placements onto an existing
/// stack come before placements on free cells, following the order in which
/// the placement rules are stated; ties fall back to canonical order.
fn selection_key(state: &State, action: &Action) -> (u8, Action) {
    let onto_stack = state.is_occupied(action.target);
    (u8::from(!onto_stack), *action)
}

/// Programmatic ground-truth affordances.
#[derive(Debug)]
pub struct OracleAffordance {
    world: BlocksWorld,
    calls: Counter,
}

pub fn oracle_affordance(world: BlocksWorld) -> OracleAffordance {
    OracleAffordance {
        world,
        calls: Counter::default(),
    }
}

impl OracleAffordance {
    fn select(&self, state: &State, m: usize) -> Vec<Action> {
        let mut all = self.world.oracle_affordances(state);
        all.sort_by_key(|a| selection_key(state, a));
        all.truncate(m);
        all.sort();
        all
    }
}

impl AffordanceModel for OracleAffordance {
    fn afforded(&self, state: &State, m: usize) -> Vec<Action> {
        self.calls.bump();
        self.select(state, m)
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyAffordanceParams {
    /// Probability that a query is answered exactly like the oracle.
    pub accuracy: f64,
    /// Per-action probability of losing a true affordance on a bad answer.
    pub drop_rate: f64,
    /// Per-action probability of including a non-afforded candidate on a bad answer.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl NoisyAffordanceParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        check_unit("accuracy", self.accuracy)?;
        check_unit("drop_rate", self.drop_rate)?;
        check_unit("spurious_rate", self.spurious_rate)
    }
}

#[derive(Debug)]
pub struct NoisyAffordance {
    oracle: OracleAffordance,
    params: NoisyAffordanceParams,
    calls: Counter,
}

pub fn noisy_affordance(
    world: BlocksWorld,
    params: NoisyAffordanceParams,
) -> Result<NoisyAffordance, ParamError> {
    params.validate()?;
    Ok(NoisyAffordance {
        oracle: oracle_affordance(world),
        params,
        calls: Counter::default(),
    })
}

impl AffordanceModel for NoisyAffordance {
    fn afforded(&self, state: &State, m: usize) -> Vec<Action> {
        self.calls.bump();
        let seed = derive_seed(self.params.seed, "noisy-affordance", state_key(state));
        let mut rng = rng_from_seed(derive_seed(seed, "m", m as u64));
        if rng.random_bool(self.params.accuracy) {
            return self.oracle.select(state, m);
        }

        let world = &self.oracle.world;
        let truth: BTreeSet<Action> = world.oracle_affordances(state).into_iter().collect();
        let mut answer: Vec<Action> = Vec::new();
        for action in world.candidate_actions(state) {
            let keep = if truth.contains(&action) {
                !rng.random_bool(self.params.drop_rate)
            } else {
                rng.random_bool(self.params.spurious_rate)
            };
            if keep {
                answer.push(action);
            }
        }
        answer.shuffle(&mut rng);
        answer.truncate(m);
        answer.sort();
        answer
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}
