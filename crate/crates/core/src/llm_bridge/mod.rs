//! World and affordance models backed by a text completion endpoint.
//!
//! Prompts are built deterministically from the serialized state, so a
//! recorded transcript ([`RecordingSource`]) can be replayed offline
//! ([`ReplaySource`]) and reproduce the same search. Unusable completions never
//! abort a search: an unparsable next state falls back to the current state
//! and an unparsable affordance list falls back to the full candidate set,
//! with each fallback counted in [`BridgeStats`].

mod client;
mod parse;
mod prompt;
pub mod stub;

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocksim::{serialize_state_text, Action, BlocksWorld, State};
use crate::model_iface::{AffordanceModel, WorldModel};

pub use client::{complete, CompletionSource, HttpCompletion, RecordingSource, ReplaySource, TranscriptEntry};
pub use parse::{parse_actions, parse_next_state, ParsedActions};
pub use prompt::{build_affordance_prompt, build_dynamics_prompt, Exemplar, PromptTemplate, FEW_SHOT_COUNT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BridgeError {
    #[error("bridge configuration: {0}")]
    Config(String),
    #[error("environment variable {var} with the endpoint token is not set")]
    MissingToken { var: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("no parsable action in completion ({dropped} rejected)")]
    EmptyParse { dropped: usize },
    #[error("replay: {0}")]
    Replay(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// Where and how to reach the completion endpoint. Loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    /// Appended to `base_url`.
    pub path: String,
    /// Name of the environment variable that holds the bearer token.
    pub auth_token_env_var: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further retry.
    pub backoff_ms: u64,
    pub model_name: String,
    pub max_tokens: u32,
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8080".into(),
            path: "/v1/completions".into(),
            auth_token_env_var: "AFFORDPLAN_LLM_TOKEN".into(),
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_ms: 250,
            model_name: "default".into(),
            max_tokens: 256,
            max_in_flight: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.timeout_ms == 0 {
            return Err(BridgeError::Config("timeout_ms must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BridgeError::Config("max_in_flight must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(BridgeError::Config(format!("unsupported base_url {}", self.base_url)));
        }
        Ok(())
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BridgeError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| BridgeError::Io(e.to_string()))?;
        let config: Self = toml::from_str(&text).map_err(|e| BridgeError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Counters shared by the bridge models.
#[derive(Debug, Default)]
pub struct BridgeStats {
    pub calls: AtomicU64,
    /// Completions that failed at the transport or endpoint level.
    pub request_failures: AtomicU64,
    /// Next-state completions that did not parse.
    pub parse_failures: AtomicU64,
    /// Affordance completions without a single usable action.
    pub affordance_failures: AtomicU64,
    /// Well-formed actions rejected by the validity filter.
    pub dropped_actions: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeStatsSnapshot {
    pub calls: u64,
    pub request_failures: u64,
    pub parse_failures: u64,
    pub affordance_failures: u64,
    pub dropped_actions: u64,
}

impl BridgeStats {
    pub fn snapshot(&self) -> BridgeStatsSnapshot {
        let get = |c: &AtomicU64| c.load(Ordering::SeqCst);
        BridgeStatsSnapshot {
            calls: get(&self.calls),
            request_failures: get(&self.request_failures),
            parse_failures: get(&self.parse_failures),
            affordance_failures: get(&self.affordance_failures),
            dropped_actions: get(&self.dropped_actions),
        }
    }

    fn bump(counter: &AtomicU64, by: u64) {
        counter.fetch_add(by, Ordering::SeqCst);
    }
}

/// World model that asks the endpoint for the next state.
pub struct LlmWorld {
    source: Arc<dyn CompletionSource>,
    template: PromptTemplate,
    stats: BridgeStats,
}

impl LlmWorld {
    pub fn new(source: Arc<dyn CompletionSource>, template: PromptTemplate) -> Self {
        Self {
            source,
            template,
            stats: BridgeStats::default(),
        }
    }

    pub fn stats(&self) -> BridgeStatsSnapshot {
        self.stats.snapshot()
    }
}

impl WorldModel for LlmWorld {
    fn predict_next(&self, state: &State, action: &Action) -> State {
        BridgeStats::bump(&self.stats.calls, 1);
        let prompt = build_dynamics_prompt(&serialize_state_text(state), &action.to_string(), &self.template);
        match self.source.complete(&prompt) {
            Ok(text) => {
                let (next, failed) = parse_next_state(&text, state);
                if failed {
                    BridgeStats::bump(&self.stats.parse_failures, 1);
                }
                next
            }
            Err(_) => {
                BridgeStats::bump(&self.stats.request_failures, 1);
                state.clone()
            }
        }
    }

    fn call_count(&self) -> u64 {
        self.stats.calls.load(Ordering::SeqCst)
    }
}

/// Affordance model that asks the endpoint for `m` actions.
pub struct LlmAffordance {
    source: Arc<dyn CompletionSource>,
    template: PromptTemplate,
    world: BlocksWorld,
    stats: BridgeStats,
}

impl LlmAffordance {
    pub fn new(source: Arc<dyn CompletionSource>, template: PromptTemplate, world: BlocksWorld) -> Self {
        Self {
            source,
            template,
            world,
            stats: BridgeStats::default(),
        }
    }

    pub fn stats(&self) -> BridgeStatsSnapshot {
        self.stats.snapshot()
    }
}

impl AffordanceModel for LlmAffordance {
    fn afforded(&self, state: &State, m: usize) -> Vec<Action> {
        BridgeStats::bump(&self.stats.calls, 1);
        let prompt = build_affordance_prompt(&serialize_state_text(state), &self.template, m);
        let parsed = match self.source.complete(&prompt) {
            Ok(text) => parse_actions(&text, state),
            Err(e) => {
                BridgeStats::bump(&self.stats.request_failures, 1);
                Err(e)
            }
        };
        let mut actions = match parsed {
            Ok(p) => {
                BridgeStats::bump(&self.stats.dropped_actions, p.dropped as u64);
                p.actions
            }
            Err(e) => {
                if let BridgeError::EmptyParse { dropped } = e {
                    BridgeStats::bump(&self.stats.dropped_actions, dropped as u64);
                }
                BridgeStats::bump(&self.stats.affordance_failures, 1);
                self.world.candidate_actions(state)
            }
        };
        actions.truncate(m);
        actions
    }

    fn call_count(&self) -> u64 {
        self.stats.calls.load(Ordering::SeqCst)
    }
}
