use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::{Bounds, Cell, Color, State};
use super::BlocksWorld;
use crate::seeding::rng_from_seed;

/// Attempts at drawing a non-goal start scene before accepting a goal scene.
const MAX_START_DRAWS: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{blocks} blocks do not fit in a {width}x{height} workspace")]
    WorkspaceTooSmall { blocks: usize, width: u32, height: u32 },
    #[error("at most {max} distinct block colors are available, {requested} requested")]
    TooManyBlocks { requested: usize, max: usize },
    #[error("invalid task config: {0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing task config: {0}")]
    Toml(#[from] toml::de::Error),
}

/// One tabletop rearrangement task. Loadable from TOML, e.g.
///
/// ```toml
/// num_blocks = 3
/// close_threshold = 2.0
/// max_steps = 10
/// seed = 7
/// width = 10
/// height = 10
/// ```
///
/// Every key is optional and falls back to the [`Default`] value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub num_blocks: usize,
    pub close_threshold: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            num_blocks: 3,
            close_threshold: 2.0,
            max_steps: 10,
            seed: 0,
            width: 10,
            height: 10,
        }
    }
}

impl TaskConfig {
    pub fn with_blocks(num_blocks: usize, seed: u64) -> Self {
        Self {
            num_blocks,
            seed,
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_blocks < 2 {
            return Err(ConfigError::Invalid("num_blocks must be at least 2".into()));
        }
        if self.close_threshold.is_nan() || self.close_threshold <= 0.0 {
            return Err(ConfigError::Invalid("close_threshold must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ConfigError::Invalid("workspace must be non-empty".into()));
        }
        if self.num_blocks as u64 > self.bounds().cell_count() {
            return Err(ConfigError::WorkspaceTooSmall {
                blocks: self.num_blocks,
                width: self.width,
                height: self.height,
            });
        }
        if self.num_blocks > Color::ASSIGNMENT_ORDER.len() {
            return Err(ConfigError::TooManyBlocks {
                requested: self.num_blocks,
                max: Color::ASSIGNMENT_ORDER.len(),
            });
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: TaskConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Scatters `num_blocks` blocks over distinct table cells. Draws that already
/// satisfy the goal are redrawn (up to a fixed number of attempts) so that
/// experiments start from an unsolved scene.
pub fn init_state(config: &TaskConfig) -> Result<State, ConfigError> {
    config.validate()?;
    let bounds = config.bounds();
    let world = BlocksWorld::from_config(config);
    let mut rng = rng_from_seed(config.seed);
    let cells = bounds.cell_count() as usize;

    let mut state = None;
    for _ in 0..MAX_START_DRAWS {
        let picks = sample(&mut rng, cells, config.num_blocks);
        let candidate = State::new(
            bounds,
            Color::ASSIGNMENT_ORDER
                .iter()
                .zip(picks.iter())
                .map(|(&color, idx)| {
                    let cell = Cell::new(idx as u32 % bounds.width, idx as u32 / bounds.width);
                    (color, cell, 0)
                }),
        )
        .expect("distinct in-bounds cells form a valid scene");
        let solved = world.is_terminal(&candidate);
        state = Some(candidate);
        if !solved {
            break;
        }
    }
    Ok(state.expect("at least one draw"))
}
