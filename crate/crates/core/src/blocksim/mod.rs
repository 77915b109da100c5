//! Discrete tabletop blocks world.
//!
//! A pick-and-place option moves a clear block onto a target cell, landing on
//! top of whatever is already there. Invalid options are absorbed as no-ops so
//! that a planner without affordance knowledge can still try them.

mod config;
mod state;
mod text;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use config::{init_state, ConfigError, TaskConfig};
pub use state::{Block, Bounds, Cell, Color, State, StateError, UnknownColor};
pub use text::{parse_state_text, serialize_state_text, ParseError};

/// Reward for reaching a goal state.
pub const TERMINAL_REWARD: f64 = 10.0;

/// Pick up the block of `color` and place it at `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Action {
    pub color: Color,
    pub target: Cell,
}

impl Action {
    pub const fn new(color: Color, target: Cell) -> Self {
        Self { color, target }
    }
}

/// Renders in the same grammar the text bridge parses:
/// `move red block to (3, 4)`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "move {} block to {}", self.color, self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: State,
    pub reward: f64,
    pub done: bool,
}

/// Ground-truth dynamics and reward for one workspace configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlocksWorld {
    pub bounds: Bounds,
    /// Maximum pairwise (x, y) distance for the goal, in grid units.
    pub close_threshold: f64,
}

impl BlocksWorld {
    pub fn new(bounds: Bounds, close_threshold: f64) -> Self {
        Self {
            bounds,
            close_threshold,
        }
    }

    pub fn from_config(config: &TaskConfig) -> Self {
        Self::new(config.bounds(), config.close_threshold)
    }

    /// Whether `action` actually relocates a block in `state`.
    pub fn is_effective(&self, state: &State, action: &Action) -> bool {
        let Some(block) = state.block(action.color) else {
            return false;
        };
        self.bounds.contains(action.target)
            && state.block_above(action.color).is_none()
            && block.pos != action.target
    }

    pub fn transition(&self, state: &State, action: &Action) -> StepResult {
        let next_state = if self.is_effective(state, action) {
            state.with_block_moved(action.color, action.target)
        } else {
            state.clone()
        };
        let reward = self.reward(&next_state);
        StepResult {
            done: reward >= TERMINAL_REWARD,
            next_state,
            reward,
        }
    }

    /// `+10` once every pair of blocks is within `close_threshold`; otherwise
    /// the negated mean pairwise distance scaled by the workspace diagonal,
    /// which lies in `(-1, 0]`.
    pub fn reward(&self, state: &State) -> f64 {
        let cells: Vec<Cell> = state.blocks().iter().map(|b| b.pos).collect();
        let mut total = 0.0;
        let mut pairs = 0usize;
        let mut all_close = true;
        for (i, a) in cells.iter().enumerate() {
            for b in &cells[i + 1..] {
                let d = a.distance(*b);
                all_close &= d <= self.close_threshold + 1e-9;
                total += d;
                pairs += 1;
            }
        }
        if all_close {
            return TERMINAL_REWARD;
        }
        let diagonal = self.bounds.diagonal();
        -(total / pairs as f64) / diagonal
    }

    pub fn is_terminal(&self, state: &State) -> bool {
        self.reward(state) >= TERMINAL_REWARD
    }

    /// Finite target set considered at `state`: every block position, the
    /// 8-neighborhood of each block and the four workspace corners, in cell
    /// order without duplicates.
    pub fn candidate_targets(&self, state: &State) -> Vec<Cell> {
        let mut targets = BTreeSet::new();
        for block in state.blocks() {
            let (x, y) = (block.pos.x as i64, block.pos.y as i64);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 {
                        let cell = Cell::new(nx as u32, ny as u32);
                        if self.bounds.contains(cell) {
                            targets.insert(cell);
                        }
                    }
                }
            }
        }
        targets.extend(self.bounds.corners());
        targets.into_iter().collect()
    }

    /// Every color paired with every candidate target, valid or not.
    pub fn candidate_actions(&self, state: &State) -> Vec<Action> {
        let targets = self.candidate_targets(state);
        state
            .colors()
            .flat_map(|color| targets.iter().map(move |&t| Action::new(color, t)))
            .collect()
    }

    /// Candidate actions that satisfy the movability and placement rules: the
    /// block is present with nothing on top, and the target is either a free
    /// cell or the exact cell of another stack. A block's own cell is excluded
    /// because the move would leave the scene unchanged.
    pub fn oracle_affordances(&self, state: &State) -> Vec<Action> {
        self.candidate_actions(state)
            .into_iter()
            .filter(|a| self.is_effective(state, a))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> BlocksWorld {
        BlocksWorld::new(Bounds::new(10, 10), 2.0)
    }

    fn stacked() -> State {
        State::new(
            Bounds::new(10, 10),
            [
                (Color::Red, Cell::new(2, 2), 0),
                (Color::Blue, Cell::new(2, 2), 1),
                (Color::Green, Cell::new(7, 7), 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn covered_block_cannot_move() {
        let s = stacked();
        let r = world().transition(&s, &Action::new(Color::Red, Cell::new(5, 5)));
        assert_eq!(r.next_state, s);
    }

    #[test]
    fn absent_color_is_a_noop() {
        let s = stacked();
        let r = world().transition(&s, &Action::new(Color::Yellow, Cell::new(5, 5)));
        assert_eq!(r.next_state, s);
    }

    #[test]
    fn block_lands_on_top_of_target_stack() {
        let s = stacked();
        let r = world().transition(&s, &Action::new(Color::Green, Cell::new(2, 2)));
        let green = r.next_state.block(Color::Green).unwrap();
        assert_eq!((green.pos, green.height), (Cell::new(2, 2), 2));
        assert!(r.done);
        assert_eq!(r.reward, TERMINAL_REWARD);
    }

    #[test]
    fn moving_next_to_partner_completes_two_block_task() {
        let s = State::new(
            Bounds::new(10, 10),
            [(Color::Red, Cell::new(0, 0), 0), (Color::Green, Cell::new(6, 6), 0)],
        )
        .unwrap();
        let r = world().transition(&s, &Action::new(Color::Red, Cell::new(5, 6)));
        assert!(r.done);
        assert_eq!(r.reward, 10.0);
    }

    #[test]
    fn reward_cases() {
        let w = world();
        let single = State::new(Bounds::new(10, 10), [(Color::Red, Cell::new(4, 4), 0)]).unwrap();
        assert_eq!(w.reward(&single), TERMINAL_REWARD);

        let corners = State::new(
            Bounds::new(10, 10),
            [(Color::Red, Cell::new(0, 0), 0), (Color::Green, Cell::new(9, 9), 0)],
        )
        .unwrap();
        // Mean pairwise distance is the full diagonal sqrt(162).
        assert!((w.reward(&corners) + 1.0).abs() < 1e-12);

        let close = State::new(
            Bounds::new(10, 10),
            [(Color::Red, Cell::new(0, 0), 0), (Color::Green, Cell::new(1, 1), 0)],
        )
        .unwrap();
        assert_eq!(w.reward(&close), TERMINAL_REWARD);
    }

    #[test]
    fn shaped_reward_matches_hand_computation() {
        let s = State::new(
            Bounds::new(10, 10),
            [
                (Color::Red, Cell::new(0, 0), 0),
                (Color::Green, Cell::new(3, 4), 0),
                (Color::Blue, Cell::new(0, 8), 0),
            ],
        )
        .unwrap();
        // distances 5, 8, sqrt(9 + 16) = 5
        let expected = -(18.0 / 3.0) / 162f64.sqrt();
        assert!((world().reward(&s) - expected).abs() < 1e-12);
    }

    #[test]
    fn covered_block_has_no_affordances() {
        let s = stacked();
        let afforded = world().oracle_affordances(&s);
        assert!(afforded.iter().all(|a| a.color != Color::Red));
        assert!(afforded.iter().any(|a| a.color == Color::Blue));
    }

    #[test]
    fn candidate_targets_include_corners_and_neighbourhoods() {
        let s = State::new(Bounds::new(10, 10), [(Color::Red, Cell::new(5, 5), 0)]).unwrap();
        let t = world().candidate_targets(&s);
        assert_eq!(t.len(), 9 + 4);
        assert!(t.contains(&Cell::new(9, 9)));
        let edge = State::new(Bounds::new(10, 10), [(Color::Red, Cell::new(0, 0), 0)]).unwrap();
        // 4 in-bounds neighbourhood cells, (0, 0) doubles as a corner.
        assert_eq!(world().candidate_targets(&edge).len(), 4 + 3);
    }

    #[test]
    fn action_text_grammar() {
        assert_eq!(
            Action::new(Color::Red, Cell::new(3, 4)).to_string(),
            "move red block to (3, 4)"
        );
    }
}
