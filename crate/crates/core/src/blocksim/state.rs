use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Block colors. Variants are declared in name order so the derived `Ord`
/// is the canonical (alphabetical) ordering used for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Black,
    Blue,
    Brown,
    Cyan,
    Gray,
    Green,
    Orange,
    Pink,
    Purple,
    Red,
    White,
    Yellow,
}

impl Color {
    /// Order in which colors are handed out to freshly generated scenes.
    pub const ASSIGNMENT_ORDER: [Color; 12] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Orange,
        Color::Purple,
        Color::Pink,
        Color::Cyan,
        Color::Brown,
        Color::Gray,
        Color::White,
        Color::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Black => "black",
            Color::Blue => "blue",
            Color::Brown => "brown",
            Color::Cyan => "cyan",
            Color::Gray => "gray",
            Color::Green => "green",
            Color::Orange => "orange",
            Color::Pink => "pink",
            Color::Purple => "purple",
            Color::Red => "red",
            Color::White => "white",
            Color::Yellow => "yellow",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown color `{0}`")]
pub struct UnknownColor(pub String);

impl FromStr for Color {
    type Err = UnknownColor;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Color::ASSIGNMENT_ORDER
            .iter()
            .copied()
            .find(|c| c.name() == lower)
            .ok_or_else(|| UnknownColor(s.to_string()))
    }
}

/// A grid cell on the table surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Cell) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        (dx * dx + dy * dy).sqrt()
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Workspace dimensions: valid cells are `[0, width) x [0, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub width: u32,
    pub height: u32,
}

impl Bounds {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains(self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn cell_count(self) -> u64 {
        self.width as u64 * self.height as u64
    }

    /// Largest distance between two cells of the workspace.
    pub fn diagonal(self) -> f64 {
        Cell::new(0, 0).distance(Cell::new(
            self.width.saturating_sub(1),
            self.height.saturating_sub(1),
        ))
    }

    pub fn corners(self) -> [Cell; 4] {
        let (w, h) = (self.width.saturating_sub(1), self.height.saturating_sub(1));
        [Cell::new(0, 0), Cell::new(w, 0), Cell::new(0, h), Cell::new(w, h)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub id: u8,
    pub color: Color,
    pub pos: Cell,
    /// Stack level, 0 is the table.
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("duplicate color {0}")]
    DuplicateColor(Color),
    #[error("{color} block at {cell} is outside the {width}x{height} workspace")]
    OutOfBounds {
        color: Color,
        cell: Cell,
        width: u32,
        height: u32,
    },
    #[error("{color} block shares cell {cell} height {height} with another block")]
    Collision { color: Color, cell: Cell, height: u32 },
    #[error("{color} block at {cell} height {height} has nothing underneath")]
    Floating { color: Color, cell: Cell, height: u32 },
}

impl StateError {
    pub fn color(&self) -> Color {
        match *self {
            StateError::DuplicateColor(color)
            | StateError::OutOfBounds { color, .. }
            | StateError::Collision { color, .. }
            | StateError::Floating { color, .. } => color,
        }
    }
}

/// A tabletop configuration. Blocks are kept sorted by color and their ids
/// are their index in that order, so equal scenes compare, hash and
/// serialize identically regardless of construction order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    bounds: Bounds,
    blocks: Vec<Block>,
}

impl State {
    pub fn new(
        bounds: Bounds,
        blocks: impl IntoIterator<Item = (Color, Cell, u32)>,
    ) -> Result<Self, StateError> {
        let mut placed: Vec<(Color, Cell, u32)> = blocks.into_iter().collect();
        placed.sort_by_key(|&(color, _, _)| color);

        let mut seen = BTreeSet::new();
        for &(color, cell, _) in &placed {
            if !seen.insert(color) {
                return Err(StateError::DuplicateColor(color));
            }
            if !bounds.contains(cell) {
                return Err(StateError::OutOfBounds {
                    color,
                    cell,
                    width: bounds.width,
                    height: bounds.height,
                });
            }
        }

        let mut occupied = BTreeSet::new();
        for &(color, cell, height) in &placed {
            if !occupied.insert((cell, height)) {
                return Err(StateError::Collision { color, cell, height });
            }
        }
        for &(color, cell, height) in &placed {
            if height > 0 && !occupied.contains(&(cell, height - 1)) {
                return Err(StateError::Floating { color, cell, height });
            }
        }

        let blocks = placed
            .into_iter()
            .enumerate()
            .map(|(i, (color, pos, height))| Block {
                id: i as u8,
                color,
                pos,
                height,
            })
            .collect();
        Ok(Self { bounds, blocks })
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    /// Blocks in canonical (color) order.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, color: Color) -> Option<&Block> {
        self.blocks.iter().find(|b| b.color == color)
    }

    pub fn colors(&self) -> impl Iterator<Item = Color> + '_ {
        self.blocks.iter().map(|b| b.color)
    }

    /// Number of blocks stacked at `cell`.
    pub fn stack_size(&self, cell: Cell) -> u32 {
        self.blocks.iter().filter(|b| b.pos == cell).count() as u32
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.blocks.iter().any(|b| b.pos == cell)
    }

    /// The block resting directly on `color`, if any.
    pub fn block_above(&self, color: Color) -> Option<&Block> {
        let below = self.block(color)?;
        self.blocks
            .iter()
            .find(|b| b.pos == below.pos && b.height == below.height + 1)
    }

    pub fn is_clear(&self, color: Color) -> bool {
        self.block(color).is_some() && self.block_above(color).is_none()
    }

    /// Returns a copy with `color` lifted from its stack and dropped on top of
    /// whatever is at `target`. The caller checks that the move is legal.
    pub(crate) fn with_block_moved(&self, color: Color, target: Cell) -> State {
        let landing = self
            .blocks
            .iter()
            .filter(|b| b.pos == target && b.color != color)
            .count() as u32;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                if b.color == color {
                    Block {
                        pos: target,
                        height: landing,
                        ..*b
                    }
                } else {
                    *b
                }
            })
            .collect();
        State {
            bounds: self.bounds,
            blocks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> Bounds {
        Bounds::new(10, 10)
    }

    #[test]
    fn construction_order_does_not_matter() {
        let a = State::new(
            b(),
            [
                (Color::Red, Cell::new(1, 1), 0),
                (Color::Blue, Cell::new(2, 2), 0),
                (Color::Green, Cell::new(1, 1), 1),
            ],
        )
        .unwrap();
        let c = State::new(
            b(),
            [
                (Color::Green, Cell::new(1, 1), 1),
                (Color::Red, Cell::new(1, 1), 0),
                (Color::Blue, Cell::new(2, 2), 0),
            ],
        )
        .unwrap();
        assert_eq!(a, c);
        assert_eq!(a.blocks()[0].color, Color::Blue);
        assert_eq!(a.blocks()[0].id, 0);
    }

    #[test]
    fn rejects_invalid_scenes() {
        let dup = State::new(
            b(),
            [(Color::Red, Cell::new(0, 0), 0), (Color::Red, Cell::new(1, 0), 0)],
        );
        assert_eq!(dup, Err(StateError::DuplicateColor(Color::Red)));

        let floating = State::new(b(), [(Color::Red, Cell::new(0, 0), 1)]);
        assert!(matches!(floating, Err(StateError::Floating { .. })));

        let clash = State::new(
            b(),
            [(Color::Red, Cell::new(0, 0), 0), (Color::Blue, Cell::new(0, 0), 0)],
        );
        assert!(matches!(clash, Err(StateError::Collision { .. })));

        let oob = State::new(b(), [(Color::Red, Cell::new(10, 0), 0)]);
        assert!(matches!(oob, Err(StateError::OutOfBounds { .. })));
    }

    #[test]
    fn colors_parse_case_insensitively() {
        assert_eq!("Red".parse::<Color>(), Ok(Color::Red));
        assert!("teal".parse::<Color>().is_err());
    }

    #[test]
    fn diagonal_spans_opposite_corners() {
        assert!((Bounds::new(10, 10).diagonal() - 162f64.sqrt()).abs() < 1e-12);
    }
}
