//! Line-oriented text form of a [`State`].
//!
//! ```text
//! workspace 10 x 10
//! blue block at (3, 4), height 1, clear
//! red block at (3, 4), height 0, under blue
//! ```
//!
//! The header fixes the bounds; each following line is one block in color
//! order. `under <color>` names the block resting directly on top.

use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::state::{Bounds, Cell, Color, State, StateError};

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^workspace\s+(\d+)\s*x\s*(\d+)$").unwrap());

static BLOCK_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^([A-Za-z]+) block at \(\s*(\d+)\s*,\s*(\d+)\s*\),\s*height (\d+),\s*(clear|under ([A-Za-z]+))$",
    )
    .unwrap()
});

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}: `{text}`")]
pub struct ParseError {
    /// 1-based line number in the input.
    pub line: usize,
    pub text: String,
    pub reason: String,
}

pub fn serialize_state_text(state: &State) -> String {
    let bounds = state.bounds();
    let mut out = format!("workspace {} x {}\n", bounds.width, bounds.height);
    for block in state.blocks() {
        let support = match state.block_above(block.color) {
            Some(above) => format!("under {}", above.color),
            None => "clear".to_string(),
        };
        let _ = writeln!(
            out,
            "{} block at {}, height {}, {}",
            block.color, block.pos, block.height, support
        );
    }
    out
}

pub fn parse_state_text(text: &str) -> Result<State, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let err = |line: usize, text: &str, reason: String| ParseError {
        line,
        text: text.to_string(),
        reason,
    };

    let (header_no, header) = lines
        .next()
        .ok_or_else(|| err(1, "", "empty input".into()))?;
    let caps = HEADER
        .captures(header)
        .ok_or_else(|| err(header_no, header, "expected `workspace W x H` header".into()))?;
    let bounds = Bounds::new(
        parse_num(&caps[1]).map_err(|r| err(header_no, header, r))?,
        parse_num(&caps[2]).map_err(|r| err(header_no, header, r))?,
    );

    struct Parsed<'a> {
        line: usize,
        text: &'a str,
        color: Color,
        cell: Cell,
        height: u32,
        under: Option<Color>,
    }

    let mut parsed: Vec<Parsed> = Vec::new();
    for (no, line) in lines {
        let caps = BLOCK_LINE
            .captures(line)
            .ok_or_else(|| err(no, line, "malformed block line".into()))?;
        let color: Color = caps[1].parse().map_err(|e| err(no, line, format!("{e}")))?;
        if parsed.iter().any(|p| p.color == color) {
            return Err(err(no, line, format!("duplicate color {color}")));
        }
        let cell = Cell::new(
            parse_num(&caps[2]).map_err(|r| err(no, line, r))?,
            parse_num(&caps[3]).map_err(|r| err(no, line, r))?,
        );
        if !bounds.contains(cell) {
            return Err(err(
                no,
                line,
                format!(
                    "coordinate {cell} outside {}x{} workspace",
                    bounds.width, bounds.height
                ),
            ));
        }
        let height = parse_num(&caps[4]).map_err(|r| err(no, line, r))?;
        let under = match caps.get(6) {
            Some(m) => Some(
                m.as_str()
                    .parse::<Color>()
                    .map_err(|e| err(no, line, format!("{e}")))?,
            ),
            None => None,
        };
        parsed.push(Parsed {
            line: no,
            text: line,
            color,
            cell,
            height,
            under,
        });
    }

    let state = State::new(bounds, parsed.iter().map(|p| (p.color, p.cell, p.height)))
        .map_err(|e: StateError| {
            let p = parsed.iter().find(|p| p.color == e.color()).unwrap();
            err(p.line, p.text, e.to_string())
        })?;

    for p in &parsed {
        let actual = state.block_above(p.color).map(|b| b.color);
        if actual != p.under {
            let reason = match actual {
                Some(c) => format!("{} is under {c}, not clear", p.color),
                None => format!("{} has nothing on top", p.color),
            };
            return Err(err(p.line, p.text, reason));
        }
    }
    Ok(state)
}

fn parse_num(s: &str) -> Result<u32, String> {
    s.parse::<u32>().map_err(|_| format!("number `{s}` out of range"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> State {
        State::new(
            Bounds::new(10, 10),
            [
                (Color::Red, Cell::new(3, 4), 0),
                (Color::Blue, Cell::new(3, 4), 1),
                (Color::Green, Cell::new(7, 1), 0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn serializes_in_color_order() {
        let text = serialize_state_text(&sample());
        assert_eq!(
            text,
            "workspace 10 x 10\n\
             blue block at (3, 4), height 1, clear\n\
             green block at (7, 1), height 0, clear\n\
             red block at (3, 4), height 0, under blue\n"
        );
    }

    #[test]
    fn round_trips() {
        let s = sample();
        assert_eq!(parse_state_text(&serialize_state_text(&s)), Ok(s));
    }

    #[test]
    fn duplicate_color_names_the_line() {
        let text = "workspace 10 x 10\nred block at (1, 1), height 0, clear\nred block at (2, 2), height 0, clear\n";
        let e = parse_state_text(text).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.reason.contains("duplicate"));
    }

    #[test]
    fn out_of_bounds_coordinate_is_rejected() {
        let text = "workspace 10 x 10\nred block at (10, 1), height 0, clear\n";
        let e = parse_state_text(text).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.reason.contains("outside"));
    }

    #[test]
    fn malformed_and_inconsistent_lines_are_rejected() {
        assert!(parse_state_text("").is_err());
        assert!(parse_state_text("red block somewhere").is_err());
        let floating = "workspace 10 x 10\nred block at (1, 1), height 1, clear\n";
        assert_eq!(parse_state_text(floating).unwrap_err().line, 2);
        let wrong_support = "workspace 10 x 10\nred block at (1, 1), height 0, under blue\n";
        assert!(parse_state_text(wrong_support).is_err());
    }
}
