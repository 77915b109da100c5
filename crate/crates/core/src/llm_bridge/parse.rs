use std::sync::LazyLock;

use regex::Regex;

use super::BridgeError;
use crate::blocksim::{parse_state_text, Action, Cell, Color, State};

static ACTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)move\s+(?:the\s+)?([a-z]+)\s+block\s+to\s+\(\s*(\d+)\s*,\s*(\d+)\s*\)").unwrap()
});

static BLOCK_LINE_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z]+ block at ").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedActions {
    /// Valid actions in order of first appearance.
    pub actions: Vec<Action>,
    /// Well-formed lines rejected for an unknown or absent color or an
    /// out-of-bounds target.
    pub dropped: usize,
}

/// Extracts `move <color> block to (x, y)` actions from free text. At most one
/// action is read per line; other lines are ignored.
pub fn parse_actions(text: &str, state: &State) -> Result<ParsedActions, BridgeError> {
    let bounds = state.bounds();
    let mut actions: Vec<Action> = Vec::new();
    let mut dropped = 0;
    for line in text.lines() {
        let Some(caps) = ACTION.captures(line) else {
            continue;
        };
        let color = caps[1].parse::<Color>().ok().filter(|c| state.block(*c).is_some());
        let coords = (caps[2].parse::<u32>(), caps[3].parse::<u32>());
        let target = match coords {
            (Ok(x), Ok(y)) => Some(Cell::new(x, y)).filter(|c| bounds.contains(*c)),
            _ => None,
        };
        match (color, target) {
            (Some(color), Some(target)) => {
                let action = Action::new(color, target);
                if !actions.contains(&action) {
                    actions.push(action);
                }
            }
            _ => dropped += 1,
        }
    }
    if actions.is_empty() {
        return Err(BridgeError::EmptyParse { dropped });
    }
    Ok(ParsedActions { actions, dropped })
}

/// Cuts the state block (header plus block lines) out of a completion that may
/// carry extra chatter around it.
fn state_section(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let start = lines.iter().position(|l| l.starts_with("workspace"))?;
    let mut section = String::from(lines[start]);
    section.push('\n');
    let mut blocks = 0;
    for line in &lines[start + 1..] {
        if BLOCK_LINE_START.is_match(line) {
            section.push_str(line);
            section.push('\n');
            blocks += 1;
        } else if !(line.is_empty() && blocks == 0) {
            break;
        }
    }
    Some(section)
}

/// Parses a predicted next state. Anything unparsable, or a state over a
/// different workspace, yields `fallback` together with `true`.
pub fn parse_next_state(text: &str, fallback: &State) -> (State, bool) {
    let parsed = state_section(text)
        .and_then(|s| parse_state_text(&s).ok())
        .filter(|s| s.bounds() == fallback.bounds());
    match parsed {
        Some(state) => (state, false),
        None => (fallback.clone(), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocksim::{serialize_state_text, Bounds};

    fn state() -> State {
        State::new(
            Bounds::new(10, 10),
            [(Color::Red, Cell::new(1, 1), 0), (Color::Green, Cell::new(5, 5), 0)],
        )
        .unwrap()
    }

    #[test]
    fn single_action() {
        let p = parse_actions("move red block to (3, 4)", &state()).unwrap();
        assert_eq!(p.actions, vec![Action::new(Color::Red, Cell::new(3, 4))]);
        assert_eq!(p.dropped, 0);
    }

    #[test]
    fn chatter_and_duplicates() {
        let text = "Sure! Here are the actions:\n1. move red block to (3, 4)\n\
                    2. Move the green block to (0,0).\nmove red block to (3, 4)\nThat's all.";
        let p = parse_actions(text, &state()).unwrap();
        assert_eq!(p.actions.len(), 2);
        assert_eq!(p.actions[1], Action::new(Color::Green, Cell::new(0, 0)));
    }

    #[test]
    fn invalid_actions_are_dropped_and_counted() {
        let text = "move teal block to (3,4)\nmove blue block to (1, 1)\nmove red block to (12, 0)\nmove red block to (2, 2)";
        let p = parse_actions(text, &state()).unwrap();
        assert_eq!(p.actions, vec![Action::new(Color::Red, Cell::new(2, 2))]);
        assert_eq!(p.dropped, 3);
        assert_eq!(
            parse_actions("move teal block to (3,4)", &state()),
            Err(BridgeError::EmptyParse { dropped: 1 })
        );
        assert_eq!(parse_actions("", &state()), Err(BridgeError::EmptyParse { dropped: 0 }));
    }

    #[test]
    fn next_state_parsing() {
        let s = state();
        let text = serialize_state_text(&s);
        assert_eq!(parse_next_state(&text, &s), (s.clone(), false));
        let chatty = format!("Next state:\n{text}\nLet me know if you need more.");
        assert_eq!(parse_next_state(&chatty, &s), (s.clone(), false));

        let other = State::new(Bounds::new(10, 10), [(Color::Red, Cell::new(9, 9), 0)]).unwrap();
        assert_eq!(parse_next_state("total nonsense", &other), (other.clone(), true));
        let dup = "workspace 10 x 10\nred block at (1, 1), height 0, clear\nred block at (2, 2), height 0, clear\n";
        assert_eq!(parse_next_state(dup, &other), (other.clone(), true));
        let wrong_bounds = "workspace 5 x 5\nred block at (1, 1), height 0, clear\n";
        assert_eq!(parse_next_state(wrong_bounds, &other), (other, true));
    }
}
