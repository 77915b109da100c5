use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::BridgeError;

const DEFAULT_RULES: &str = include_str!("../../fixtures/intent_rules.txt");
const DEFAULT_FEW_SHOT: &str = include_str!("../../fixtures/few_shot.json");

/// Number of dynamics exemplars a template carries.
pub const FEW_SHOT_COUNT: usize = 4;

/// Marker that precedes the query in a dynamics prompt.
pub const QUERY_MARKER: &str = "Query:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub state: String,
    pub action: String,
    pub next_state: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    intent_rules: Vec<String>,
    few_shot: Vec<Exemplar>,
}

impl PromptTemplate {
    pub fn new(intent_rules: Vec<String>, few_shot: Vec<Exemplar>) -> Result<Self, BridgeError> {
        if few_shot.len() != FEW_SHOT_COUNT {
            return Err(BridgeError::Config(format!(
                "expected {FEW_SHOT_COUNT} few-shot exemplars, got {}",
                few_shot.len()
            )));
        }
        if intent_rules.is_empty() {
            return Err(BridgeError::Config("at least one intent rule is required".into()));
        }
        Ok(Self {
            intent_rules,
            few_shot,
        })
    }

    pub fn intent_rules(&self) -> &[String] {
        &self.intent_rules
    }

    pub fn few_shot(&self) -> &[Exemplar] {
        &self.few_shot
    }
}

/// The rule list and exemplars shipped in `fixtures/`.
impl Default for PromptTemplate {
    fn default() -> Self {
        let rules = DEFAULT_RULES
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        let shots = serde_json::from_str(DEFAULT_FEW_SHOT).expect("bundled few-shot fixture is valid JSON");
        Self::new(rules, shots).expect("bundled fixtures are complete")
    }
}

fn push_block(out: &mut String, text: &str) {
    out.push_str(text.trim_end());
    out.push('\n');
}

pub fn build_affordance_prompt(state_text: &str, template: &PromptTemplate, m: usize) -> String {
    let mut out = String::from("You control a robot arm that rearranges colored blocks on a grid workspace.\n");
    out.push_str("Rules:\n");
    for (i, rule) in template.intent_rules.iter().enumerate() {
        let _ = writeln!(out, "{}. {rule}", i + 1);
    }
    out.push_str("\nCurrent state:\n");
    push_block(&mut out, state_text);
    let _ = writeln!(
        out,
        "\nList exactly {m} different actions that satisfy the rules, one per line, \
         each written as: move <color> block to (x, y)"
    );
    out.push_str("Actions:\n");
    out
}

pub fn build_dynamics_prompt(state_text: &str, action_text: &str, template: &PromptTemplate) -> String {
    let mut out = String::from(
        "Predict the state of a grid blocks world after a pick-and-place action. \
         Moves that break the rules leave the state unchanged.\n",
    );
    for (i, shot) in template.few_shot.iter().enumerate() {
        let _ = writeln!(out, "\nExample {}:", i + 1);
        out.push_str("State:\n");
        push_block(&mut out, &shot.state);
        let _ = writeln!(out, "Action: {}", shot.action.trim());
        out.push_str("Next state:\n");
        push_block(&mut out, &shot.next_state);
    }
    let _ = writeln!(out, "\n{QUERY_MARKER}");
    out.push_str("State:\n");
    push_block(&mut out, state_text);
    let _ = writeln!(out, "Action: {}", action_text.trim());
    out.push_str("Next state (same format as the examples):\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocksim::{parse_state_text, serialize_state_text, BlocksWorld, Bounds};
    use crate::llm_bridge::parse_actions;

    #[test]
    fn bundled_exemplars_agree_with_the_simulator() {
        let t = PromptTemplate::default();
        assert_eq!(t.intent_rules().len(), 4);
        let world = BlocksWorld::new(Bounds::new(10, 10), 2.0);
        for shot in t.few_shot() {
            let state = parse_state_text(&shot.state).unwrap();
            let actions = parse_actions(&shot.action, &state).unwrap().actions;
            assert_eq!(actions.len(), 1);
            let next = world.transition(&state, &actions[0]).next_state;
            assert_eq!(serialize_state_text(&next), shot.next_state);
        }
    }

    #[test]
    fn affordance_prompt_contents() {
        let t = PromptTemplate::default();
        let state = &t.few_shot()[0].state;
        let a = build_affordance_prompt(state, &t, 7);
        assert_eq!(a, build_affordance_prompt(state, &t, 7));
        for rule in t.intent_rules() {
            assert!(a.contains(rule.as_str()));
        }
        assert!(a.contains("exactly 7 "));
    }

    #[test]
    fn dynamics_prompt_contents() {
        let t = PromptTemplate::default();
        let action = "move green block to (0, 0)";
        let p = build_dynamics_prompt(&t.few_shot()[1].state, action, &t);
        assert_eq!(p, build_dynamics_prompt(&t.few_shot()[1].state, action, &t));
        for shot in t.few_shot() {
            assert!(p.contains(&shot.next_state));
        }
        let tail = &p[p.find(QUERY_MARKER).unwrap()..];
        assert_eq!(tail.matches(action).count(), 1);
        assert_eq!(p.matches(action).count(), 1);
    }

    #[test]
    fn template_requires_four_exemplars() {
        let t = PromptTemplate::default();
        let err = PromptTemplate::new(t.intent_rules().to_vec(), t.few_shot()[..3].to_vec());
        assert!(err.is_err());
    }
}
