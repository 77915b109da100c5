//! Monte Carlo search over a learned or simulated world model.
//!
//! Each simulation walks down the tree (uniformly among already expanded
//! children), expands one untried action through the world model, then runs
//! a uniformly random rollout. With `use_affordances` the tree only ever
//! expands actions proposed by the affordance model; rollouts still draw from
//! the full candidate set unless `affordance_rollouts` is set. Rewards are
//! always computed with the true reward function on the predicted states.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blocksim::{serialize_state_text, Action, BlocksWorld, State, TERMINAL_REWARD};
use crate::model_iface::{AffordanceModel, WorldModel, DEFAULT_AFFORDANCE_COUNT};
use crate::seeding::{derive_seed, rng_from_seed, short_digest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub num_simulations: usize,
    /// Maximum number of states along a simulated trajectory.
    pub max_depth: usize,
    pub terminal_reward: f64,
    pub use_affordances: bool,
    /// `m`, the number of affordances requested per node.
    pub affordance_count: usize,
    /// Restrict rollout actions to affordances as well.
    pub affordance_rollouts: bool,
    pub rollout_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            num_simulations: 4,
            max_depth: 10,
            terminal_reward: TERMINAL_REWARD,
            use_affordances: true,
            affordance_count: DEFAULT_AFFORDANCE_COUNT,
            affordance_rollouts: false,
            rollout_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn full() -> Self {
        Self {
            use_affordances: false,
            ..Self::default()
        }
    }

    pub fn partial() -> Self {
        Self::default()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: State,
    pub parent: Option<NodeId>,
    pub action: Option<Action>,
    pub depth: usize,
    /// Actions not yet expanded; `None` until the node is first visited.
    pub untried: Option<Vec<Action>>,
    pub children: BTreeMap<Action, NodeId>,
    pub visits: u64,
    pub value_sum: f64,
    /// Immediate (true) reward of `state`.
    pub node_score: f64,
}

impl SearchNode {
    pub fn mean_value(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena-allocated search tree plus the per-search counters.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<SearchNode>,
    /// Total return of each simulation's trajectory, in order.
    pub simulation_returns: Vec<f64>,
    pub model_calls: u64,
    pub affordance_calls: u64,
    pub expansions: u64,
    pub rollout_steps: u64,
}

impl SearchTree {
    pub const ROOT: NodeId = 0;

    pub fn new(root: State, root_score: f64) -> Self {
        Self {
            nodes: vec![SearchNode {
                state: root,
                parent: None,
                action: None,
                depth: 0,
                untried: None,
                children: BTreeMap::new(),
                visits: 0,
                value_sum: 0.0,
                node_score: root_score,
            }],
            simulation_returns: Vec::new(),
            model_calls: 0,
            affordance_calls: 0,
            expansions: 0,
            rollout_steps: 0,
        }
    }

    pub fn add_child(&mut self, parent: NodeId, action: Action, state: State, score: f64) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(SearchNode {
            state,
            parent: Some(parent),
            action: Some(action),
            depth,
            untried: None,
            children: BTreeMap::new(),
            visits: 0,
            value_sum: 0.0,
            node_score: score,
        });
        self.nodes[parent].children.insert(action, id);
        id
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[Self::ROOT]
    }

    pub fn nodes(&self) -> &[SearchNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of actions the root was (or would be) expanded over.
    pub fn root_branching(&self) -> usize {
        let root = self.root();
        root.children.len() + root.untried.as_ref().map_or(0, Vec::len)
    }

    /// Root child with the best mean value; ties go to the first action in
    /// canonical order.
    pub fn best_action(&self) -> Option<Action> {
        let mut best: Option<(Action, f64)> = None;
        for (&action, &child) in &self.root().children {
            let value = self.nodes[child].mean_value();
            if best.is_none_or(|(_, v)| value > v) {
                best = Some((action, value));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Digest of the tree structure, visit statistics and predicted states.
    pub fn structural_hash(&self) -> String {
        let mut buf = String::new();
        for (id, node) in self.nodes.iter().enumerate() {
            buf.push_str(&format!(
                "#{id} parent={:?} action={} visits={} value={:016x} score={:016x}\n",
                node.parent,
                node.action.map(|a| a.to_string()).unwrap_or_default(),
                node.visits,
                node.value_sum.to_bits(),
                node.node_score.to_bits(),
            ));
            buf.push_str(&serialize_state_text(&node.state));
        }
        for r in &self.simulation_returns {
            buf.push_str(&format!("return {:016x}\n", r.to_bits()));
        }
        short_digest(buf.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchMetrics {
    /// Best simulation return.
    pub mc_score: f64,
    /// Mean simulation return (alternative reading of the search score).
    pub mc_mean_return: f64,
    pub simulations_used: usize,
    pub model_calls: u64,
    pub affordance_calls: u64,
    pub avg_leaf_node_score: f64,
    pub avg_tree_score: f64,
    pub avg_accumulated_reward: f64,
}

/// Whether an online episode reached the goal within its step budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    Completed { steps: usize },
    Exhausted { budget: usize },
}

impl Completion {
    pub fn steps(self) -> Option<usize> {
        match self {
            Completion::Completed { steps } => Some(steps),
            Completion::Exhausted { .. } => None,
        }
    }

    pub fn is_completed(self) -> bool {
        matches!(self, Completion::Completed { .. })
    }
}

/// `5`, or `>10` when a 10-step budget ran out.
impl fmt::Display for Completion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Completion::Completed { steps } => write!(f, "{steps}"),
            Completion::Exhausted { budget } => write!(f, ">{budget}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub steps_to_completion: Completion,
    /// Sum of the real rewards of every state visited after the start state.
    pub online_cumulative_reward: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_action: Option<Action>,
    pub metrics: SearchMetrics,
    pub tree: SearchTree,
}

/// Executed trajectory of an online evaluation, with the metrics of every
/// search that was run along the way.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    pub report: EvalReport,
    pub step_metrics: Vec<SearchMetrics>,
    pub actions: Vec<Action>,
    pub tree_hashes: Vec<String>,
    /// Size of the root's expansion list at each step.
    pub root_branching: Vec<usize>,
}

/// Action list a node is expanded over.
pub fn candidate_actions(
    world: &BlocksWorld,
    state: &State,
    affordances: &dyn AffordanceModel,
    config: &SearchConfig,
) -> Vec<Action> {
    if config.use_affordances {
        affordances.afforded(state, config.affordance_count)
    } else {
        world.candidate_actions(state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutResult {
    /// Undiscounted reward sum, including the starting state's reward.
    pub total: f64,
    pub steps: u64,
    pub affordance_calls: u64,
    pub reached_terminal: bool,
}

/// Uniformly random rollout through `model` for at most `depth_remaining`
/// steps, stopping at the first terminal state. Pass `affordances` to draw
/// actions from the affordance model instead of the full candidate set.
pub fn rollout(
    world: &BlocksWorld,
    state: &State,
    model: &dyn WorldModel,
    depth_remaining: usize,
    terminal_reward: f64,
    affordances: Option<(&dyn AffordanceModel, usize)>,
    rng: &mut impl Rng,
) -> RolloutResult {
    let mut total = world.reward(state);
    let mut result = RolloutResult {
        total,
        steps: 0,
        affordance_calls: 0,
        reached_terminal: total >= terminal_reward,
    };
    if result.reached_terminal {
        return result;
    }
    let mut current = state.clone();
    for _ in 0..depth_remaining {
        let actions = match affordances {
            Some((aff, m)) => {
                result.affordance_calls += 1;
                aff.afforded(&current, m)
            }
            None => world.candidate_actions(&current),
        };
        let Some(action) = actions.choose(rng) else {
            break;
        };
        current = model.predict_next(&current, action);
        result.steps += 1;
        let r = world.reward(&current);
        total += r;
        if r >= terminal_reward {
            result.reached_terminal = true;
            break;
        }
    }
    result.total = total;
    result
}

/// Runs up to `config.num_simulations` simulations from `root`.
pub fn run_search(
    world: &BlocksWorld,
    root: &State,
    model: &dyn WorldModel,
    affordances: &dyn AffordanceModel,
    config: &SearchConfig,
    rng: &mut impl Rng,
) -> SearchOutcome {
    let mut tree = SearchTree::new(root.clone(), world.reward(root));
    let rollout_affordances = (config.use_affordances && config.affordance_rollouts)
        .then_some((affordances, config.affordance_count));

    for _ in 0..config.num_simulations {
        let mut path = vec![SearchTree::ROOT];
        let mut node = SearchTree::ROOT;
        loop {
            let current = &tree.nodes[node];
            if current.node_score >= config.terminal_reward || current.depth >= config.max_depth {
                break;
            }
            if current.untried.is_none() {
                let actions = candidate_actions(world, &current.state, affordances, config);
                if config.use_affordances {
                    tree.affordance_calls += 1;
                }
                tree.nodes[node].untried = Some(actions);
            }
            let untried = tree.nodes[node].untried.as_mut().expect("initialised above");
            if !untried.is_empty() {
                let action = untried.swap_remove(rng.random_range(0..untried.len()));
                let parent_state = tree.nodes[node].state.clone();
                let next = model.predict_next(&parent_state, &action);
                tree.model_calls += 1;
                tree.expansions += 1;
                let score = world.reward(&next);
                node = tree.add_child(node, action, next, score);
                path.push(node);
                break;
            }
            let children: Vec<NodeId> = tree.nodes[node].children.values().copied().collect();
            match children.choose(rng) {
                Some(&child) => {
                    node = child;
                    path.push(node);
                }
                None => break,
            }
        }

        let leaf = &tree.nodes[node];
        let depth_remaining = config.max_depth.saturating_sub(leaf.depth);
        let leaf_state = leaf.state.clone();
        let outcome = rollout(
            world,
            &leaf_state,
            model,
            depth_remaining,
            config.terminal_reward,
            rollout_affordances,
            rng,
        );
        tree.model_calls += outcome.steps;
        tree.rollout_steps += outcome.steps;
        tree.affordance_calls += outcome.affordance_calls;

        // Return of the trajectory after the root: scores of the interior
        // path nodes plus the rollout from the leaf (which counts the leaf).
        let total = if node == SearchTree::ROOT {
            outcome.total - tree.nodes[node].node_score
        } else {
            let interior: f64 = path[1..path.len() - 1]
                .iter()
                .map(|&id| tree.nodes[id].node_score)
                .sum();
            interior + outcome.total
        };
        for &id in &path {
            let n = &mut tree.nodes[id];
            n.visits += 1;
            n.value_sum += total;
        }
        tree.simulation_returns.push(total);

        // A rollout that merely wanders into the goal after non-goal states
        // does not end the search; only a return of at least the terminal
        // reward (the goal reached with no shaped penalty on the way) or a
        // terminal node in the tree does.
        if total >= config.terminal_reward || tree.nodes[node].node_score >= config.terminal_reward {
            break;
        }
    }

    let metrics = compute_metrics(&tree);
    SearchOutcome {
        best_action: tree.best_action(),
        metrics,
        tree,
    }
}

pub fn compute_metrics(tree: &SearchTree) -> SearchMetrics {
    let scores: Vec<f64> = tree.nodes.iter().map(|n| n.node_score).collect();
    let leaves: Vec<f64> = tree
        .nodes
        .iter()
        .filter(|n| n.is_leaf())
        .map(|n| n.node_score)
        .collect();
    let root_score = tree.root().node_score;
    let returns = &tree.simulation_returns;
    let (mc_score, mean_return) = if returns.is_empty() {
        (root_score, root_score)
    } else {
        (
            returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean(returns),
        )
    };
    SearchMetrics {
        mc_score,
        mc_mean_return: mean_return,
        simulations_used: returns.len(),
        model_calls: tree.model_calls,
        affordance_calls: tree.affordance_calls,
        avg_leaf_node_score: mean(&leaves),
        avg_tree_score: mean(&scores),
        avg_accumulated_reward: mean_return,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Closed-loop evaluation: plan with the model from the real state, execute
/// the chosen action in the simulator, repeat for at most `max_steps` steps.
/// Each step's search gets its own RNG stream derived from
/// `config.rollout_seed`.
pub fn evaluate_online(
    world: &BlocksWorld,
    root: &State,
    model: &dyn WorldModel,
    affordances: &dyn AffordanceModel,
    config: &SearchConfig,
    max_steps: usize,
) -> OnlineRun {
    let mut state = root.clone();
    let mut run = OnlineRun {
        report: EvalReport {
            steps_to_completion: Completion::Exhausted { budget: max_steps },
            online_cumulative_reward: 0.0,
        },
        step_metrics: Vec::new(),
        actions: Vec::new(),
        tree_hashes: Vec::new(),
        root_branching: Vec::new(),
    };
    if world.is_terminal(&state) {
        run.report.steps_to_completion = Completion::Completed { steps: 0 };
        return run;
    }
    for step in 0..max_steps {
        let mut rng = rng_from_seed(derive_seed(config.rollout_seed, "online-step", step as u64));
        let outcome = run_search(world, &state, model, affordances, config, &mut rng);
        run.step_metrics.push(outcome.metrics);
        run.tree_hashes.push(outcome.tree.structural_hash());
        run.root_branching.push(outcome.tree.root_branching());
        let Some(action) = outcome.best_action else {
            break;
        };
        let result = world.transition(&state, &action);
        run.actions.push(action);
        run.report.online_cumulative_reward += result.reward;
        state = result.next_state;
        if result.done {
            run.report.steps_to_completion = Completion::Completed { steps: step + 1 };
            break;
        }
    }
    run
}
