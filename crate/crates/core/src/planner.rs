//! Monte Carlo tree search over product history states, and an exact
//! finite-horizon expectimax oracle to check it against.
//!
//! Each tree node stores the exact belief of its history, its automaton state
//! and per-action visit counts and mean returns. Rewards are paid on the
//! transition that enters an accepting automaton state, so a search with depth
//! bound `d` estimates the probability of acceptance within `d` steps, the same
//! quantity [`expectimax_value`] computes with horizon `d`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pomdp::Belief;
use crate::product::{Product, ProductError, ProductState};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("cannot search from the sink state")]
    SinkRoot,
    #[error("expectimax expanded more than {0} nodes")]
    NodeBudget(usize),
    #[error("invalid planner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Product(#[from] ProductError),
}

pub type Result<T, E = PlannerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Simulations per call to [`Planner::search`].
    pub simulations: usize,
    /// Depth bound of every simulation.
    pub max_depth: usize,
    /// Exploration constant of the UCB rule.
    pub ucb_c: f64,
    /// Prior value of freshly expanded action nodes.
    pub value_init: f64,
    /// Prior visit count of freshly expanded action nodes.
    pub visits_init: u64,
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            simulations: 2000,
            max_depth: 20,
            ucb_c: 1.0,
            value_init: 0.0,
            visits_init: 0,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.simulations == 0 {
            return Err(PlannerError::Config("simulations must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(PlannerError::Config("depth must be at least 1".into()));
        }
        if self.ucb_c.is_nan() || self.ucb_c < 0.0 {
            return Err(PlannerError::Config("ucb constant must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub visits: u64,
    pub value: f64,
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub belief: Vec<f64>,
    pub q: usize,
    /// Automaton state after leaving this node, whatever the action.
    pub q_next: usize,
    pub visits: u64,
    pub actions: Vec<ActionStats>,
    children: HashMap<(usize, usize), NodeId>,
}

impl TreeNode {
    pub fn child(&self, action: usize, observation: usize) -> Option<NodeId> {
        self.children.get(&(action, observation)).copied()
    }

    pub fn child_count(&self) -> usize {
        self.children.len()
    }
}

/// Nodes indexed by their action-observation history.
#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    nodes: Vec<TreeNode>,
    index: HashMap<Vec<(usize, usize)>, NodeId>,
}

impl SearchTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn lookup(&self, history: &[(usize, usize)]) -> Option<NodeId> {
        self.index.get(history).copied()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }
}

/// UCB action choice: untried actions first in index order, then
/// `argmax V + c·sqrt(ln N / N_a)` with ties going to the lowest index.
pub fn select_action(actions: &[ActionStats], parent_visits: u64, c: f64) -> usize {
    if let Some(a) = actions.iter().position(|s| s.visits == 0) {
        return a;
    }
    let log_n = (parent_visits.max(1) as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, s) in actions.iter().enumerate() {
        let score = s.value + c * (log_n / s.visits as f64).sqrt();
        if score > best_score {
            best = a;
            best_score = score;
        }
    }
    best
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub action: usize,
    /// Root action statistics, indexed by action.
    pub actions: Vec<ActionStats>,
    pub root_visits: u64,
    pub tree_size: usize,
}

impl SearchResult {
    /// Value estimate of the chosen action.
    pub fn value(&self) -> f64 {
        self.actions[self.action].value
    }
}

pub struct Planner<'a> {
    product: Product<'a>,
    cfg: PlannerConfig,
    rng: ChaCha8Rng,
    tree: SearchTree,
    scratch: Vec<f64>,
}

impl<'a> Planner<'a> {
    pub fn new(product: Product<'a>, cfg: PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Planner {
            scratch: vec![0.0; product.pomdp.state_count()],
            product,
            cfg,
            rng,
            tree: SearchTree::default(),
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn clear_tree(&mut self) {
        self.tree = SearchTree::default();
    }

    /// Runs the configured number of simulations from `root` on a fresh tree
    /// and returns the action with the highest value estimate.
    pub fn search(&mut self, root: &ProductState) -> Result<SearchResult> {
        let node = root.node().ok_or(PlannerError::SinkRoot)?;
        self.clear_tree();
        let belief = node.history.belief().clone();
        for _ in 0..self.cfg.simulations {
            let s = belief.sample(&mut self.rng);
            self.simulate(s, root, 0);
        }
        let root_id = self.tree.lookup(node.history.steps()).expect("root is expanded by the first simulation");
        let r = &self.tree.nodes[root_id];
        Ok(SearchResult {
            action: argmax(r.actions.iter().map(|s| s.value)),
            actions: r.actions.clone(),
            root_visits: r.visits,
            tree_size: self.tree.len(),
        })
    }

    /// One simulation from hidden state `s` and product state `x` at `depth`.
    /// Unknown histories are added to the tree and evaluated by a rollout.
    pub fn simulate(&mut self, s: usize, x: &ProductState, depth: usize) -> f64 {
        let node = match x {
            ProductState::Sink => return 0.0,
            ProductState::Node(n) => n,
        };
        if depth >= self.cfg.max_depth || self.product.dfa.is_final(node.q) {
            return 0.0;
        }
        match self.tree.lookup(node.history.steps()) {
            Some(id) => self.simulate_node(s, id, node.history.steps().to_vec(), depth),
            None => {
                let belief = node.history.belief().to_vec();
                let id = self.expand(node.history.steps().to_vec(), belief, node.q);
                self.rollout_node(s, id, depth)
            }
        }
    }

    fn expand(&mut self, key: Vec<(usize, usize)>, belief: Vec<f64>, q: usize) -> NodeId {
        let q_next = self.product.dfa.step(q, self.product.label(&belief));
        let n_a = self.product.pomdp.action_count();
        let id = self.tree.nodes.len();
        self.tree.nodes.push(TreeNode {
            belief,
            q,
            q_next,
            visits: self.cfg.visits_init * n_a as u64,
            actions: vec![
                ActionStats {
                    visits: self.cfg.visits_init,
                    value: self.cfg.value_init,
                };
                n_a
            ],
            children: HashMap::new(),
        });
        self.tree.index.insert(key, id);
        id
    }

    fn simulate_node(&mut self, s: usize, id: NodeId, key: Vec<(usize, usize)>, depth: usize) -> f64 {
        let (a, q, q_next) = {
            let n = &self.tree.nodes[id];
            (select_action(&n.actions, n.visits, self.cfg.ucb_c), n.q, n.q_next)
        };
        let dfa = self.product.dfa;
        let (s2, o) = self
            .product
            .pomdp
            .sample_step(s, a, &mut self.rng)
            .expect("sampled hidden states only take available actions");
        let reward = if dfa.is_final(q_next) && !dfa.is_final(q) { 1.0 } else { 0.0 };

        let future = if dfa.is_final(q_next) || depth + 1 >= self.cfg.max_depth {
            0.0
        } else {
            let mut child_key = key;
            child_key.push((a, o));
            match self.tree.nodes[id].child(a, o) {
                Some(child) => self.simulate_node(s2, child, child_key, depth + 1),
                None => {
                    let mut belief = vec![0.0; self.scratch.len()];
                    self.product
                        .pomdp
                        .belief_update_into(&self.tree.nodes[id].belief, a, o, &mut belief)
                        .expect("observation sampled from a consistent hidden state");
                    let child = self.expand(child_key, belief, q_next);
                    self.tree.nodes[id].children.insert((a, o), child);
                    self.rollout_node(s2, child, depth + 1)
                }
            }
        };

        let ret = reward + future;
        let n = &mut self.tree.nodes[id];
        n.visits += 1;
        let stats = &mut n.actions[a];
        stats.visits += 1;
        stats.value += (ret - stats.value) / stats.visits as f64;
        ret
    }

    fn rollout_node(&mut self, s: usize, id: NodeId, depth: usize) -> f64 {
        let belief = std::mem::take(&mut self.tree.nodes[id].belief);
        let q = self.tree.nodes[id].q;
        let ret = self.rollout_belief(s, &belief, q, depth);
        self.tree.nodes[id].belief = belief;
        ret
    }

    /// Uniform-random rollout from `x` until the depth bound, the sink or a
    /// dead automaton state.
    pub fn rollout(&mut self, s: usize, x: &ProductState, depth: usize) -> f64 {
        match x {
            ProductState::Sink => 0.0,
            ProductState::Node(n) => {
                let b = n.history.belief().to_vec();
                self.rollout_belief(s, &b, n.q, depth)
            }
        }
    }

    fn rollout_belief(&mut self, mut s: usize, belief: &[f64], mut q: usize, mut depth: usize) -> f64 {
        let dfa = self.product.dfa;
        let pomdp = self.product.pomdp;
        let n_a = pomdp.action_count();
        let mut cur = belief.to_vec();
        let mut next = std::mem::take(&mut self.scratch);
        let mut ret = 0.0;
        while depth < self.cfg.max_depth && !dfa.is_final(q) && !dfa.is_dead(q) {
            let a = self.rng.gen_range(0..n_a);
            let (s2, o) = pomdp.sample_step(s, a, &mut self.rng).expect("rollout actions are available");
            let q2 = dfa.step(q, self.product.label(&cur));
            if dfa.is_final(q2) {
                ret += 1.0;
                break;
            }
            if depth + 1 < self.cfg.max_depth && !dfa.is_dead(q2) {
                pomdp
                    .belief_update_into(&cur, a, o, &mut next)
                    .expect("observation sampled from a consistent hidden state");
                std::mem::swap(&mut cur, &mut next);
            }
            s = s2;
            q = q2;
            depth += 1;
        }
        self.scratch = next;
        ret
    }
}

/// Convenience wrapper: one search with a planner seeded from `cfg.seed`.
pub fn search(root: &ProductState, cfg: &PlannerConfig, product: Product<'_>) -> Result<usize> {
    Ok(Planner::new(product, cfg.clone())?.search(root)?.action)
}

/// Default node budget of [`expectimax_value`].
pub const EXPECTIMAX_BUDGET: usize = 1_000_000;

/// Exact optimal probability of reaching an accepting product state (or the
/// sink) within `horizon` steps.
pub fn expectimax_value(x: &ProductState, horizon: usize, product: Product<'_>) -> Result<f64> {
    let mut budget = EXPECTIMAX_BUDGET;
    value_rec(x, horizon, product, &mut budget)
}

/// Per-action Q-values at the root for the same recursion.
pub fn expectimax_action_values(x: &ProductState, horizon: usize, product: Product<'_>) -> Result<Vec<f64>> {
    let mut budget = EXPECTIMAX_BUDGET;
    (0..product.pomdp.action_count())
        .map(|a| q_rec(x, a, horizon, product, &mut budget))
        .collect()
}

/// Root action maximising [`expectimax_action_values`], lowest index on ties.
pub fn expectimax_action(x: &ProductState, horizon: usize, product: Product<'_>) -> Result<usize> {
    Ok(argmax(expectimax_action_values(x, horizon, product)?))
}

fn value_rec(x: &ProductState, horizon: usize, product: Product<'_>, budget: &mut usize) -> Result<f64> {
    if *budget == 0 {
        return Err(PlannerError::NodeBudget(EXPECTIMAX_BUDGET));
    }
    *budget -= 1;
    if matches!(x, ProductState::Sink) || product.is_accepting(x) {
        return Ok(1.0);
    }
    if horizon == 0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    for a in 0..product.pomdp.action_count() {
        best = best.max(q_rec(x, a, horizon, product, budget)?);
    }
    Ok(best)
}

fn q_rec(x: &ProductState, a: usize, horizon: usize, product: Product<'_>, budget: &mut usize) -> Result<f64> {
    if horizon == 0 {
        return value_rec(x, 0, product, budget);
    }
    let mut total = 0.0;
    for (p, next, _) in product.enumerate_successors(x, a)? {
        total += p * value_rec(&next, horizon - 1, product, budget)?;
    }
    Ok(total)
}

/// Samples the hidden state at the root of a search.
pub fn sample_root_state<R: Rng + ?Sized>(belief: &Belief, rng: &mut R) -> usize {
    belief.sample(rng)
}
