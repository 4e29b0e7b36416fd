//! Product of the history (belief) MDP with an objective automaton.
//!
//! A product state pairs a history and its belief with an automaton state, or
//! is the absorbing sink. The automaton reads the label of the *source* belief
//! on every transition; entering an accepting automaton state pays reward 1,
//! and the step after that falls into the sink.

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::automata::Dfa;
use crate::formula::{label_of, FormulaError, LabelVector};
use crate::pomdp::{sample_dense, Belief, History, ModelError, Pomdp};

#[derive(Debug, Error)]
pub enum ProductError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Atom(#[from] FormulaError),
}

pub type Result<T, E = ProductError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductNode {
    pub history: History,
    pub q: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProductState {
    Sink,
    Node(ProductNode),
}

impl ProductState {
    pub fn node(&self) -> Option<&ProductNode> {
        match self {
            ProductState::Sink => None,
            ProductState::Node(n) => Some(n),
        }
    }

    pub fn belief(&self) -> Option<&Belief> {
        self.node().map(|n| n.history.belief())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: ProductState,
    pub reward: f64,
    pub observation: Option<usize>,
}

/// True iff `x` is the sink.
pub fn is_terminal(x: &ProductState) -> bool {
    matches!(x, ProductState::Sink)
}

/// Read-only view of a model and its objective automaton.
#[derive(Debug, Clone, Copy)]
pub struct Product<'a> {
    pub pomdp: &'a Pomdp,
    pub dfa: &'a Dfa,
}

impl<'a> Product<'a> {
    /// Checks that the automaton's atoms can be evaluated on this model's beliefs.
    pub fn new(pomdp: &'a Pomdp, dfa: &'a Dfa) -> Result<Self> {
        label_of(pomdp.init(), dfa.atoms())?;
        Ok(Product { pomdp, dfa })
    }

    pub fn label(&self, belief: &[f64]) -> LabelVector {
        label_of(belief, self.dfa.atoms()).expect("atom dimensions checked in Product::new")
    }

    /// `⟨s_init, q_init⟩` with the empty history.
    pub fn init(&self) -> ProductState {
        ProductState::Node(ProductNode {
            history: History::empty(self.pomdp),
            q: self.dfa.initial(),
        })
    }

    pub fn is_accepting(&self, x: &ProductState) -> bool {
        x.node().is_some_and(|n| self.dfa.is_final(n.q))
    }

    pub fn is_dead(&self, x: &ProductState) -> bool {
        x.node().is_some_and(|n| self.dfa.is_dead(n.q))
    }

    /// Belief-level transition used by the planner's inner loops: writes the
    /// posterior into `out` and returns `(q', reward)`. `q` must not be final.
    pub fn advance_into(&self, belief: &[f64], q: usize, a: usize, o: usize, out: &mut [f64]) -> Result<(usize, f64)> {
        let q2 = self.dfa.step(q, self.label(belief));
        self.pomdp.belief_update_into(belief, a, o, out)?;
        let reward = if self.dfa.is_final(q2) { 1.0 } else { 0.0 };
        Ok((q2, reward))
    }

    /// Deterministic successor once the observation is fixed.
    pub fn advance(&self, x: &ProductState, a: usize, o: usize) -> Result<StepOutcome> {
        let node = match x {
            ProductState::Sink => return Ok(sink_outcome()),
            ProductState::Node(n) if self.dfa.is_final(n.q) => return Ok(sink_outcome()),
            ProductState::Node(n) => n,
        };
        let q2 = self.dfa.step(node.q, self.label(node.history.belief()));
        let history = node.history.extended(self.pomdp, a, o)?;
        let reward = if self.dfa.is_final(q2) { 1.0 } else { 0.0 };
        Ok(StepOutcome {
            next: ProductState::Node(ProductNode { history, q: q2 }),
            reward,
            observation: Some(o),
        })
    }

    /// Samples `o ~ P(· | b, a)` and advances.
    pub fn product_step<R: Rng + ?Sized>(&self, x: &ProductState, a: usize, rng: &mut R) -> Result<StepOutcome> {
        let node = match x {
            ProductState::Node(n) if !self.dfa.is_final(n.q) => n,
            _ => return Ok(sink_outcome()),
        };
        let lik = self.pomdp.observation_likelihood(node.history.belief(), a)?;
        let o = sample_dense(&lik, rng);
        self.advance(x, a, o)
    }

    /// Every successor with positive probability, one per observation.
    pub fn enumerate_successors(&self, x: &ProductState, a: usize) -> Result<Vec<(f64, ProductState, f64)>> {
        let node = match x {
            ProductState::Node(n) if !self.dfa.is_final(n.q) => n,
            _ => return Ok(vec![(1.0, ProductState::Sink, 0.0)]),
        };
        let lik = self.pomdp.observation_likelihood(node.history.belief(), a)?;
        let mut out = Vec::new();
        for (o, &p) in lik.iter().enumerate() {
            if p > 0.0 {
                let step = self.advance(x, a, o)?;
                out.push((p, step.next, step.reward));
            }
        }
        Ok(out)
    }
}

fn sink_outcome() -> StepOutcome {
    StepOutcome {
        next: ProductState::Sink,
        reward: 0.0,
        observation: None,
    }
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub action: String,
    pub observation: String,
    pub q: usize,
    pub reward: f64,
    pub max_belief: f64,
}

impl TraceRecord {
    pub const HEADER: &'static str = "step,action,observation,q,reward,max_belief";
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{:.6}",
            self.step, self.action, self.observation, self.q, self.reward, self.max_belief
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::compile_minimal;
    use crate::formula::{parse_formula, Atom, AtomTable, LinearAtom};
    use crate::pomdp::drone_probing_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state() -> (Pomdp, Dfa) {
        let m = Pomdp::new(
            1,
            vec!["a".into()],
            vec!["o".into()],
            vec![(0, 1.0)],
            vec![vec![vec![(0, 1.0)]]],
            vec![vec![(0, 1.0)]],
        )
        .unwrap();
        let mut t = AtomTable::new();
        t.insert("a".into(), Atom::Linear(LinearAtom::indicator("a", 0, 1.0, false)));
        let d = compile_minimal(&parse_formula("F a", &t).unwrap()).unwrap();
        (m, d)
    }

    #[test]
    fn sink_is_absorbing() {
        let (m, d) = one_state();
        let p = Product::new(&m, &d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = p.product_step(&ProductState::Sink, 0, &mut rng).unwrap();
        assert_eq!(out, sink_outcome());
        assert!(is_terminal(&out.next));
    }

    #[test]
    fn satisfied_label_pays_on_first_step_then_sinks() {
        let (m, d) = one_state();
        let p = Product::new(&m, &d).unwrap();
        let x0 = p.init();
        assert!(!is_terminal(&x0));
        assert_eq!(x0.node().unwrap().q, d.initial());
        assert!(!p.is_accepting(&x0));
        assert_eq!(p.init(), x0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s1 = p.product_step(&x0, 0, &mut rng).unwrap();
        assert_eq!(s1.reward, 1.0);
        assert!(p.is_accepting(&s1.next));
        let s2 = p.product_step(&s1.next, 0, &mut rng).unwrap();
        assert_eq!(s2.reward, 0.0);
        assert!(is_terminal(&s2.next));
    }

    #[test]
    fn drone_successors_match_likelihood() {
        let lm = drone_probing_model(4, 4, 0.9, (3, 3)).unwrap();
        let d = compile_minimal(&lm.validate().unwrap()).unwrap();
        let p = Product::new(&lm.pomdp, &d).unwrap();
        let x0 = p.init();
        assert_eq!(x0.belief().unwrap(), &lm.pomdp.initial_belief());
        let succ = p.enumerate_successors(&x0, 4).unwrap();
        assert!(succ.len() <= 5);
        let lik = lm.pomdp.observation_likelihood(x0.belief().unwrap(), 4).unwrap();
        let positive: Vec<f64> = lik.into_iter().filter(|&p| p > 0.0).collect();
        let probs: Vec<f64> = succ.iter().map(|s| s.0).collect();
        assert_eq!(probs, positive);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_observation_gives_single_successor() {
        let (m, d) = one_state();
        let p = Product::new(&m, &d).unwrap();
        let succ = p.enumerate_successors(&p.init(), 0).unwrap();
        assert_eq!(succ.len(), 1);
        assert_eq!(succ[0].0, 1.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let (m, _) = one_state();
        let mut t = AtomTable::new();
        t.insert("far".into(), Atom::Linear(LinearAtom::indicator("far", 7, 0.5, true)));
        let d = compile_minimal(&parse_formula("F far", &t).unwrap()).unwrap();
        assert!(matches!(Product::new(&m, &d), Err(ProductError::Atom(_))));
    }

    #[test]
    fn trace_line_format() {
        let r = TraceRecord {
            step: 3,
            action: "N".into(),
            observation: "NE".into(),
            q: 1,
            reward: 0.0,
            max_belief: 0.25,
        };
        assert_eq!(r.to_string(), "3,N,NE,1,0,0.250000");
    }
}
