//! Finite POMDPs, exact Bayesian belief updates and model files.

mod drone;
mod file;

pub use drone::{drone_probing_model, DroneProbing, Quadrant, DRONE_ACTIONS, DRONE_OBJECTIVE, DRONE_OBSERVATIONS, GOAL_THRESHOLD};
pub use file::{load_model, parse_model, write_model};

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{parse_formula, AtomTable, FormulaError, Objective};

/// Tolerance for every stochasticity check.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transition row ({state}, {action}) sums to {sum}, expected 1 or 0")]
    TransitionRowSum { state: usize, action: usize, sum: f64 },
    #[error("observation row for state {state} sums to {sum}, expected 1")]
    ObservationRowSum { state: usize, sum: f64 },
    #[error("initial distribution sums to {0}, expected 1")]
    InitSum(f64),
    #[error("negative probability {value} in {context}")]
    NegativeProbability { value: f64, context: String },
    #[error("{kind} index {index} out of range (count {count})")]
    IndexOutOfRange { kind: &'static str, index: usize, count: usize },
    #[error("atom `{atom}` references state {index}, model has {count} states")]
    AtomOutOfRange { atom: String, index: usize, count: usize },
    #[error("action {action} is not available in state {state}")]
    UnavailableAction { state: usize, action: usize },
    #[error("observation {observation} has zero likelihood after action {action}")]
    ImpossibleObservation { action: usize, observation: usize },
    #[error("belief has dimension {got}, model has {expected} states")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid objective: {0}")]
    Objective(#[from] FormulaError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// A probability vector over hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Checks non-negativity and normalisation.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|&&v| v < 0.0 || !v.is_finite()) {
            return Err(ModelError::NegativeProbability {
                value: v,
                context: "belief".into(),
            });
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::Invalid(format!("belief sums to {sum}")));
        }
        Ok(Belief(values))
    }

    pub fn point(dim: usize, state: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[state] = 1.0;
        Belief(v)
    }

    pub fn uniform(dim: usize) -> Self {
        Belief(vec![1.0 / dim as f64; dim])
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `‖b‖∞`
    pub fn max_component(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_dense(&self.0, rng)
    }

}

impl Deref for Belief {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn sample_dense<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
            last = i;
        }
    }
    last
}

fn sample_sparse<R: Rng + ?Sized>(row: &[(usize, f64)], rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>();
    for &(i, p) in row {
        if u < p {
            return i;
        }
        u -= p;
    }
    row.last().map(|&(i, _)| i).expect("sampled row is non-empty")
}

/// Sparse row: `(index, probability)` pairs sorted by index, no zeros.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Pomdp {
    state_count: usize,
    actions: Vec<String>,
    observations: Vec<String>,
    init: Vec<f64>,
    /// Indexed by `state * action_count + action`.
    transitions: Vec<SparseRow>,
    /// Dense `state * observation_count + observation`.
    obs: Vec<f64>,
}

fn check_row(row: &[(usize, f64)], count: usize, kind: &'static str, context: impl Fn() -> String) -> Result<f64> {
    let mut sum = 0.0;
    for &(i, p) in row {
        if i >= count {
            return Err(ModelError::IndexOutOfRange { kind, index: i, count });
        }
        if p < 0.0 || !p.is_finite() {
            return Err(ModelError::NegativeProbability { value: p, context: context() });
        }
        sum += p;
    }
    Ok(sum)
}

fn normalise_row(mut row: SparseRow) -> SparseRow {
    row.retain(|&(_, p)| p != 0.0);
    row.sort_by_key(|&(i, _)| i);
    row
}

impl Pomdp {
    /// Builds and validates a model.
    ///
    /// `transitions[s][a]` and `observations_of[s]` are sparse rows. Rows of
    /// available actions must sum to 1, unavailable actions have empty rows.
    pub fn new(
        state_count: usize,
        actions: Vec<String>,
        observations: Vec<String>,
        init: SparseRow,
        transitions: Vec<Vec<SparseRow>>,
        observations_of: Vec<SparseRow>,
    ) -> Result<Self> {
        if state_count == 0 || actions.is_empty() || observations.is_empty() {
            return Err(ModelError::Invalid("model needs at least one state, action and observation".into()));
        }
        let n_a = actions.len();
        let n_o = observations.len();
        if transitions.len() != state_count || observations_of.len() != state_count {
            return Err(ModelError::Invalid(format!(
                "expected {state_count} transition and observation rows, got {} and {}",
                transitions.len(),
                observations_of.len()
            )));
        }
        let init_sum = check_row(&init, state_count, "state", || "init".into())?;
        if (init_sum - 1.0).abs() > PROB_TOL {
            return Err(ModelError::InitSum(init_sum));
        }
        let mut init_dense = vec![0.0; state_count];
        for (i, p) in init {
            init_dense[i] += p;
        }

        let mut flat = Vec::with_capacity(state_count * n_a);
        for (s, rows) in transitions.into_iter().enumerate() {
            if rows.len() != n_a {
                return Err(ModelError::Invalid(format!("state {s} has {} action rows, expected {n_a}", rows.len())));
            }
            for (a, row) in rows.into_iter().enumerate() {
                let sum = check_row(&row, state_count, "state", || format!("T({s}, {a})"))?;
                if sum != 0.0 && (sum - 1.0).abs() > PROB_TOL {
                    return Err(ModelError::TransitionRowSum { state: s, action: a, sum });
                }
                flat.push(normalise_row(row));
            }
        }
        let mut obs = vec![0.0; state_count * n_o];
        for (s, row) in observations_of.into_iter().enumerate() {
            let sum = check_row(&row, n_o, "observation", || format!("O({s})"))?;
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(ModelError::ObservationRowSum { state: s, sum });
            }
            for (o, p) in row {
                obs[s * n_o + o] += p;
            }
        }
        Ok(Pomdp {
            state_count,
            actions,
            observations,
            init: init_dense,
            transitions: flat,
            obs,
        })
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn observation_count(&self) -> usize {
        self.observations.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observations
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == name)
    }

    pub fn observation_index(&self, name: &str) -> Option<usize> {
        self.observations.iter().position(|o| o == name)
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn initial_belief(&self) -> Belief {
        Belief(self.init.clone())
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.actions.len() + a]
    }

    pub fn observation_prob(&self, s: usize, o: usize) -> f64 {
        self.obs[s * self.observations.len() + o]
    }

    pub fn observation_row(&self, s: usize) -> &[f64] {
        let n = self.observations.len();
        &self.obs[s * n..(s + 1) * n]
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        !self.transition_row(s, a).is_empty()
    }

    pub fn available_actions(&self, s: usize) -> Vec<usize> {
        (0..self.action_count()).filter(|&a| self.is_available(s, a)).collect()
    }

    fn check_dim(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.state_count {
            return Err(ModelError::DimensionMismatch {
                expected: self.state_count,
                got: b.len(),
            });
        }
        Ok(())
    }

    /// `out[s'] = Σ_s b(s) T(s, a, s')`
    pub fn predict_into(&self, b: &[f64], a: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (s, &w) in b.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(t, p) in self.transition_row(s, a) {
                out[t] += w * p;
            }
        }
    }

    /// Bayesian posterior after acting with `a` and observing `o`, written to
    /// `out`. Returns the normaliser `P(o | b, a)`.
    pub fn belief_update_into(&self, b: &[f64], a: usize, o: usize, out: &mut [f64]) -> Result<f64> {
        self.check_dim(b)?;
        self.predict_into(b, a, out);
        let n_o = self.observations.len();
        let mut norm = 0.0;
        for (s, x) in out.iter_mut().enumerate() {
            if *x != 0.0 {
                *x *= self.obs[s * n_o + o];
                norm += *x;
            }
        }
        if norm <= 0.0 {
            return Err(ModelError::ImpossibleObservation { action: a, observation: o });
        }
        out.iter_mut().for_each(|x| *x /= norm);
        Ok(norm)
    }

    pub fn belief_update(&self, b: &Belief, a: usize, o: usize) -> Result<Belief> {
        let mut out = vec![0.0; self.state_count];
        self.belief_update_into(b, a, o, &mut out)?;
        Ok(Belief(out))
    }

    /// `P(o | b, a) = Σ_{s'} O(s', o) Σ_s T(s, a, s') b(s)` for every `o`.
    pub fn observation_likelihood(&self, b: &Belief, a: usize) -> Result<Vec<f64>> {
        self.check_dim(b)?;
        let mut pred = vec![0.0; self.state_count];
        self.predict_into(b, a, &mut pred);
        let n_o = self.observations.len();
        let mut out = vec![0.0; n_o];
        for (s, &w) in pred.iter().enumerate() {
            if w != 0.0 {
                for (o, acc) in out.iter_mut().enumerate() {
                    *acc += w * self.obs[s * n_o + o];
                }
            }
        }
        Ok(out)
    }

    /// Samples `s' ~ T(s, a, ·)` then `o ~ O(s', ·)`.
    pub fn sample_step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, usize)> {
        let row = self.transition_row(s, a);
        if row.is_empty() {
            return Err(ModelError::UnavailableAction { state: s, action: a });
        }
        let next = sample_sparse(row, rng);
        let o = sample_dense(self.observation_row(next), rng);
        Ok((next, o))
    }

    /// Sparse transition rows, for serialisation.
    pub(crate) fn transition_rows(&self) -> impl Iterator<Item = (usize, usize, &SparseRow)> {
        let n_a = self.actions.len();
        self.transitions.iter().enumerate().map(move |(i, r)| (i / n_a, i % n_a, r))
    }
}

/// An action-observation sequence with its cached belief.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    steps: Vec<(usize, usize)>,
    belief: Belief,
}

impl History {
    pub fn empty(m: &Pomdp) -> Self {
        History {
            steps: Vec::new(),
            belief: m.initial_belief(),
        }
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    /// `h · a · o`
    pub fn extended(&self, m: &Pomdp, a: usize, o: usize) -> Result<History> {
        let belief = m.belief_update(&self.belief, a, o)?;
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.extend_from_slice(&self.steps);
        steps.push((a, o));
        Ok(History { steps, belief })
    }

    /// Replays the sequence from the initial distribution.
    pub fn recompute(&self, m: &Pomdp) -> Result<Belief> {
        let mut b = m.initial_belief();
        for &(a, o) in &self.steps {
            b = m.belief_update(&b, a, o)?;
        }
        Ok(b)
    }
}

/// A model together with its declared atoms and objective text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedModel {
    pub pomdp: Pomdp,
    pub atoms: AtomTable,
    pub objective: String,
}

impl LoadedModel {
    /// Checks atom indices against the state count and parses the objective.
    pub fn validate(&self) -> Result<Objective> {
        for atom in self.atoms.values() {
            if let Some(max) = atom.max_index() {
                if max >= self.pomdp.state_count() {
                    return Err(ModelError::AtomOutOfRange {
                        atom: atom.name().to_string(),
                        index: max,
                        count: self.pomdp.state_count(),
                    });
                }
            }
        }
        Ok(parse_formula(&self.objective, &self.atoms)?)
    }

    pub fn objective(&self) -> Result<Objective> {
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// s0 -a-> s1 deterministically; s1 always emits o1, s0 emits o0.
    fn chain() -> Pomdp {
        Pomdp::new(
            2,
            names("a", 1),
            names("o", 2),
            vec![(0, 1.0)],
            vec![vec![vec![(1, 1.0)]], vec![vec![(1, 1.0)]]],
            vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        )
        .unwrap()
    }

    /// Identity dynamics, noisy sensor.
    fn sensor() -> Pomdp {
        Pomdp::new(
            2,
            names("a", 1),
            names("o", 2),
            vec![(0, 0.5), (1, 0.5)],
            vec![vec![vec![(0, 1.0)]], vec![vec![(1, 1.0)]]],
            vec![vec![(0, 0.8), (1, 0.2)], vec![(0, 0.2), (1, 0.8)]],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_update() {
        let m = chain();
        let b = m.belief_update(&Belief::point(2, 0), 0, 1).unwrap();
        assert_eq!(&*b, &[0.0, 1.0]);
        assert_eq!(m.observation_likelihood(&Belief::point(2, 0), 0).unwrap(), vec![0.0, 1.0]);
        assert!(matches!(
            m.belief_update(&Belief::point(2, 0), 0, 0),
            Err(ModelError::ImpossibleObservation { .. })
        ));
    }

    #[test]
    fn bayes_rule_update() {
        let m = sensor();
        let b = m.belief_update(&Belief::uniform(2), 0, 0).unwrap();
        assert!((b[0] - 0.8).abs() < 1e-15 && (b[1] - 0.2).abs() < 1e-15);
        let lik = m.observation_likelihood(&Belief::uniform(2), 0).unwrap();
        assert!((lik[0] - 0.5).abs() < 1e-15 && (lik[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_rows() {
        let bad = Pomdp::new(
            1,
            names("a", 1),
            names("o", 1),
            vec![(0, 1.0)],
            vec![vec![vec![(0, 0.9)]]],
            vec![vec![(0, 1.0)]],
        );
        assert!(matches!(bad, Err(ModelError::TransitionRowSum { state: 0, action: 0, .. })));
        let bad = Pomdp::new(
            1,
            names("a", 1),
            names("o", 1),
            vec![(0, 1.0)],
            vec![vec![vec![(0, 1.0)]]],
            vec![vec![(0, 0.5)]],
        );
        assert!(matches!(bad, Err(ModelError::ObservationRowSum { state: 0, .. })));
        let bad = Pomdp::new(
            1,
            names("a", 1),
            names("o", 1),
            vec![(0, 1.0)],
            vec![vec![vec![(2, 1.0)]]],
            vec![vec![(0, 1.0)]],
        );
        assert!(matches!(bad, Err(ModelError::IndexOutOfRange { index: 2, .. })));
    }

    #[test]
    fn sample_step_on_deterministic_rows() {
        let m = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(m.sample_step(0, 0, &mut rng).unwrap(), (1, 1));
        }
    }

    #[test]
    fn sample_step_frequencies_within_three_sigma() {
        let m = Pomdp::new(
            3,
            names("a", 1),
            names("o", 1),
            vec![(0, 1.0)],
            vec![vec![vec![(0, 0.5), (1, 0.3), (2, 0.2)]]; 3],
            vec![vec![(0, 1.0)]; 3],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[m.sample_step(0, 0, &mut rng).unwrap().0] += 1;
        }
        for (k, p) in [0.5, 0.3, 0.2].into_iter().enumerate() {
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((counts[k] as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn unavailable_action_cannot_be_sampled() {
        let m = Pomdp::new(
            1,
            names("a", 2),
            names("o", 1),
            vec![(0, 1.0)],
            vec![vec![vec![(0, 1.0)], vec![]]],
            vec![vec![(0, 1.0)]],
        )
        .unwrap();
        assert_eq!(m.available_actions(0), vec![0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(m.sample_step(0, 1, &mut rng), Err(ModelError::UnavailableAction { .. })));
    }

    fn arb_model() -> impl Strategy<Value = Pomdp> {
        (2usize..5, 1usize..3, 1usize..4).prop_flat_map(|(n, na, no)| {
            let row = move |k: usize| prop::collection::vec(0.0f64..1.0, k).prop_map(|v| {
                let s: f64 = v.iter().sum::<f64>() + 1e-3;
                v.iter().enumerate().map(|(i, x)| (i, (x + 1e-3 / v.len() as f64) / s)).collect::<SparseRow>()
            });
            (
                prop::collection::vec(prop::collection::vec(row(n), na), n),
                prop::collection::vec(row(no), n),
            )
                .prop_map(move |(t, o)| {
                    Pomdp::new(n, names("a", na), names("o", no), vec![(0, 1.0)], t, o).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn posterior_times_likelihood_recomposes_joint(m in arb_model(), raw in prop::collection::vec(0.01f64..1.0, 5), a_pick in 0usize..4) {
            let n = m.state_count();
            let s: f64 = raw[..n].iter().sum();
            let b = Belief::new(raw[..n].iter().map(|x| x / s).collect()).unwrap();
            let a = a_pick % m.action_count();
            let lik = m.observation_likelihood(&b, a).unwrap();
            prop_assert!((lik.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let mut pred = vec![0.0; n];
            m.predict_into(&b, a, &mut pred);
            for (o, &p) in lik.iter().enumerate() {
                if p > 0.0 {
                    let post = m.belief_update(&b, a, o).unwrap();
                    prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    for s in 0..n {
                        let joint = pred[s] * m.observation_prob(s, o);
                        prop_assert!((post[s] * p - joint).abs() < 1e-9);
                    }
                }
            }
        }

        #[test]
        fn history_cache_matches_replay(m in arb_model(), seq in prop::collection::vec((0usize..4, 0usize..4), 0..8), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h = History::empty(&m);
            let mut s = 0;
            for (a, _) in seq {
                let a = a % m.action_count();
                let (s2, o) = m.sample_step(s, a, &mut rng).unwrap();
                s = s2;
                h = h.extended(&m, a, o).unwrap();
            }
            let replay = h.recompute(&m).unwrap();
            for (x, y) in replay.iter().zip(h.belief().iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
