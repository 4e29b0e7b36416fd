//! Deterministic finite automata compiled from co-safe formulas.
//!
//! Compilation explores the closure of the formula under [`progress`] for every
//! label vector; each distinct canonical residual becomes one state. The
//! residual `true` is the accepting sink and `false` the rejecting one.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::formula::{progress, Atom, Formula, LabelVector, Objective};

pub const DEFAULT_STATE_BOUND: usize = 100_000;

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("formula closure exceeds the state bound of {0}")]
    StateBound(usize),
    #[error("invalid automaton: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dfa {
    atoms: Vec<Atom>,
    /// Human-readable description of each state (its progression residual).
    state_names: Vec<String>,
    /// Row-major `state * alphabet_size + label bits`.
    delta: Vec<usize>,
    initial: usize,
    finals: Vec<bool>,
    dead: Option<usize>,
}

/// Builds the progression closure of `objective` without minimising it.
pub fn compile(objective: &Objective, state_bound: usize) -> Result<Dfa, AutomatonError> {
    let width = objective.atoms.len();
    let names = objective.atom_names();
    let labels: Vec<LabelVector> = LabelVector::all(width).collect();

    let mut index: HashMap<Formula, usize> = HashMap::new();
    let mut states: Vec<Formula> = Vec::new();
    let mut delta: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();

    index.insert(objective.formula.clone(), 0);
    states.push(objective.formula.clone());
    queue.push_back(0);
    while let Some(q) = queue.pop_front() {
        let row_start = delta.len();
        debug_assert_eq!(row_start, q * labels.len());
        for &label in &labels {
            let next = progress(&states[q], label);
            let target = match index.get(&next) {
                Some(&t) => t,
                None => {
                    if states.len() >= state_bound {
                        return Err(AutomatonError::StateBound(state_bound));
                    }
                    let t = states.len();
                    index.insert(next.clone(), t);
                    states.push(next);
                    queue.push_back(t);
                    t
                }
            };
            delta.push(target);
        }
    }

    let finals = states.iter().map(|f| *f == Formula::True).collect();
    let dead = states.iter().position(|f| *f == Formula::False);
    Ok(Dfa {
        atoms: objective.atoms.clone(),
        state_names: states.iter().map(|f| f.display(&names).to_string()).collect(),
        delta,
        initial: 0,
        finals,
        dead,
    })
}

/// Compiles and minimises with the default state bound.
pub fn compile_minimal(objective: &Objective) -> Result<Dfa, AutomatonError> {
    Ok(compile(objective, DEFAULT_STATE_BOUND)?.minimize())
}

impl Dfa {
    /// Assembles an automaton from an explicit transition table
    /// (`delta[state][label bits]`).
    pub fn from_parts(
        atoms: Vec<Atom>,
        delta: Vec<Vec<usize>>,
        initial: usize,
        finals: Vec<bool>,
    ) -> Result<Self, AutomatonError> {
        let n = delta.len();
        let alphabet = 1usize << atoms.len();
        if finals.len() != n {
            return Err(AutomatonError::Invalid(format!("{} final flags for {n} states", finals.len())));
        }
        if initial >= n {
            return Err(AutomatonError::Invalid(format!("initial state {initial} out of range")));
        }
        for (q, row) in delta.iter().enumerate() {
            if row.len() != alphabet {
                return Err(AutomatonError::Invalid(format!(
                    "state {q} has {} transitions, expected {alphabet}",
                    row.len()
                )));
            }
            if let Some(&t) = row.iter().find(|&&t| t >= n) {
                return Err(AutomatonError::Invalid(format!("state {q} targets missing state {t}")));
            }
        }
        let mut dfa = Dfa {
            atoms,
            state_names: (0..n).map(|q| format!("s{q}")).collect(),
            delta: delta.into_iter().flatten().collect(),
            initial,
            finals,
            dead: None,
        };
        let live = dfa.coreachable();
        dfa.dead = (0..n).find(|&q| !live[q] && (0..alphabet).all(|l| dfa.delta[q * alphabet + l] == q));
        Ok(dfa)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_names(&self) -> Vec<String> {
        self.atoms.iter().map(|a| a.name().to_string()).collect()
    }

    pub fn width(&self) -> usize {
        self.atoms.len()
    }

    pub fn alphabet_size(&self) -> usize {
        1 << self.atoms.len()
    }

    pub fn state_count(&self) -> usize {
        self.finals.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_final(&self, q: usize) -> bool {
        self.finals[q]
    }

    pub fn finals(&self) -> impl Iterator<Item = usize> + '_ {
        self.finals.iter().enumerate().filter(|(_, &f)| f).map(|(q, _)| q)
    }

    /// The rejecting absorbing state, when one is reachable.
    pub fn dead(&self) -> Option<usize> {
        self.dead
    }

    pub fn is_dead(&self, q: usize) -> bool {
        self.dead == Some(q)
    }

    pub fn state_name(&self, q: usize) -> &str {
        &self.state_names[q]
    }

    /// Number of states from which an accepting state is reachable.
    pub fn live_state_count(&self) -> usize {
        self.coreachable().iter().filter(|&&l| l).count()
    }

    pub fn step(&self, q: usize, label: LabelVector) -> usize {
        debug_assert_eq!(label.width(), self.width());
        self.delta[q * self.alphabet_size() + label.bits() as usize]
    }

    /// True iff the run from the initial state visits an accepting state.
    pub fn accepts_prefix(&self, word: &[LabelVector]) -> bool {
        let mut q = self.initial;
        if self.finals[q] {
            return true;
        }
        for &l in word {
            q = self.step(q, l);
            if self.finals[q] {
                return true;
            }
        }
        false
    }

    fn successors(&self, q: usize) -> &[usize] {
        let k = self.alphabet_size();
        &self.delta[q * k..(q + 1) * k]
    }

    fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.state_count()];
        let mut stack = vec![self.initial];
        seen[self.initial] = true;
        while let Some(q) = stack.pop() {
            for &t in self.successors(q) {
                if !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen
    }

    fn coreachable(&self) -> Vec<bool> {
        let n = self.state_count();
        let mut preds = vec![Vec::new(); n];
        for q in 0..n {
            for &t in self.successors(q) {
                preds[t].push(q);
            }
        }
        let mut live = self.finals.clone();
        let mut stack: Vec<usize> = self.finals().collect();
        while let Some(q) = stack.pop() {
            for &p in &preds[q] {
                if !live[p] {
                    live[p] = true;
                    stack.push(p);
                }
            }
        }
        live
    }

    /// Language-equivalent automaton with the fewest states, built by
    /// Hopcroft partition refinement over the reachable part. States are
    /// renumbered breadth-first from the initial state.
    pub fn minimize(&self) -> Dfa {
        let k = self.alphabet_size();
        let reach = self.reachable();
        let states: Vec<usize> = (0..self.state_count()).filter(|&q| reach[q]).collect();

        // inverse[letter][target] = sources
        let mut inverse = vec![vec![Vec::new(); self.state_count()]; k];
        for &q in &states {
            for (l, &t) in self.successors(q).iter().enumerate() {
                inverse[l][t].push(q);
            }
        }

        let mut block_of = vec![usize::MAX; self.state_count()];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let (acc, rej): (Vec<usize>, Vec<usize>) = states.iter().partition(|&&q| self.finals[q]);
        for part in [acc, rej] {
            if !part.is_empty() {
                for &q in &part {
                    block_of[q] = blocks.len();
                }
                blocks.push(part);
            }
        }

        let mut work: VecDeque<usize> = (0..blocks.len()).collect();
        let mut in_work = vec![true; blocks.len()];
        while let Some(splitter) = work.pop_front() {
            in_work[splitter] = false;
            let members = blocks[splitter].clone();
            for inv in &inverse {
                // Group predecessors of the splitter by their current block.
                let mut hit: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for &t in &members {
                    for &p in &inv[t] {
                        hit.entry(block_of[p]).or_default().push(p);
                    }
                }
                for (b, mut inside) in hit {
                    inside.sort_unstable();
                    inside.dedup();
                    if inside.len() == blocks[b].len() {
                        continue;
                    }
                    let outside: Vec<usize> = blocks[b].iter().copied().filter(|q| inside.binary_search(q).is_err()).collect();
                    let new_id = blocks.len();
                    // Keep the larger half in place; the smaller one becomes the new block.
                    let (stay, moved) = if inside.len() <= outside.len() {
                        (outside, inside)
                    } else {
                        (inside, outside)
                    };
                    for &q in &moved {
                        block_of[q] = new_id;
                    }
                    blocks[b] = stay;
                    blocks.push(moved);
                    // Whether or not `b` is still queued, queuing the smaller half suffices.
                    in_work.push(true);
                    work.push_back(new_id);
                }
            }
        }

        // Renumber blocks breadth-first from the initial block.
        let mut order = vec![usize::MAX; blocks.len()];
        let mut seq = Vec::new();
        let mut queue = VecDeque::from([block_of[self.initial]]);
        order[block_of[self.initial]] = 0;
        seq.push(block_of[self.initial]);
        while let Some(b) = queue.pop_front() {
            let rep = blocks[b][0];
            for &t in self.successors(rep) {
                let tb = block_of[t];
                if order[tb] == usize::MAX {
                    order[tb] = seq.len();
                    seq.push(tb);
                    queue.push_back(tb);
                }
            }
        }

        let mut delta = Vec::with_capacity(seq.len() * k);
        let mut finals = Vec::with_capacity(seq.len());
        let mut names = Vec::with_capacity(seq.len());
        for &b in &seq {
            let rep = *blocks[b].iter().min().unwrap();
            delta.extend(self.successors(rep).iter().map(|&t| order[block_of[t]]));
            finals.push(self.finals[rep]);
            names.push(self.state_names[rep].clone());
        }
        let mut out = Dfa {
            atoms: self.atoms.clone(),
            state_names: names,
            delta,
            initial: 0,
            finals,
            dead: None,
        };
        let live = out.coreachable();
        out.dead = live.iter().position(|&l| !l);
        out
    }

    /// Graphviz rendering; parallel edges are merged into one guard.
    pub fn export_dot(&self) -> String {
        let names = self.atom_names();
        let mut out = String::from("digraph dfa {\n  rankdir=LR;\n  node [shape=circle];\n  __start [shape=point];\n");
        let _ = writeln!(out, "  __start -> q{};", self.initial);
        for q in 0..self.state_count() {
            let shape = if self.finals[q] { "doublecircle" } else { "circle" };
            let style = if self.is_dead(q) { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  q{q} [shape={shape}{style}, label=\"{q}\", tooltip=\"{}\"];",
                escape(&self.state_names[q])
            );
        }
        for q in 0..self.state_count() {
            let mut by_target: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
            for (l, &t) in self.successors(q).iter().enumerate() {
                by_target.entry(t).or_default().push(l as u32);
            }
            for (t, labels) in by_target {
                let guard = render_guard(&labels, &names);
                let _ = writeln!(out, "  q{q} -> q{t} [label=\"{}\"];", escape(&guard));
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct State<'a> {
            id: usize,
            formula: &'a str,
            accepting: bool,
            transitions: BTreeMap<u32, usize>,
        }
        #[derive(Serialize)]
        struct Dump<'a> {
            atoms: Vec<String>,
            initial: usize,
            finals: Vec<usize>,
            dead: Option<usize>,
            live_states: usize,
            states: Vec<State<'a>>,
        }
        let dump = Dump {
            atoms: self.atom_names(),
            initial: self.initial,
            finals: self.finals().collect(),
            dead: self.dead,
            live_states: self.live_state_count(),
            states: (0..self.state_count())
                .map(|q| State {
                    id: q,
                    formula: &self.state_names[q],
                    accepting: self.finals[q],
                    transitions: self.successors(q).iter().enumerate().map(|(l, &t)| (l as u32, t)).collect(),
                })
                .collect(),
        };
        serde_json::to_value(dump).expect("automaton dump is always serialisable")
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// A product term: `mask` selects the bits that matter, `value` their polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Cube {
    value: u32,
    mask: u32,
}

impl Cube {
    fn covers(&self, minterm: u32) -> bool {
        minterm & self.mask == self.value
    }
}

/// Prime implicants of the label set, then a greedy cover.
fn render_guard(labels: &[u32], names: &[String]) -> String {
    let width = names.len();
    let full = if width == 0 { 0 } else { (1u32 << width) - 1 };
    if labels.len() == 1usize << width {
        return "true".into();
    }
    let mut level: Vec<Cube> = labels.iter().map(|&l| Cube { value: l, mask: full }).collect();
    let mut primes: Vec<Cube> = Vec::new();
    while !level.is_empty() {
        let mut used = vec![false; level.len()];
        let mut next: Vec<Cube> = Vec::new();
        for i in 0..level.len() {
            for j in i + 1..level.len() {
                let (a, b) = (level[i], level[j]);
                let diff = a.value ^ b.value;
                if a.mask == b.mask && diff.count_ones() == 1 {
                    used[i] = true;
                    used[j] = true;
                    let c = Cube {
                        value: a.value & !diff,
                        mask: a.mask & !diff,
                    };
                    if !next.contains(&c) {
                        next.push(c);
                    }
                }
            }
        }
        primes.extend(level.iter().zip(&used).filter(|(_, &u)| !u).map(|(c, _)| *c));
        level = next;
    }
    primes.sort();
    primes.dedup();

    let mut uncovered: Vec<u32> = labels.to_vec();
    let mut chosen: Vec<Cube> = Vec::new();
    while !uncovered.is_empty() {
        let best = *primes
            .iter()
            .max_by_key(|c| (uncovered.iter().filter(|&&m| c.covers(m)).count(), std::cmp::Reverse(**c)))
            .expect("every label is covered by some prime");
        uncovered.retain(|&m| !best.covers(m));
        chosen.push(best);
    }
    chosen.sort();
    let terms: Vec<String> = chosen
        .iter()
        .map(|c| {
            let lits: Vec<String> = (0..width)
                .filter(|i| c.mask & (1 << i) != 0)
                .map(|i| {
                    if c.value & (1 << i) != 0 {
                        names[i].clone()
                    } else {
                        format!("!{}", names[i])
                    }
                })
                .collect();
            if lits.is_empty() {
                "true".to_string()
            } else {
                lits.join(" & ")
            }
        })
        .collect();
    terms.join(" | ")
}
