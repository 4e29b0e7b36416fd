//! Closed-loop episodes and batch experiments with CSV statistics.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::Dfa;
use crate::formula::LabelVector;
use crate::planner::{Planner, PlannerConfig, PlannerError, SearchResult};
use crate::pomdp::Pomdp;
use crate::product::{Product, ProductError, ProductState, TraceRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Product(#[from] ProductError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub horizon: usize,
    pub planner: PlannerConfig,
    pub master_seed: u64,
    /// ‖b‖∞ is held constant once it exceeds this value.
    pub belief_fix_threshold: f64,
    pub hist_bin_width: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            runs: 100,
            horizon: 100,
            planner: PlannerConfig::default(),
            master_seed: 0,
            belief_fix_threshold: 0.9,
            hist_bin_width: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be at least 1".into()));
        }
        if self.hist_bin_width == 0 {
            return Err(HarnessError::Config("histogram bin width must be at least 1".into()));
        }
        self.planner.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Accepted,
    DeadAutomaton,
    HorizonExceeded,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Accepted => "accepted",
            Termination::DeadAutomaton => "dead-automaton",
            Termination::HorizonExceeded => "horizon-exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub cause: Termination,
    pub total_reward: f64,
    /// ‖b‖∞ before the first action and after every step, with the fixing rule applied.
    pub max_belief: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    /// Executed (action, observation) pairs.
    pub history: Vec<(usize, usize)>,
    /// Labels read by the automaton, one per step.
    pub labels: Vec<LabelVector>,
}

/// Chooses the action at a product state.
pub trait Policy {
    fn choose(&mut self, x: &ProductState) -> Result<usize>;
}

/// Fresh search per move; `log` sees every search result.
pub struct MctsPolicy<'a, F> {
    pub planner: Planner<'a>,
    pub log: F,
}

impl<F: FnMut(&SearchResult)> Policy for MctsPolicy<'_, F> {
    fn choose(&mut self, x: &ProductState) -> Result<usize> {
        let res = self.planner.search(x)?;
        (self.log)(&res);
        Ok(res.action)
    }
}

pub struct UniformPolicy<R> {
    pub actions: usize,
    pub rng: R,
}

impl<R: Rng> Policy for UniformPolicy<R> {
    fn choose(&mut self, _: &ProductState) -> Result<usize> {
        Ok(self.rng.gen_range(0..self.actions))
    }
}

/// Seed of a derived stream, from a splitmix64 mix of `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs one closed-loop episode: the hidden state is drawn from the initial
/// distribution, the policy acts on product states, the environment samples
/// the true transition and observation.
pub fn run_episode_with<P: Policy, R: Rng>(
    product: Product<'_>,
    policy: &mut P,
    horizon: usize,
    fix_threshold: f64,
    env: &mut R,
) -> Result<EpisodeResult> {
    let pomdp = product.pomdp;
    let dfa = product.dfa;
    let mut x = product.init();
    let mut s = x.belief().expect("initial product state is a node").sample(env);
    let mut max_belief = Vec::with_capacity(horizon + 1);
    let mut fixed: Option<f64> = None;
    let mut record = |b: f64, out: &mut Vec<f64>| {
        let v = fixed.unwrap_or(b);
        if fixed.is_none() && b > fix_threshold {
            fixed = Some(b);
        }
        out.push(v);
    };
    record(x.belief().unwrap().max_component(), &mut max_belief);

    let mut trace = Vec::new();
    let mut history = Vec::new();
    let mut labels = Vec::new();
    let mut total_reward = 0.0;
    let mut cause = Termination::HorizonExceeded;
    let mut steps = horizon;

    for t in 0..horizon {
        let node = x.node().expect("episodes stop before the sink");
        if dfa.is_dead(node.q) {
            cause = Termination::DeadAutomaton;
            steps = t;
            break;
        }
        labels.push(product.label(node.history.belief()));
        let a = policy.choose(&x)?;
        let (s2, o) = pomdp.sample_step(s, a, env).map_err(ProductError::from)?;
        let out = product.advance(&x, a, o)?;
        s = s2;
        x = out.next;
        total_reward += out.reward;
        history.push((a, o));
        let node = x.node().expect("advance from a non-final node stays off the sink");
        let b = node.history.belief().max_component();
        record(b, &mut max_belief);
        trace.push(TraceRecord {
            step: t,
            action: pomdp.action_names()[a].clone(),
            observation: pomdp.observation_names()[o].clone(),
            q: node.q,
            reward: out.reward,
            max_belief: b,
        });
        if out.reward > 0.0 {
            cause = Termination::Accepted;
            steps = t + 1;
            break;
        }
        if dfa.is_dead(node.q) {
            cause = Termination::DeadAutomaton;
            steps = t + 1;
            break;
        }
    }

    Ok(EpisodeResult {
        success: cause == Termination::Accepted,
        steps,
        cause,
        total_reward,
        max_belief,
        trace,
        history,
        labels,
    })
}

/// Episode `index` of an experiment, planned by MCTS.
pub fn run_episode(pomdp: &Pomdp, dfa: &Dfa, cfg: &ExperimentConfig, index: usize) -> Result<EpisodeResult> {
    run_episode_logged(pomdp, dfa, cfg, index, |_| {})
}

/// [`run_episode`] with a hook on every root search.
pub fn run_episode_logged<F: FnMut(&SearchResult)>(
    pomdp: &Pomdp,
    dfa: &Dfa,
    cfg: &ExperimentConfig,
    index: usize,
    log: F,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    let product = Product::new(pomdp, dfa)?;
    let seed = derive_seed(cfg.master_seed, index as u64);
    let planner_cfg = PlannerConfig {
        seed: derive_seed(seed, 0),
        ..cfg.planner.clone()
    };
    let mut policy = MctsPolicy {
        planner: Planner::new(product, planner_cfg)?,
        log,
    };
    let mut env = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    run_episode_with(product, &mut policy, cfg.horizon, cfg.belief_fix_threshold, &mut env)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean steps among successful runs, `None` without successes.
    pub mean_steps: Option<f64>,
    pub accepted: usize,
    pub dead_automaton: usize,
    pub horizon_exceeded: usize,
    /// `(bin start, count)` over successful runs.
    pub steps_histogram: Vec<(usize, usize)>,
    /// `(step, mean ‖b‖∞, active runs)` over successful runs.
    pub belief_trajectory: Vec<(usize, f64, usize)>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub episodes: Vec<EpisodeResult>,
    pub summary: ExperimentSummary,
}

pub fn run_experiment(pomdp: &Pomdp, dfa: &Dfa, cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    Product::new(pomdp, dfa)?;
    let episodes = run_all(pomdp, dfa, cfg)?;
    let summary = summarize(&episodes, cfg.hist_bin_width);
    Ok(Experiment { episodes, summary })
}

#[cfg(feature = "parallel")]
fn run_all(pomdp: &Pomdp, dfa: &Dfa, cfg: &ExperimentConfig) -> Result<Vec<EpisodeResult>> {
    use rayon::prelude::*;
    (0..cfg.runs).into_par_iter().map(|i| run_episode(pomdp, dfa, cfg, i)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(pomdp: &Pomdp, dfa: &Dfa, cfg: &ExperimentConfig) -> Result<Vec<EpisodeResult>> {
    (0..cfg.runs).map(|i| run_episode(pomdp, dfa, cfg, i)).collect()
}

pub fn summarize(episodes: &[EpisodeResult], bin_width: usize) -> ExperimentSummary {
    let count = |c| episodes.iter().filter(|e| e.cause == c).count();
    let wins: Vec<&EpisodeResult> = episodes.iter().filter(|e| e.success).collect();
    let mean_steps = if wins.is_empty() {
        None
    } else {
        Some(wins.iter().map(|e| e.steps as f64).sum::<f64>() / wins.len() as f64)
    };

    let bin_width = bin_width.max(1);
    let mut hist: Vec<usize> = Vec::new();
    for e in &wins {
        let bin = e.steps / bin_width;
        if hist.len() <= bin {
            hist.resize(bin + 1, 0);
        }
        hist[bin] += 1;
    }

    let longest = wins.iter().map(|e| e.max_belief.len()).max().unwrap_or(0);
    let belief_trajectory = (0..longest)
        .map(|t| {
            let active = wins.iter().filter(|e| t < e.max_belief.len()).count();
            let sum: f64 = wins
                .iter()
                .map(|e| e.max_belief.get(t).or(e.max_belief.last()).copied().unwrap_or(0.0))
                .sum();
            (t, sum / wins.len() as f64, active)
        })
        .collect();

    ExperimentSummary {
        runs: episodes.len(),
        successes: wins.len(),
        success_rate: wins.len() as f64 / episodes.len().max(1) as f64,
        mean_steps,
        accepted: count(Termination::Accepted),
        dead_automaton: count(Termination::DeadAutomaton),
        horizon_exceeded: count(Termination::HorizonExceeded),
        steps_histogram: hist.into_iter().enumerate().map(|(i, c)| (i * bin_width, c)).collect(),
        belief_trajectory,
    }
}

/// Writes `episodes.csv`, `steps_hist.csv`, `belief_inf.csv` and `summary.csv`.
pub fn write_csvs(dir: &Path, exp: &Experiment) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("episodes.csv"))?;
    w.write_record(["run", "success", "steps", "cause"])?;
    for (i, e) in exp.episodes.iter().enumerate() {
        w.write_record([i.to_string(), e.success.to_string(), e.steps.to_string(), e.cause.as_str().to_string()])?;
    }
    w.flush()?;

    let s = &exp.summary;
    let mut w = csv::Writer::from_path(dir.join("steps_hist.csv"))?;
    w.write_record(["bin", "count"])?;
    for (bin, count) in &s.steps_histogram {
        w.write_record([bin.to_string(), count.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("belief_inf.csv"))?;
    w.write_record(["step", "mean_max_belief", "active_runs"])?;
    for (t, mean, active) in &s.belief_trajectory {
        w.write_record([t.to_string(), format!("{mean:.6}"), active.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "runs",
        "successes",
        "success_rate",
        "mean_steps",
        "accepted",
        "dead_automaton",
        "horizon_exceeded",
    ])?;
    w.write_record([
        s.runs.to_string(),
        s.successes.to_string(),
        format!("{:.4}", s.success_rate),
        s.mean_steps.map(|m| format!("{m:.4}")).unwrap_or_default(),
        s.accepted.to_string(),
        s.dead_automaton.to_string(),
        s.horizon_exceeded.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
