//! Browser bindings: objective compilation and an interactive drone-probing
//! run. Everything crossing the boundary is JSON text or plain numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use sciltl::automata::{compile_minimal, Dfa};
use sciltl::formula::parse_formula;
use sciltl::harness::derive_seed;
use sciltl::planner::{Planner, PlannerConfig};
use sciltl::pomdp::{DroneProbing, LoadedModel, DRONE_ACTIONS, DRONE_OBSERVATIONS};
use sciltl::product::{Product, ProductState};

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Compiles `formula` over the drone atoms (`goal`, `measured`) and returns
/// the automaton as JSON with an extra `dot` field.
#[wasm_bindgen]
pub fn compile_objective(formula: &str) -> Result<String, JsValue> {
    compile_json(formula).map_err(js_err)
}

fn compile_json(formula: &str) -> Result<String, String> {
    let m = DroneProbing::default().build().map_err(|e| e.to_string())?;
    let obj = parse_formula(formula, &m.atoms).map_err(|e| e.to_string())?;
    let dfa = compile_minimal(&obj).map_err(|e| e.to_string())?;
    let mut v = dfa.to_json();
    v["formula"] = json!(obj.to_string());
    v["state_count"] = json!(dfa.state_count());
    v["dot"] = json!(dfa.export_dot());
    Ok(v.to_string())
}

#[wasm_bindgen]
pub struct DroneDemo {
    grid: DroneProbing,
    model: LoadedModel,
    dfa: Dfa,
    x: ProductState,
    hidden: usize,
    rng: ChaCha8Rng,
    seed: u64,
    steps: usize,
    sims: usize,
    depth: usize,
}

#[wasm_bindgen]
impl DroneDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, sims: usize, depth: usize) -> Result<DroneDemo, JsValue> {
        let grid = DroneProbing::default();
        let model = grid.build().map_err(js_err)?;
        let dfa = compile_minimal(&model.validate().map_err(js_err)?).map_err(js_err)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Product::new(&model.pomdp, &dfa).map_err(js_err)?.init();
        let hidden = x.belief().unwrap().sample(&mut rng);
        Ok(DroneDemo {
            grid,
            model,
            dfa,
            x,
            hidden,
            rng,
            seed,
            steps: 0,
            sims: sims.max(1),
            depth: depth.max(1),
        })
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    /// Target-location marginal of the current belief, row-major by cell.
    pub fn target_marginal(&self) -> Vec<f64> {
        match self.x.belief() {
            Some(b) => self.grid.target_marginal(b),
            None => vec![0.0; self.grid.cells()],
        }
    }

    /// JSON snapshot: drone and true target cells, automaton state, status.
    pub fn state(&self) -> String {
        let (drone, target) = self.grid.decode(self.hidden);
        let q = self.x.node().map(|n| n.q);
        json!({
            "drone": self.grid.coords(drone),
            "target": self.grid.coords(target),
            "q": q,
            "q_formula": q.map(|q| self.dfa.state_name(q).to_string()),
            "steps": self.steps,
            "max_belief": self.x.belief().map(|b| b.max_component()),
            "status": self.status(),
        })
        .to_string()
    }

    fn status(&self) -> &'static str {
        match &self.x {
            ProductState::Sink => "accepted",
            ProductState::Node(n) if self.dfa.is_final(n.q) => "accepted",
            ProductState::Node(n) if self.dfa.is_dead(n.q) => "failed",
            _ => "running",
        }
    }

    /// Plans one move with MCTS and executes it on the hidden state.
    pub fn step(&mut self) -> Result<String, JsValue> {
        if self.status() != "running" {
            return Ok(self.state());
        }
        let product = Product::new(&self.model.pomdp, &self.dfa).map_err(js_err)?;
        let cfg = PlannerConfig {
            simulations: self.sims,
            max_depth: self.depth,
            seed: derive_seed(self.seed, self.steps as u64),
            ..PlannerConfig::default()
        };
        let res = Planner::new(product, cfg).and_then(|mut p| p.search(&self.x)).map_err(js_err)?;
        let (s2, o) = self
            .model
            .pomdp
            .sample_step(self.hidden, res.action, &mut self.rng)
            .map_err(js_err)?;
        self.hidden = s2;
        self.advance(res.action, o)?;
        let values: Vec<f64> = res.actions.iter().map(|a| a.value).collect();
        let mut v: serde_json::Value = serde_json::from_str(&self.state()).unwrap();
        v["action"] = json!(DRONE_ACTIONS[res.action]);
        v["observation"] = json!(DRONE_OBSERVATIONS[o]);
        v["values"] = json!(values);
        Ok(v.to_string())
    }

    /// Manual belief update with a chosen action and observation. The hidden
    /// drone follows the action; the hidden target is resampled from the posterior.
    pub fn apply(&mut self, action: &str, observation: &str) -> Result<String, JsValue> {
        let m = &self.model.pomdp;
        let a = m.action_index(action).ok_or_else(|| js_err(format!("unknown action {action}")))?;
        let o = m
            .observation_index(observation)
            .ok_or_else(|| js_err(format!("unknown observation {observation}")))?;
        if self.status() != "running" {
            return Ok(self.state());
        }
        self.advance(a, o)?;
        if let Some(b) = self.x.belief() {
            self.hidden = b.sample(&mut self.rng);
        }
        Ok(self.state())
    }

    fn advance(&mut self, a: usize, o: usize) -> Result<(), JsValue> {
        let product = Product::new(&self.model.pomdp, &self.dfa).map_err(js_err)?;
        let out = product.advance(&self.x, a, o).map_err(js_err)?;
        self.x = out.next;
        self.steps += 1;
        Ok(())
    }
}
