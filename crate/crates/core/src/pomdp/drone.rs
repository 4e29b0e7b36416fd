//! Drone-probing grid world: a drone with a short-range quadrant sensor has to
//! localise a randomly moving ground target and then land on a goal cell.
//!
//! Hidden state `drone_cell * cells + target_cell`, with `cell = y * width + x`.
//! North is `+y`, east is `+x`.

use crate::formula::{AnyOf, Atom, AtomTable, LinearAtom};

use super::{LoadedModel, ModelError, Pomdp, Result, SparseRow};

pub const DRONE_ACTIONS: [&str; 5] = ["N", "S", "E", "W", "X"];
pub const DRONE_OBSERVATIONS: [&str; 5] = ["SW", "NW", "NE", "SE", "None"];

/// Observation indices, in [`DRONE_OBSERVATIONS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    SouthWest = 0,
    NorthWest = 1,
    NorthEast = 2,
    SouthEast = 3,
    None = 4,
}

/// Objective: get a confident fix on the target, land only afterwards.
pub const DRONE_OBJECTIVE: &str = "F measured & F goal & (!goal U measured)";

/// Threshold of the goal atom. The drone position is deterministic, so the
/// goal mass is exactly 0 or 1 in exact arithmetic; the threshold sits one
/// rounding error below 1 so normalised floating-point beliefs still qualify.
pub const GOAL_THRESHOLD: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneProbing {
    pub width: usize,
    pub height: usize,
    /// Confidence required on the target location.
    pub threshold: f64,
    pub goal: (usize, usize),
}

impl Default for DroneProbing {
    fn default() -> Self {
        DroneProbing {
            width: 4,
            height: 4,
            threshold: 0.9,
            goal: (3, 3),
        }
    }
}

impl DroneProbing {
    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn state(&self, drone: usize, target: usize) -> usize {
        drone * self.cells() + target
    }

    /// `(drone_cell, target_cell)`
    pub fn decode(&self, state: usize) -> (usize, usize) {
        (state / self.cells(), state % self.cells())
    }

    /// Drone move; moves off the grid leave the drone in place.
    pub fn move_drone(&self, cell: usize, action: usize) -> usize {
        let (x, y) = self.coords(cell);
        let (x, y) = match DRONE_ACTIONS[action] {
            "N" if y + 1 < self.height => (x, y + 1),
            "S" if y > 0 => (x, y - 1),
            "E" if x + 1 < self.width => (x + 1, y),
            "W" if x > 0 => (x - 1, y),
            _ => (x, y),
        };
        self.cell(x, y)
    }

    /// In-grid 4-neighbours of a cell.
    pub fn neighbours(&self, cell: usize) -> Vec<usize> {
        let (x, y) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if y + 1 < self.height {
            out.push(self.cell(x, y + 1));
        }
        if y > 0 {
            out.push(self.cell(x, y - 1));
        }
        if x + 1 < self.width {
            out.push(self.cell(x + 1, y));
        }
        if x > 0 {
            out.push(self.cell(x - 1, y));
        }
        out
    }

    /// Sensor distribution over [`DRONE_OBSERVATIONS`] for a drone/target pair.
    /// The field of view is the 3x3 block around the drone.
    pub fn sensor(&self, drone: usize, target: usize) -> [f64; 5] {
        use Quadrant::*;
        let (dx0, dy0) = self.coords(drone);
        let (tx, ty) = self.coords(target);
        let dx = tx as isize - dx0 as isize;
        let dy = ty as isize - dy0 as isize;
        let mut out = [0.0; 5];
        let mut put = |qs: &[Quadrant]| {
            for &q in qs {
                out[q as usize] += 1.0 / qs.len() as f64;
            }
        };
        match (dx, dy) {
            (0, 0) => put(&[SouthWest, NorthWest, NorthEast, SouthEast]),
            (0, 1) => put(&[NorthWest, NorthEast]),
            (0, -1) => put(&[SouthWest, SouthEast]),
            (1, 0) => put(&[NorthEast, SouthEast]),
            (-1, 0) => put(&[SouthWest, NorthWest]),
            (1, 1) => put(&[NorthEast]),
            (-1, 1) => put(&[NorthWest]),
            (-1, -1) => put(&[SouthWest]),
            (1, -1) => put(&[SouthEast]),
            _ => put(&[None]),
        }
        out
    }

    pub fn goal_cell(&self) -> usize {
        self.cell(self.goal.0, self.goal.1)
    }

    /// Target-location marginal of a belief over hidden states.
    pub fn target_marginal(&self, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells()];
        for (s, &p) in belief.iter().enumerate() {
            out[s % self.cells()] += p;
        }
        out
    }

    /// Drone-location marginal of a belief over hidden states.
    pub fn drone_marginal(&self, belief: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cells()];
        for (s, &p) in belief.iter().enumerate() {
            out[s / self.cells()] += p;
        }
        out
    }

    pub fn build(&self) -> Result<LoadedModel> {
        if self.width < 2 || self.height < 2 {
            return Err(ModelError::Invalid(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.goal.0 >= self.width || self.goal.1 >= self.height {
            return Err(ModelError::Invalid(format!("goal {:?} is outside the grid", self.goal)));
        }
        let cells = self.cells();
        let n = cells * cells;
        let start = self.cell(0, 0);

        let init: SparseRow = (0..cells)
            .filter(|&t| t != start)
            .map(|t| (self.state(start, t), 1.0 / (cells - 1) as f64))
            .collect();

        let mut transitions = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);
        for s in 0..n {
            let (drone, target) = self.decode(s);
            let moves = self.neighbours(target);
            let rows = (0..DRONE_ACTIONS.len())
                .map(|a| {
                    let d2 = self.move_drone(drone, a);
                    moves.iter().map(|&t2| (self.state(d2, t2), 1.0 / moves.len() as f64)).collect()
                })
                .collect();
            transitions.push(rows);
            observations.push(
                self.sensor(drone, target)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(o, &p)| (o, p))
                    .collect(),
            );
        }
        let pomdp = Pomdp::new(
            n,
            DRONE_ACTIONS.iter().map(|s| s.to_string()).collect(),
            DRONE_OBSERVATIONS.iter().map(|s| s.to_string()).collect(),
            init,
            transitions,
            observations,
        )?;

        let goal = self.goal_cell();
        let mut atoms = AtomTable::new();
        atoms.insert(
            "measured".into(),
            Atom::AnyOf {
                name: "measured".into(),
                group: AnyOf::MaxComponent {
                    threshold: self.threshold,
                    strict: true,
                },
            },
        );
        atoms.insert(
            "goal".into(),
            Atom::Linear(LinearAtom::new(
                "goal",
                (0..cells).map(|t| (self.state(goal, t), 1.0)).collect(),
                GOAL_THRESHOLD,
                false,
            )),
        );
        Ok(LoadedModel {
            pomdp,
            atoms,
            objective: DRONE_OBJECTIVE.to_string(),
        })
    }
}

/// The drone-probing benchmark with the given grid, confidence threshold and
/// landing cell.
pub fn drone_probing_model(width: usize, height: usize, threshold: f64, goal: (usize, usize)) -> Result<LoadedModel> {
    DroneProbing {
        width,
        height,
        threshold,
        goal,
    }
    .build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::label_of;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_model() -> (DroneProbing, LoadedModel) {
        let g = DroneProbing::default();
        let m = g.build().unwrap();
        (g, m)
    }

    #[test]
    fn sizes() {
        let (_, m) = default_model();
        assert_eq!(m.pomdp.state_count(), 256);
        assert_eq!(m.pomdp.action_count(), 5);
        assert_eq!(m.pomdp.observation_count(), 5);
        let obj = m.validate().unwrap();
        assert_eq!(obj.atom_names(), vec!["goal", "measured"]);
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(drone_probing_model(1, 4, 0.9, (0, 0)).is_err());
        assert!(drone_probing_model(4, 4, 0.9, (4, 0)).is_err());
    }

    #[test]
    fn sensor_cases() {
        let g = DroneProbing::default();
        let d = g.cell(1, 1);
        assert_eq!(g.sensor(d, d), [0.25, 0.25, 0.25, 0.25, 0.0]);
        assert_eq!(g.sensor(d, g.cell(1, 2)), [0.0, 0.5, 0.5, 0.0, 0.0]);
        assert_eq!(g.sensor(d, g.cell(2, 2)), [0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.sensor(d, g.cell(0, 0)), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.sensor(d, g.cell(3, 1)), [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn initial_belief_excludes_start_corner() {
        let (g, m) = default_model();
        let marg = g.target_marginal(m.pomdp.init());
        assert_eq!(marg[0], 0.0);
        for &p in &marg[1..] {
            assert!((p - 1.0 / 15.0).abs() < 1e-15);
        }
        assert!((g.drone_marginal(m.pomdp.init())[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_stochastic_and_target_always_moves() {
        let (g, m) = default_model();
        for s in 0..256 {
            let (_, t) = g.decode(s);
            for a in 0..5 {
                let row = m.pomdp.transition_row(s, a);
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&(s2, _)| g.decode(s2).1 != t));
            }
        }
    }

    #[test]
    fn north_move_and_sensor() {
        let (g, m) = default_model();
        let s = g.state(g.cell(1, 1), g.cell(3, 3));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (s2, o) = m.pomdp.sample_step(s, 0, &mut rng).unwrap();
            let (d2, t2) = g.decode(s2);
            assert_eq!(g.coords(d2), (1, 2));
            assert!(g.sensor(d2, t2)[o] > 0.0);
        }
    }

    /// Hand-derived posterior after one `X` from the start with observation NE:
    /// only targets that end at (1,1) can produce NE from (0,0).
    #[test]
    fn posterior_after_northeast_observation() {
        let (g, m) = default_model();
        let b0 = m.pomdp.initial_belief();
        let x = 4;
        let ne = Quadrant::NorthEast as usize;
        let lik = m.pomdp.observation_likelihood(&b0, x).unwrap();

        // Oracle: push the uniform target prior through the random walk by hand.
        let mut prior_next = [0.0; 16];
        for t in 1..16 {
            let nb = g.neighbours(t);
            for &t2 in &nb {
                prior_next[t2] += (1.0 / 15.0) / nb.len() as f64;
            }
        }
        let in_view: f64 = [g.cell(0, 0), g.cell(1, 0), g.cell(0, 1), g.cell(1, 1)].iter().map(|&c| prior_next[c]).sum();
        assert!((lik[Quadrant::None as usize] - (1.0 - in_view)).abs() < 1e-12);
        let expect_ne = prior_next[g.cell(0, 0)] * 0.25 + prior_next[g.cell(1, 0)] * 0.5 + prior_next[g.cell(0, 1)] * 0.5 + prior_next[g.cell(1, 1)];
        assert!((lik[ne] - expect_ne).abs() < 1e-12);

        let post = m.pomdp.belief_update(&b0, x, ne).unwrap();
        let marg = g.target_marginal(&post);
        for c in 0..16 {
            let w = match g.coords(c) {
                (0, 0) => 0.25,
                (1, 0) | (0, 1) => 0.5,
                (1, 1) => 1.0,
                _ => 0.0,
            };
            assert!((marg[c] - prior_next[c] * w / expect_ne).abs() < 1e-12, "cell {c}");
        }
        // Repeated NE observations while hovering concentrate on (1,1).
        let obj = m.validate().unwrap();
        let mut b = post;
        for _ in 0..10 {
            match m.pomdp.belief_update(&b, x, ne) {
                Ok(nb) => b = nb,
                Err(_) => break,
            }
            let label = label_of(&b, &obj.atoms).unwrap();
            let oracle = g.target_marginal(&b).iter().any(|&p| p > 0.9);
            assert_eq!(label.get(1), oracle);
        }
    }

    #[test]
    fn goal_atom_fires_on_landing() {
        let (g, m) = default_model();
        let obj = m.validate().unwrap();
        let mut b = m.pomdp.initial_belief();
        let mut s = g.state(0, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for a in [0, 0, 0, 2, 2, 2] {
            let (s2, o) = m.pomdp.sample_step(s, a, &mut rng).unwrap();
            s = s2;
            b = m.pomdp.belief_update(&b, a, o).unwrap();
        }
        assert_eq!(g.decode(s).0, g.goal_cell());
        assert!(label_of(&b, &obj.atoms).unwrap().get(0));
    }
}
