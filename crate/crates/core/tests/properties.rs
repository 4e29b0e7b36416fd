use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sciltl::automata::compile_minimal;
use sciltl::formula::{
    and, eventually, next, or, trace_satisfies, until, Atom, Formula, LabelVector, LinearAtom, Objective, Verdict,
};
use sciltl::planner::{expectimax_value, Planner, PlannerConfig};
use sciltl::pomdp::parse_model;
use sciltl::product::{Product, ProductState};

const MODEL: &str = "\
# two rooms, a noisy door sensor
states 3
actions left right
observations quiet click
init 0 0.6
init 1 0.4
T 0 left 0 1
T 0 right 1 0.7
T 0 right 0 0.3
T 1 left 0 0.5
T 1 left 2 0.5
T 1 right 2 1
T 2 left 2 1
T 2 right 1 1
O 0 quiet 0.9
O 0 click 0.1
O 1 quiet 0.3
O 1 click 0.7
O 2 click 1
atom far {2:1} > 0.8
atom near {0:1} >= 0.7
objective !far U near
";

fn random_formula<R: Rng>(atoms: usize, depth: usize, rng: &mut R) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        let i = rng.gen_range(0..atoms);
        return if rng.gen_bool(0.5) { Formula::Atom(i) } else { Formula::NegAtom(i) };
    }
    let op = rng.gen_range(0..5);
    let mut sub = || random_formula(atoms, depth - 1, rng);
    match op {
        0 => next(sub()),
        1 => eventually(sub()),
        2 => and([sub(), sub()]),
        3 => or([sub(), sub()]),
        _ => until(sub(), sub()),
    }
}

#[test]
fn automaton_agrees_with_progression_on_longer_words() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let atoms: Vec<Atom> = (0..3)
        .map(|i| Atom::Linear(LinearAtom::indicator(format!("p{i}"), i, 0.5, true)))
        .collect();
    for _ in 0..1000 {
        let f = random_formula(3, 4, &mut rng);
        let full = compile_minimal(&Objective {
            formula: f.clone(),
            atoms: atoms.clone(),
        })
        .unwrap();
        let len = rng.gen_range(6..=14);
        let w: Vec<LabelVector> = (0..len).map(|_| LabelVector::new(rng.gen_range(0..8), 3)).collect();
        for k in 0..=w.len() {
            assert_eq!(
                full.accepts_prefix(&w[..k]),
                trace_satisfies(&f, &w[..k]) == Verdict::Satisfied,
                "{f:?} on {:?}",
                &w[..k]
            );
        }
    }
}

/// Explores every action and observation branch to `depth` and returns the
/// largest reward collected below a dead automaton state.
fn reward_below_dead(p: Product<'_>, x: &ProductState, depth: usize, below_dead: bool) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let dead_here = below_dead || p.is_dead(x);
    let mut worst: f64 = 0.0;
    for a in 0..p.pomdp.action_count() {
        for (_, next, reward) in p.enumerate_successors(x, a).unwrap() {
            if dead_here {
                worst = worst.max(reward);
            }
            worst = worst.max(reward_below_dead(p, &next, depth - 1, dead_here));
        }
    }
    worst
}

#[test]
fn dead_states_never_pay() {
    let lm = parse_model(MODEL).unwrap();
    let d = compile_minimal(&lm.validate().unwrap()).unwrap();
    assert!(d.dead().is_some());
    let p = Product::new(&lm.pomdp, &d).unwrap();
    assert_eq!(reward_below_dead(p, &p.init(), 4, false), 0.0);
}

#[test]
fn model_file_to_plan() {
    let lm = parse_model(MODEL).unwrap();
    let d = compile_minimal(&lm.validate().unwrap()).unwrap();
    let p = Product::new(&lm.pomdp, &d).unwrap();
    let v = expectimax_value(&p.init(), 4, p).unwrap();
    assert!(v > 0.0 && v < 1.0, "{v}");
    let cfg = PlannerConfig {
        simulations: 20_000,
        max_depth: 4,
        seed: 3,
        ..PlannerConfig::default()
    };
    let res = Planner::new(p, cfg).unwrap().search(&p.init()).unwrap();
    assert!((res.value() - v).abs() < 0.05, "{} vs {v}", res.value());
}
