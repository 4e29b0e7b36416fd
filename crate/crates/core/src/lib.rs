//! Planning for POMDPs under co-safe temporal logic objectives over beliefs.
//!
//! Objectives are parsed into formulas over linear belief inequalities,
//! compiled to a DFA by progression, and combined with the belief MDP into a
//! product whose accepting states are searched for with MCTS.

pub mod automata;
pub mod formula;
pub mod harness;
pub mod planner;
pub mod pomdp;
pub mod product;
