//! Hard satisfiable formulas for DPLL solvers whose heuristics run in small memory.
//!
//! The crate builds boundary-expander matrices, encodes parity systems over them
//! as CNF, simulates offline/online/shifted-input Turing machines (including the
//! offline-to-online compiler), runs DPLL with streaming heuristics, and attacks a
//! given heuristic with a certified pair of indistinguishable formulas.

pub mod gf2;
pub mod expander;
pub mod cnf;
pub mod tm;
pub mod offline2online;
pub mod dpll;
pub mod adversary;
