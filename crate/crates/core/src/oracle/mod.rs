//! Independent reference computations used by the test suites and by
//! `rpg selftest`: finite-difference gradient checks and exact expectations
//! over a tiny enumerable decision process.

pub mod gradcheck;
pub mod tiny_mdp;
