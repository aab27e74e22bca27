//! Threshold equilibria of a stopper versus a hidden-type controller.
//!
//! A controller of unknown type (active with probability `p`) chooses high
//! or low effort; a stopper watching the income stream decides when to end
//! the game. The crate validates parameters, evaluates the closed-form
//! value functions, solves for the equilibrium thresholds, certifies them
//! and checks them by Monte Carlo simulation.

pub mod closed_form;
pub mod error;
pub mod params;
pub mod simulate;
pub mod solver;

#[cfg(feature = "cli")]
pub mod cli;

pub use closed_form::{Side, ThresholdPair, ValueCurves};
pub use error::{GameError, Result};
pub use params::{validate, ModelParams, ValidationReport};
pub use solver::{certify, solve_equilibrium, EquilibriumCertificate, SolverOpts};
