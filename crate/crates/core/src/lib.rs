//! Minimal ruin probability under constrained investment for the
//! Cramér–Lundberg model with a risky asset.

pub mod checks;
pub mod cli;
pub mod config;
pub mod curve;
pub mod error;
pub mod exp_solver;
pub mod general_solver;
pub mod model;
pub mod ode;
pub mod operators;
pub mod quadrature;
pub mod regime;
pub mod simulator;

pub use curve::{CurveNode, SolutionCurve, SwitchPoint};
pub use error::{Error, Result};
pub use model::{ClaimLaw, ModelParams};
pub use regime::Regime;
