//! Multi-state stochastic SIRD model with interstate mobility.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`] and [`policy`]: parameters, country roster, policy calendars and the
//!   per-day policy multipliers.
//! - [`mobility`]: policy-adjusted travel/commute matrices, net-flow operators and the
//!   flow covariance algebra.
//! - [`dynamics`]: one-step conditional moments and Jacobian of the stacked
//!   `[D, S, I, R, beta]` state, effective reproduction numbers, and an exact
//!   micro-level simulator.
//! - [`filter`]: extended Kalman filter plus Rauch-Tung-Striebel and
//!   Bryson-Frazier smoothers.
//! - [`estimation`]: weekly seasonal adjustment, quasi-likelihood fitting and
//!   sensitivity sweeps.
//! - [`counterfactual`]: scenario construction and the paired baseline/fictitious
//!   state-space used to compute excess deaths.
//! - [`io`]: CSV and text formats shared with the command-line front end.

pub mod counterfactual;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod filter;
pub mod io;
pub mod linalg;
pub mod mobility;
pub mod model;
pub mod policy;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use model::{Country, LatentState, ModelParams};
pub use policy::{PolicyCalendar, PolicyKind, PolicyMultipliers};
