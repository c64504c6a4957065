//! Incentive-compatible elicitation of probability quantiles.
//!
//! * [`beliefs`]: distributions on `[0, 1]` describing an expert's uncertainty.
//! * [`utility`]: utility of monetary payoffs with `u(0) = 0`.
//! * [`scoring`]: binary and quantile scoring rules, with numerical properness checks.
//! * [`mechanism`]: the externally randomized reward that stays truthful under risk aversion.
//! * [`simulation`]: Monte Carlo experts playing against the mechanism.
//! * [`session`]: commit-reveal elicitation sessions with an append-only event log.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beliefs;
mod error;
pub mod mechanism;
pub mod numeric;
pub mod scoring;
pub mod session;
pub mod simulation;
pub mod streams;
pub mod utility;

pub use beliefs::{Belief, BeliefSpec, BetaBelief, PiecewiseLinearBelief, UniformBelief};
pub use error::{Error, Result};
pub use mechanism::{GenieDraw, MechanismConfig};
pub use utility::Utility;
