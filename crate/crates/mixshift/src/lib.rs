//! Optimal data mixing for mixture-distribution test targets.
//!
//! A test distribution is a mixture of `K` components with proportions `p`;
//! training draws `N` samples from the same components with proportions `q`.
//! Each component has a learning curve `e_k(n)` giving its error after `n`
//! samples, and the expected test loss is
//!
//! ```text
//! L_N(p, q) = Σ_k p_k · E_{n ~ Mult(q, N)}[e_k(n_k)]
//! ```
//!
//! This crate computes the optimal training proportions `q*`, the resulting
//! loss `L*` versus the matched loss `L_same = L_N(p, p)`, and sample
//! complexity ratios, for several curve families:
//!
//! - [`powerlaw`]: curves `A/(n^α + B)` — asymptotic closed form plus an
//!   exact Lagrange/bisection solver for the deterministic approximation.
//! - [`memorization`]: 0/1 curves `e(n) = 1{n = 0}` — exact water-filling.
//! - [`transfer`]: two-term transfer curves — reduction to the power-law case
//!   plus a q-independent offset.
//! - [`pds`]: finite-difference stationarity test deciding whether a strictly
//!   better shifted mixture exists at a given `p`.
//! - [`simulate`]: seeded Monte Carlo ground truth and a skill-composition
//!   model with an idealized memorizing learner.
//! - [`solver`]: model-agnostic simplex minimization (mirror descent + grid
//!   oracle) and sample-complexity search.
//!
//! The `mixshift` binary exposes all of this behind JSON/CSV subcommands; see
//! [`cli`].

pub mod cli;
pub mod core;
pub mod error;
pub mod memorization;
pub mod pds;
pub mod powerlaw;
pub mod simulate;
pub mod solver;
pub mod transfer;

pub use crate::core::{
    eval_curve, expected_component_error, mixture_loss, LearningCurve, MixingSolution,
    MixtureProblem, SimplexVec,
};
pub use crate::error::{Error, Result};
