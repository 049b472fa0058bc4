//! Consensus ADMM over a star (master/worker) topology.
//!
//! The crate solves problems of the form
//!
//! ```text
//! minimize  sum_i f_i(x) + h(x)
//! ```
//!
//! by replicating `x` once per worker and enforcing `x_i = x_0` through an
//! augmented Lagrangian. Three drivers are provided:
//!
//! * [`engine::run_sync`]: the classic synchronous distributed ADMM.
//! * [`engine::run_ad_admm`]: asynchronous ADMM where workers own `(x_i, λ_i)`
//!   and the master only consumes updates from the workers that arrived.
//! * [`engine::run_alternative`]: the variant in which the master also owns the
//!   duals; it behaves identically in a synchronous network but needs strong
//!   convexity and a small penalty once delays appear.
//!
//! Asynchrony is simulated from the master's point of view using a seeded
//! bounded-delay arrival process ([`scheduler`]). The same protocol also runs
//! for real over TCP in [`netrun`]. [`advisor`] evaluates the closed-form
//! parameter bounds and [`diagnostics`] re-checks the descent, staleness and
//! lower-boundedness inequalities that the convergence proof relies on.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advisor;
pub mod cli;
pub mod diagnostics;
pub mod engine;
mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod netrun;
pub mod problems;
pub mod reference;
pub mod scheduler;

pub use error::{Error, Result};
pub use model::{
    eval_augmented_lagrangian, eval_objective, kkt_residuals, ConsensusState, Curvature, KktResidual, ProblemInstance,
    Regularizer, SmoothBlock, Vector,
};
