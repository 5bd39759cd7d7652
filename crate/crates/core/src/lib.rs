//! Benchmark library for follow-the-regularized-leader (FTRL) bandit
//! algorithms driven by stability-penalty-adaptive (SPA) learning rates.
//!
//! The crate provides:
//!
//! - [`simplex`]: probability/loss vectors and the scalar facts used by the
//!   regret analysis (entropy, `xi`, `zeta`, stability suprema, Bregman
//!   divergences, uniform mixing);
//! - [`ftrl`]: an FTRL solver over the simplex for negative-entropy plus
//!   log-barrier regularizers, with KKT residual reporting and a
//!   penalty/stability decomposition of per-round regret;
//! - [`spa`]: the SPA learning-rate state machine, its sequence-condition
//!   checks, machine-checkable regret certificates, and the bisection used
//!   when the rate is defined implicitly through the next round's entropy;
//! - [`mab`]: three sparsity-adaptive multi-armed-bandit agents (entropy-only
//!   with uniform exploration, log-barrier hybrid, and a best-of-both-worlds
//!   hybrid) with per-round self-checks;
//! - [`env`]: adversarial, stochastic, and corrupted-stochastic loss
//!   generators with regret accounting;
//! - [`pm`]: partial-monitoring games: geometry analysis, local-observability
//!   witnesses, an exploration-by-optimization inner solver, and a runner;
//! - [`bench`]: experiment configs, trace/summary files, a parallel runner,
//!   and an offline certificate checker backing the `spa-bench` CLI.

pub mod bench;
pub mod env;
pub mod error;
pub mod ftrl;
pub mod mab;
pub mod pm;
pub mod seeding;
pub mod simplex;
pub mod spa;

pub use error::{Error, Result};
