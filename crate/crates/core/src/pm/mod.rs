//! Partial monitoring: games where the learner sees only a feedback symbol,
//! never the loss itself.
//!
//! The pipeline is: parse a game ([`game::Game`]), analyze its structure
//! ([`analysis::analyze`] — cells, neighbors, observability witnesses, the
//! telescoping baseline estimator, and the feedback class), then run a
//! best-of-both-worlds FTRL learner whose sampling distribution and loss
//! estimator are re-optimized every round ([`estimator::ebo_solve`]) and
//! whose learning rate adapts to the realized round values
//! ([`run::run_pm_episode`]). The [`lp`] module provides the exact simplex
//! solver behind the cell geometry.

pub mod analysis;
pub mod estimator;
pub mod game;
pub mod lp;
pub mod run;

pub use analysis::{analyze, AnalyzedGame, EstimatorG, GameClass, Witness};
pub use estimator::{ebo_objective, ebo_solve, EboSolution};
pub use game::Game;
pub use run::{
    run_pm_episode, PmAgent, PmEnvSpec, PmEnvironment, PmEpisodeResult, PmStepDiagnostics,
};
