//! Posterior g-computation.
//!
//! For each posterior draw, `B` trajectories of the multi-course
//! competing-risks process are simulated forward under a rule: baseline
//! covariates from the Bayesian bootstrap, later covariates from the
//! confounder models, then latent waits to the next course and to death by
//! inverse-CDF sampling, taking whichever comes first. Averaging over
//! trajectories gives per-draw survival `Ψ(t)`, adverse-event probability
//! `Φ(s)` and utility `U = Ψ(t_ref) - Φ(s)`.
//!
//! Trajectory `b` of draw `m` always uses the same random stream, whatever
//! the rule, so rule comparisons use common random numbers.

mod optimize;
mod simulate;
mod summary;

pub use optimize::{hdi_set, optimize_rule, Objective, OptimalRulePosterior};
pub use simulate::{
    estimate_survival, gcompute, simulate_trajectory, DrawModel, GCompConfig, GCompResult,
    SurvivalEstimate, Trajectory,
};
pub use summary::{contrast, posterior_summary, ContrastKind, ContrastResult, PosteriorSummary};
