//! Bayesian semiparametric estimation of dynamic treatment rules for
//! multi-course treatment sequences with survival outcomes.
//!
//! The pipeline has four stages:
//!
//! 1. [`data_model`] ingests a long-format cohort (one row per subject and
//!    course) and builds the history design vectors used by every model.
//! 2. [`mcmc`] fits cause-specific proportional hazards for the next course
//!    and for death at each course (piecewise-constant baselines under a
//!    Gamma Process prior, or a Weibull comparator) together with sequential
//!    confounder models.
//! 3. [`gcomp`] turns each posterior draw into a potential survival curve
//!    under a [`rules::DecisionRule`] by forward simulation of the
//!    continuous-time transition process.
//! 4. [`simgen`] generates synthetic cohorts with a known truth and runs the
//!    frequentist calibration harness.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod confounders;
pub mod data_model;
pub mod error;
pub mod gcomp;
pub mod hazards;
pub mod kv;
pub mod mcmc;
pub mod rng;
pub mod rules;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
