//! Cohort schema, long-format ingestion and history design vectors.
//!
//! A cohort is stored one row per (subject, course). Course `k` carries the
//! covariates `L_k` measured at course initiation, the treatment `a_k`, the
//! waiting time `w_k` to the next event and the transition indicator
//! (`+1` death, `0` censored, `-1` next course).

mod cohort;
mod encoder;
mod schema;

pub use cohort::{Cohort, CourseRecord, SubjectRecord, Transition};
pub use encoder::{encode_waiting_time, Encoder, HistoryVector, Path, Standardization};
pub use schema::{CovariateKind, CovariateSpec, LagPolicy, Schema};
