//! Sequential confounder models `f_k(l_k | history)`.
//!
//! Time-varying covariates at course `k >= 2` are conditionally independent
//! given the confounder design, each with its own regression: Beta
//! (proportions, logit mean), logistic (binary) or Gaussian (continuous, on
//! the standardized scale). The baseline distribution `f_1` is a Bayesian
//! bootstrap over the observed course-1 rows.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data_model::{CovariateKind, Encoder};
use crate::stats::{dot, log1p_exp, logistic};

/// Proportions are clamped to `[EPS, 1 - EPS]` before Beta evaluation.
pub const PROPORTION_EPS: f64 = 1e-6;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Submodel {
    /// `Beta(μφ, (1 - μ)φ)` with `logit μ = z'η`.
    Beta {
        coef: Vec<f64>,
        precision: f64,
    },
    Logistic {
        coef: Vec<f64>,
    },
    /// Normal with mean `z'η` and standard deviation `sd`.
    Gaussian {
        coef: Vec<f64>,
        sd: f64,
    },
}

impl Submodel {
    /// Zero coefficients, unit precision/noise, for a covariate kind.
    pub fn initial(kind: CovariateKind, dim: usize) -> Self {
        let coef = vec![0.0; dim];
        match kind {
            CovariateKind::Proportion => Submodel::Beta {
                coef,
                precision: 10.0,
            },
            CovariateKind::Binary => Submodel::Logistic { coef },
            CovariateKind::Continuous => Submodel::Gaussian { coef, sd: 1.0 },
        }
    }

    pub fn coef(&self) -> &[f64] {
        match self {
            Submodel::Beta { coef, .. }
            | Submodel::Logistic { coef }
            | Submodel::Gaussian { coef, .. } => coef,
        }
    }

    pub fn coef_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Submodel::Beta { coef, .. }
            | Submodel::Logistic { coef }
            | Submodel::Gaussian { coef, .. } => coef,
        }
    }

    /// Draws one value on the model scale (standardized for Gaussian).
    pub fn simulate<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> f64 {
        match self {
            Submodel::Beta { coef, precision } => {
                let mu = logistic(dot(z, coef)).clamp(PROPORTION_EPS, 1.0 - PROPORTION_EPS);
                let beta = Beta::new(mu * precision, (1.0 - mu) * precision)
                    .expect("positive Beta parameters");
                beta.sample(rng).clamp(PROPORTION_EPS, 1.0 - PROPORTION_EPS)
            }
            Submodel::Logistic { coef } => {
                let p = logistic(dot(z, coef));
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            Submodel::Gaussian { coef, sd } => {
                let e: f64 = rng.sample(StandardNormal);
                dot(z, coef) + sd * e
            }
        }
    }

    /// Conditional log-density of `y` (model scale).
    pub fn log_density(&self, z: &[f64], y: f64) -> f64 {
        self.log_density_at(dot(z, self.coef()), y)
    }

    /// Log-density given the linear predictor `eta = z'η`.
    pub fn log_density_at(&self, eta: f64, y: f64) -> f64 {
        match self {
            Submodel::Beta { precision, .. } => beta_log_density(eta, *precision, y),
            Submodel::Logistic { .. } => y * eta - log1p_exp(eta),
            Submodel::Gaussian { sd, .. } => {
                let r = (y - eta) / sd;
                -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * r * r
            }
        }
    }
}

pub(crate) fn clamp_proportion(y: f64) -> f64 {
    if !(PROPORTION_EPS..=1.0 - PROPORTION_EPS).contains(&y) {
        if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!(
                "proportion {y} clamped to [{PROPORTION_EPS}, {}]",
                1.0 - PROPORTION_EPS
            );
        }
        y.clamp(PROPORTION_EPS, 1.0 - PROPORTION_EPS)
    } else {
        y
    }
}

pub(crate) fn beta_log_density(eta: f64, precision: f64, y: f64) -> f64 {
    let y = clamp_proportion(y);
    let mu = logistic(eta).clamp(1e-12, 1.0 - 1e-12);
    let a = mu * precision;
    let b = (1.0 - mu) * precision;
    ln_gamma(precision) - ln_gamma(a) - ln_gamma(b)
        + (a - 1.0) * y.ln()
        + (b - 1.0) * (1.0 - y).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    /// Covariate index in schema order.
    pub covariate: usize,
    pub submodel: Submodel,
}

/// `f_k` for one course `k >= 2`: one submodel per time-varying covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderModel {
    pub course: usize,
    pub models: Vec<CovariateModel>,
}

impl ConfounderModel {
    /// Simulates the time-varying covariates at this course. Baseline entries
    /// of `out` are left untouched.
    pub fn simulate_into<R: Rng + ?Sized>(
        &self,
        encoder: &Encoder,
        z: &[f64],
        rng: &mut R,
        out: &mut [f64],
    ) {
        for m in &self.models {
            let draw = m.submodel.simulate(z, rng);
            out[m.covariate] = encoder.decode_value(m.covariate, draw);
        }
    }

    pub fn simulate_confounders<R: Rng + ?Sized>(
        &self,
        encoder: &Encoder,
        z: &[f64],
        baseline: &[f64],
        rng: &mut R,
    ) -> Vec<f64> {
        let mut out = baseline.to_vec();
        self.simulate_into(encoder, z, rng, &mut out);
        out
    }

    /// Joint log-density of the observed covariates, the sum of the
    /// per-covariate terms (model scale).
    pub fn loglik_confounders(&self, encoder: &Encoder, z: &[f64], observed: &[f64]) -> f64 {
        self.models
            .iter()
            .map(|m| {
                m.submodel
                    .log_density(z, encoder.encode_value(m.covariate, observed[m.covariate]))
            })
            .sum()
    }
}

/// One Dirichlet(1, ..., 1) draw of length `n`.
pub fn bayesian_bootstrap_draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    assert!(n >= 1, "bootstrap needs at least one row");
    if n == 1 {
        return vec![1.0];
    }
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Bayesian-bootstrap baseline distribution `f_1`.
#[derive(Debug, Clone)]
pub struct BaselineBootstrap {
    rows: Arc<Vec<Vec<f64>>>,
    index: WeightedIndex<f64>,
}

impl BaselineBootstrap {
    pub fn new(rows: Arc<Vec<Vec<f64>>>, weights: &[f64]) -> crate::Result<Self> {
        if rows.len() != weights.len() {
            return Err(crate::Error::Format(format!(
                "{} bootstrap weights for {} baseline rows",
                weights.len(),
                rows.len()
            )));
        }
        let index = WeightedIndex::new(weights)
            .map_err(|e| crate::Error::Format(format!("invalid bootstrap weights: {e}")))?;
        Ok(BaselineBootstrap { rows, index })
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &[f64] {
        &self.rows[self.sample_index(rng)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::{mean, variance};
    use approx::assert_abs_diff_eq;

    #[test]
    fn degenerate_bootstrap_returns_first_row() {
        let rows = Arc::new(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let boot = BaselineBootstrap::new(rows, &[1.0, 0.0, 0.0]).unwrap();
        let mut r = rng::stream(1, &[]);
        for _ in 0..1000 {
            assert_eq!(boot.sample(&mut r), &[1.0, 2.0]);
        }
    }

    #[test]
    fn zero_coefficient_logistic_is_fair_coin() {
        let m = Submodel::Logistic {
            coef: vec![0.0, 0.0],
        };
        let mut r = rng::stream(2, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| m.simulate(&[1.0, 0.3], &mut r)).collect();
        let se = (0.25 / n as f64).sqrt();
        assert!((mean(&draws) - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn beta_regression_moments() {
        let m = Submodel::Beta {
            coef: vec![0.0],
            precision: 10.0,
        };
        let mut r = rng::stream(3, &[]);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| m.simulate(&[1.0], &mut r)).collect();
        let v_true = 0.25 / 11.0;
        assert!((mean(&draws) - 0.5).abs() < 3.0 * (v_true / n as f64).sqrt());
        assert!((variance(&draws) - v_true).abs() < 0.03 * v_true);
    }

    #[test]
    fn log_density_special_cases() {
        let g = Submodel::Gaussian {
            coef: vec![0.0],
            sd: 1.0,
        };
        assert_abs_diff_eq!(
            g.log_density(&[3.0], 0.0),
            -0.5 * (2.0 * std::f64::consts::PI).ln()
        );
        let l = Submodel::Logistic { coef: vec![0.0] };
        assert_abs_diff_eq!(l.log_density(&[1.0], 1.0), 0.5f64.ln(), epsilon = 1e-15);
        let b = Submodel::Beta {
            coef: vec![0.0],
            precision: 2.0,
        };
        for y in [0.01, 0.3, 0.5, 0.99] {
            assert_abs_diff_eq!(b.log_density(&[1.0], y), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_proportion_is_clamped_and_finite() {
        let b = Submodel::Beta {
            coef: vec![0.4],
            precision: 5.0,
        };
        let at_zero = b.log_density(&[1.0], 0.0);
        let at_eps = b.log_density(&[1.0], PROPORTION_EPS);
        assert!(at_zero.is_finite());
        assert_eq!(at_zero, at_eps);
        assert!(b.log_density(&[1.0], 1.0).is_finite());
    }

    #[test]
    fn densities_integrate_to_one() {
        let n = 200_000;
        let beta = Submodel::Beta {
            coef: vec![0.7],
            precision: 6.0,
        };
        let h = 1.0 / n as f64;
        let total: f64 = (0..n)
            .map(|i| beta.log_density(&[1.0], (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);

        let gauss = Submodel::Gaussian {
            coef: vec![0.4],
            sd: 0.7,
        };
        let (lo, hi) = (-8.0, 8.0);
        let h = (hi - lo) / n as f64;
        let total: f64 = (0..n)
            .map(|i| gauss.log_density(&[1.0], lo + (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-3);

        let logit = Submodel::Logistic { coef: vec![-1.3] };
        let p: f64 = [0.0, 1.0]
            .iter()
            .map(|&y| logit.log_density(&[1.0], y).exp())
            .sum();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_weights_are_dirichlet() {
        let mut r = rng::stream(4, &[]);
        assert_eq!(bayesian_bootstrap_draw(1, &mut r), vec![1.0]);
        let w = bayesian_bootstrap_draw(50, &mut r);
        assert!(w.iter().all(|x| *x >= 0.0));
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let n = 100_000;
        let first: Vec<f64> = (0..n)
            .map(|_| bayesian_bootstrap_draw(2, &mut r)[0])
            .collect();
        let se = (1.0 / 12.0 / n as f64).sqrt();
        assert!((mean(&first) - 0.5).abs() < 3.0 * se);
        // Uniform(0,1): variance 1/12
        assert!((variance(&first) - 1.0 / 12.0).abs() < 0.002);
    }
}
