use serde::{Deserialize, Serialize};

use crate::hazards::TailPolicy;
use crate::kv::KvFile;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total iterations `M`.
    pub iterations: usize,
    /// Burn-in `M*`; proposal covariances adapt at this iteration.
    pub burn_in: usize,
    pub thin: usize,
    /// Standard deviation of the initial diagonal random-walk proposal.
    pub initial_sd: f64,
    /// Covariance scale `s_d`; `None` means `2.38^2 / d` per block.
    pub adapt_scale: Option<f64>,
    /// Ridge `ε` added to adapted covariances.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 4000,
            burn_in: 2000,
            thin: 1,
            initial_sd: 0.1,
            adapt_scale: None,
            jitter: 1e-6,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.burn_in && self.burn_in < self.iterations) {
            return Err(Error::config(format!(
                "need 0 < burn_in < iterations (got {} and {})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if !(self.initial_sd > 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::config("initial_sd must be > 0 and jitter >= 0"));
        }
        if let Some(s) = self.adapt_scale {
            if !(s > 0.0) {
                return Err(Error::config("adapt_scale must be > 0"));
            }
        }
        Ok(())
    }

    /// Number of draws emitted after burn-in and thinning.
    pub fn kept(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Piecewise-constant rates under a Gamma Process prior.
    #[default]
    GammaProcess,
    /// Two-parameter Weibull comparator.
    Weibull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotPlacement {
    /// One partition per course from quantiles of all observed waits.
    #[default]
    Shared,
    /// Separate partitions per cause from quantiles of that cause's event
    /// times (ending at the maximum observed wait).
    PerCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub baseline: BaselineKind,
    /// Gamma Process concentration `α`.
    pub alpha: f64,
    /// Prior variance `c` of hazard coefficients.
    pub beta_prior_var: f64,
    /// Prior variance of confounder-regression coefficients.
    pub eta_prior_var: f64,
    /// Intervals per partition; `None` picks 20 for `n >= 1000`, else 10.
    pub intervals: Option<usize>,
    pub tail: TailPolicy,
    pub knots: KnotPlacement,
    /// Gamma(shape, rate) prior on the Beta-regression precision.
    pub precision_prior: (f64, f64),
    /// Inverse-Gamma(shape, scale) prior on Gaussian noise variance.
    pub noise_prior: (f64, f64),
    /// Normal prior sd of `log a` (Weibull shape, centered at 0).
    pub weibull_log_shape_sd: f64,
    /// Normal prior sd of `log s` (centered at the log mean observed wait).
    pub weibull_log_scale_sd: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            baseline: BaselineKind::GammaProcess,
            alpha: 0.01,
            beta_prior_var: 1.0,
            eta_prior_var: 1.0,
            intervals: None,
            tail: TailPolicy::Extend,
            knots: KnotPlacement::Shared,
            precision_prior: (2.0, 0.1),
            noise_prior: (2.0, 1.0),
            weibull_log_shape_sd: 1.5,
            weibull_log_scale_sd: 2.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.alpha,
            self.beta_prior_var,
            self.eta_prior_var,
            self.precision_prior.0,
            self.precision_prior.1,
            self.noise_prior.0,
            self.noise_prior.1,
            self.weibull_log_shape_sd,
            self.weibull_log_scale_sd,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::config(
                "prior hyperparameters must be positive and finite",
            ));
        }
        if self.intervals == Some(0) {
            return Err(Error::config("intervals must be at least 1"));
        }
        Ok(())
    }

    pub fn intervals_for(&self, n: usize) -> usize {
        self.intervals.unwrap_or(if n >= 1000 { 20 } else { 10 })
    }
}

pub const FIT_KEYS: &[&str] = &[
    "iterations",
    "burn_in",
    "thin",
    "initial_sd",
    "adapt_scale",
    "jitter",
    "seed",
    "baseline",
    "alpha",
    "beta_prior_var",
    "eta_prior_var",
    "intervals",
    "tail",
    "knots",
];

impl SamplerConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = SamplerConfig::default();
        let cfg = SamplerConfig {
            iterations: kv.parsed_or("iterations", d.iterations)?,
            burn_in: kv.parsed_or("burn_in", d.burn_in)?,
            thin: kv.parsed_or("thin", d.thin)?,
            initial_sd: kv.parsed_or("initial_sd", d.initial_sd)?,
            adapt_scale: kv.parsed("adapt_scale")?,
            jitter: kv.parsed_or("jitter", d.jitter)?,
            seed: kv.parsed_or("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ModelConfig {
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let d = ModelConfig::default();
        let baseline = match kv.get("baseline").unwrap_or("gp") {
            "gp" | "gamma_process" => BaselineKind::GammaProcess,
            "weibull" => BaselineKind::Weibull,
            other => return Err(Error::config(format!("unknown baseline `{other}`"))),
        };
        let tail = match kv.get("tail").unwrap_or("extend") {
            "extend" => TailPolicy::Extend,
            "truncate" => TailPolicy::Truncate,
            other => return Err(Error::config(format!("unknown tail policy `{other}`"))),
        };
        let knots = match kv.get("knots").unwrap_or("shared") {
            "shared" => KnotPlacement::Shared,
            "per_cause" => KnotPlacement::PerCause,
            other => return Err(Error::config(format!("unknown knot placement `{other}`"))),
        };
        let intervals = match kv.get("intervals") {
            None | Some("auto") => None,
            Some(_) => kv.parsed("intervals")?,
        };
        let cfg = ModelConfig {
            baseline,
            alpha: kv.parsed_or("alpha", d.alpha)?,
            beta_prior_var: kv.parsed_or("beta_prior_var", d.beta_prior_var)?,
            eta_prior_var: kv.parsed_or("eta_prior_var", d.eta_prior_var)?,
            intervals,
            tail,
            knots,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_config_validation() {
        assert!(SamplerConfig::default().validate().is_ok());
        let bad = SamplerConfig {
            burn_in: 10,
            iterations: 10,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let cfg = SamplerConfig {
            iterations: 200,
            burn_in: 100,
            thin: 3,
            ..Default::default()
        };
        assert_eq!(cfg.kept(), 33);
    }

    #[test]
    fn configs_from_text() {
        let kv = KvFile::parse(
            "iterations = 200\nburn_in = 100\nbaseline = weibull\nintervals = 5\ntail = truncate\n",
            "t",
        )
        .unwrap();
        let s = SamplerConfig::from_kv(&kv).unwrap();
        assert_eq!((s.iterations, s.burn_in), (200, 100));
        let m = ModelConfig::from_kv(&kv).unwrap();
        assert_eq!(m.baseline, BaselineKind::Weibull);
        assert_eq!(m.intervals, Some(5));
        assert_eq!(m.tail, TailPolicy::Truncate);
        assert_eq!(ModelConfig::default().intervals_for(999), 10);
        assert_eq!(ModelConfig::default().intervals_for(1000), 20);
    }
}
