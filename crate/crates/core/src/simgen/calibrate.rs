use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::SimDesign;
use super::generate::{generate_cohort, true_survival, TruthCurve};
use crate::gcomp::{gcompute, posterior_summary, GCompConfig};
use crate::mcmc::{run_sampler, BaselineKind, ModelConfig, SamplerConfig};
use crate::rng::{derive_seed, tags};
use crate::rules::{DecisionRule, FeasibleSet};
use crate::stats::mean;
use crate::{Error, Result};

/// A fitted model compared in calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVariant {
    pub label: String,
    pub model: ModelConfig,
}

impl ModelVariant {
    /// Gamma Process, parametric Weibull, and Gamma Process with half the
    /// default number of intervals for a cohort of size `n`.
    pub fn standard(n: usize) -> Vec<ModelVariant> {
        let gp = ModelConfig::default();
        let half = ModelConfig {
            intervals: Some((gp.intervals_for(n) / 2).max(1)),
            ..gp.clone()
        };
        let weibull = ModelConfig {
            baseline: BaselineKind::Weibull,
            ..gp.clone()
        };
        vec![
            ModelVariant {
                label: "gp".into(),
                model: gp,
            },
            ModelVariant {
                label: "weibull".into(),
                model: weibull,
            },
            ModelVariant {
                label: "gp_half".into(),
                model: half,
            },
        ]
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationConfig {
    pub design: SimDesign,
    pub replicates: usize,
    pub sampler: SamplerConfig,
    pub models: Vec<ModelVariant>,
    pub points: Vec<f64>,
    /// Trajectories per posterior draw.
    pub trajectories: usize,
    /// Kept draws are thinned evenly down to at most this many before
    /// g-computation.
    pub max_draws: usize,
    /// Monte Carlo size of the true curve.
    pub n_truth: usize,
    /// Credible level of the intervals checked for coverage.
    pub level: f64,
    pub rule: DecisionRule,
    pub feasible: FeasibleSet,
    pub seed: u64,
}

/// Frequentist operating characteristics of one model at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub model: String,
    pub t: f64,
    pub truth: f64,
    pub truth_se: f64,
    /// Mean over replicates of the posterior mean.
    pub mean_estimate: f64,
    /// `|mean_estimate - truth| / truth`, in percent.
    pub bias_pct: f64,
    pub coverage_pct: f64,
    pub mean_width: f64,
    pub replicates_used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub truth: TruthCurve,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationReport {
    pub fn row(&self, model: &str, t: f64) -> Option<&CalibrationRow> {
        self.rows.iter().find(|r| r.model == model && r.t == t)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Posterior mean and interval of each point, for one fit.
struct Estimate {
    mean: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn thin_evenly<T>(items: Vec<T>, max: usize) -> Vec<T> {
    let stride = items.len().div_ceil(max.max(1)).max(1);
    let offset = stride - 1;
    items.into_iter().skip(offset).step_by(stride).collect()
}

fn fit_replicate(cfg: &CalibrationConfig, r: usize, variant: usize) -> Result<Estimate> {
    let cohort = generate_cohort(
        &cfg.design,
        derive_seed(cfg.seed, &[tags::REPLICATE, r as u64]),
    )?;
    let sampler = SamplerConfig {
        seed: derive_seed(cfg.seed, &[tags::REPLICATE, r as u64, 1]),
        ..cfg.sampler.clone()
    };
    let mut draws = Vec::with_capacity(sampler.kept());
    let (context, _) = run_sampler(&cohort, &cfg.models[variant].model, &sampler, |d| {
        draws.push(d);
        Ok(())
    })?;
    let draws = thin_evenly(draws, cfg.max_draws);
    let mut g = GCompConfig::new(
        cfg.points.clone(),
        cfg.trajectories,
        derive_seed(cfg.seed, &[tags::REPLICATE, r as u64, 2]),
    );
    g.horizon = *cfg.points.last().unwrap_or(&0.0);
    let result = gcompute(&context, &draws, &cfg.rule, &cfg.feasible, &g)?;
    let summary = posterior_summary(&result.psi, 1.0 - cfg.level)?;
    Ok(Estimate {
        mean: summary.mean,
        lower: summary.lower,
        upper: summary.upper,
    })
}

/// Repeats generate, fit and g-compute over replicate cohorts and compares
/// the posterior survival estimates with the Monte Carlo truth. Failed fits
/// are logged, counted and excluded.
pub fn calibrate(cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    cfg.design.validate()?;
    cfg.sampler.validate()?;
    if cfg.replicates == 0 || cfg.models.is_empty() {
        return Err(Error::config(
            "calibration needs replicates and at least one model",
        ));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::config("credible level must lie in (0, 1)"));
    }
    for v in &cfg.models {
        v.model.validate()?;
    }
    let truth = true_survival(
        &cfg.design,
        &cfg.rule,
        &cfg.feasible,
        &cfg.points,
        cfg.n_truth,
        derive_seed(cfg.seed, &[tags::TRUTH]),
    )?;
    let jobs: Vec<(usize, usize)> = (0..cfg.replicates)
        .flat_map(|r| (0..cfg.models.len()).map(move |v| (r, v)))
        .collect();
    let fits: Vec<Option<Estimate>> = jobs
        .par_iter()
        .map(|&(r, v)| match fit_replicate(cfg, r, v) {
            Ok(e) => Some(e),
            Err(e) => {
                warn!("replicate {r}, model {}: {e}", cfg.models[v].label);
                None
            }
        })
        .collect();
    let mut rows = Vec::new();
    for (v, variant) in cfg.models.iter().enumerate() {
        let ok: Vec<&Estimate> = jobs
            .iter()
            .zip(&fits)
            .filter(|((_, jv), _)| *jv == v)
            .filter_map(|(_, f)| f.as_ref())
            .collect();
        let failures = cfg.replicates - ok.len();
        for (j, &t) in cfg.points.iter().enumerate() {
            let truth_t = truth.psi[j];
            let means: Vec<f64> = ok.iter().map(|e| e.mean[j]).collect();
            let covered = ok
                .iter()
                .filter(|e| e.lower[j] <= truth_t && truth_t <= e.upper[j])
                .count();
            let widths: Vec<f64> = ok.iter().map(|e| e.upper[j] - e.lower[j]).collect();
            let used = ok.len();
            let mean_estimate = if used > 0 { mean(&means) } else { f64::NAN };
            rows.push(CalibrationRow {
                model: variant.label.clone(),
                t,
                truth: truth_t,
                truth_se: truth.se[j],
                mean_estimate,
                bias_pct: (mean_estimate - truth_t).abs() / truth_t * 100.0,
                coverage_pct: if used > 0 {
                    100.0 * covered as f64 / used as f64
                } else {
                    f64::NAN
                },
                mean_width: if used > 0 { mean(&widths) } else { f64::NAN },
                replicates_used: used,
                failures,
            });
        }
    }
    Ok(CalibrationReport { truth, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::below_rule;

    #[test]
    fn thinning_keeps_the_tail_evenly() {
        assert_eq!(thin_evenly((1..=10).collect(), 5), vec![2, 4, 6, 8, 10]);
        assert_eq!(thin_evenly((1..=4).collect(), 10), vec![1, 2, 3, 4]);
        assert_eq!(thin_evenly((1..=10).collect(), 3), vec![4, 8]);
    }

    #[test]
    fn small_calibration_runs_and_is_reproducible() {
        let cfg = CalibrationConfig {
            design: SimDesign {
                n: 150,
                ..SimDesign::default()
            },
            replicates: 2,
            sampler: SamplerConfig {
                iterations: 200,
                burn_in: 100,
                ..SamplerConfig::default()
            },
            models: ModelVariant::standard(150),
            points: vec![5.0, 10.0],
            trajectories: 200,
            max_draws: 20,
            n_truth: 10_000,
            level: 0.95,
            rule: below_rule(4, 0.0),
            feasible: FeasibleSet::unrestricted(),
            seed: 9,
        };
        let a = calibrate(&cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        for row in &a.rows {
            assert_eq!(row.failures, 0);
            assert!(row.mean_estimate > 0.0 && row.mean_estimate <= 1.0);
            assert!(row.mean_width >= 0.0);
        }
        assert_eq!(a, calibrate(&cfg).unwrap());
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("model,t,truth"));
    }
}
