use rand::Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confounders::BaselineBootstrap;
use crate::data_model::Path;
use crate::mcmc::{ModelContext, ParameterDraw};
use crate::rng::{seek_course, trajectory_stream, Stream};
use crate::rules::{apply_rule, DecisionRule, FeasibleSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCompConfig {
    /// Trajectories per draw.
    pub trajectories: usize,
    /// Ascending time grid for `Ψ`.
    pub grid: Vec<f64>,
    /// Reference time of the utility's survival term.
    pub t_ref: f64,
    /// Adverse-event threshold `s`; `None` disables `Φ`.
    pub s: Option<f64>,
    /// Covariate monitored by `Φ` (schema index).
    pub phi_covariate: Option<usize>,
    /// First course whose covariate counts toward `Φ`.
    pub phi_from_course: usize,
    /// Trajectories are followed up to this time; later deaths count as
    /// survival past every grid point.
    pub horizon: f64,
    pub seed: u64,
}

impl GCompConfig {
    pub fn new(grid: Vec<f64>, trajectories: usize, seed: u64) -> Self {
        let horizon = grid.last().copied().unwrap_or(0.0);
        GCompConfig {
            trajectories,
            t_ref: horizon,
            grid,
            s: None,
            phi_covariate: None,
            phi_from_course: 2,
            horizon,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::config("B must be at least 1"));
        }
        if self.grid.is_empty()
            || self.grid.windows(2).any(|w| !(w[0] < w[1]))
            || self.grid[0] < 0.0
        {
            return Err(Error::config(
                "time grid must be nonempty, nonnegative and strictly ascending",
            ));
        }
        if !(self.horizon >= *self.grid.last().unwrap()) || !(self.horizon >= self.t_ref) {
            return Err(Error::config("horizon must cover the grid and t_ref"));
        }
        if self.phi_from_course == 0 {
            return Err(Error::config("phi_from_course starts at 1"));
        }
        Ok(())
    }
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Death time, `∞` when death falls past the horizon.
    pub death_time: f64,
    /// Courses initiated.
    pub kappa: usize,
    pub path: Path,
    /// Some rule output was replaced by the feasible default.
    pub overridden: bool,
}

/// A posterior draw prepared for simulation.
pub struct DrawModel<'a> {
    pub context: &'a ModelContext,
    pub draw: &'a ParameterDraw,
    bootstrap: BaselineBootstrap,
}

struct Scratch {
    path: Path,
    x: Vec<f64>,
    z: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            path: Path::default(),
            x: Vec::new(),
            z: Vec::new(),
        }
    }
}

struct Outcome {
    death_time: f64,
    kappa: usize,
    adverse: bool,
    overridden: bool,
}

impl<'a> DrawModel<'a> {
    pub fn new(context: &'a ModelContext, draw: &'a ParameterDraw) -> Result<Self> {
        draw.validate(context.encoder.courses())?;
        let rows = std::sync::Arc::new(context.baseline_rows.clone());
        let bootstrap = BaselineBootstrap::new(rows, &draw.bootstrap_weights)?;
        Ok(DrawModel {
            context,
            draw,
            bootstrap,
        })
    }

    fn run(
        &self,
        rule: &DecisionRule,
        feasible: &FeasibleSet,
        cfg: &GCompConfig,
        stream: &mut Stream,
        scratch: &mut Scratch,
    ) -> Result<Outcome> {
        let encoder = &self.context.encoder;
        let big_k = encoder.courses();
        let Scratch { path, x, z } = scratch;
        path.covariates.clear();
        path.treatments.clear();
        path.waits.clear();
        let mut elapsed = 0.0;
        let mut adverse = false;
        let mut overridden = false;
        for k in 1..=big_k {
            seek_course(stream, k);
            let u_death: f64 = stream.sample(Open01);
            let u_next: f64 = stream.sample(Open01);
            let covariates = if k == 1 {
                self.bootstrap.sample(stream).to_vec()
            } else {
                encoder.write_confounder_design(path, z);
                let f = self
                    .draw
                    .course(k)
                    .confounders
                    .as_ref()
                    .expect("course k >= 2 has confounders");
                f.simulate_confounders(encoder, z, &path.covariates[0], stream)
            };
            if let (Some(s), Some(c)) = (cfg.s, cfg.phi_covariate) {
                if k >= cfg.phi_from_course && covariates[c] < s {
                    adverse = true;
                }
            }
            path.covariates.push(covariates);
            let decision = apply_rule(rule, path, feasible, k)?;
            overridden |= decision.overridden;
            encoder.write_hazard_design(path, decision.treatment, x);
            let course = self.draw.course(k);
            let w_death = course.death.sample_waiting_time(x, u_death).time();
            let w_next = course
                .next
                .as_ref()
                .map_or(f64::INFINITY, |h| h.sample_waiting_time(x, u_next).time());
            if w_death <= w_next {
                let t = elapsed + w_death;
                return Ok(Outcome {
                    death_time: if t > cfg.horizon { f64::INFINITY } else { t },
                    kappa: k,
                    adverse,
                    overridden,
                });
            }
            elapsed += w_next;
            if elapsed > cfg.horizon {
                return Ok(Outcome {
                    death_time: f64::INFINITY,
                    kappa: k,
                    adverse,
                    overridden,
                });
            }
            path.treatments.push(decision.treatment);
            path.waits.push(w_next);
        }
        unreachable!("the last course has no next-course hazard")
    }
}

/// Simulates one trajectory from `stream`, which must be a trajectory
/// stream (see [`crate::rng::trajectory_stream`]).
pub fn simulate_trajectory(
    model: &DrawModel<'_>,
    rule: &DecisionRule,
    feasible: &FeasibleSet,
    cfg: &GCompConfig,
    stream: &mut Stream,
) -> Result<Trajectory> {
    let mut scratch = Scratch::new();
    let out = model.run(rule, feasible, cfg, stream, &mut scratch)?;
    Ok(Trajectory {
        death_time: out.death_time,
        kappa: out.kappa,
        path: scratch.path,
        overridden: out.overridden,
    })
}

/// Monte Carlo estimates for one draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalEstimate {
    /// `Ψ(t)` on the grid.
    pub psi: Vec<f64>,
    pub psi_ref: f64,
    pub phi: f64,
    pub utility: f64,
    /// Fraction of trajectories with an overridden decision.
    pub overridden: f64,
}

pub fn estimate_survival(
    model: &DrawModel<'_>,
    rule: &DecisionRule,
    feasible: &FeasibleSet,
    cfg: &GCompConfig,
) -> Result<SurvivalEstimate> {
    let b_total = cfg.trajectories;
    let mut deaths = Vec::with_capacity(b_total);
    let mut adverse = 0usize;
    let mut overridden = 0usize;
    let mut scratch = Scratch::new();
    for b in 0..b_total {
        let mut stream = trajectory_stream(cfg.seed, model.draw.m as u64, b as u64);
        let out = model.run(rule, feasible, cfg, &mut stream, &mut scratch)?;
        deaths.push(out.death_time);
        adverse += usize::from(out.adverse);
        overridden += usize::from(out.overridden);
    }
    deaths.sort_by(f64::total_cmp);
    let n = b_total as f64;
    let surviving = |t: f64| (b_total - deaths.partition_point(|d| *d <= t)) as f64 / n;
    let psi: Vec<f64> = cfg.grid.iter().map(|t| surviving(*t)).collect();
    let psi_ref = surviving(cfg.t_ref);
    let phi = adverse as f64 / n;
    Ok(SurvivalEstimate {
        psi,
        psi_ref,
        phi,
        utility: psi_ref - phi,
        overridden: overridden as f64 / n,
    })
}

/// Per-draw g-computation results for one rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GCompResult {
    pub grid: Vec<f64>,
    pub draws: Vec<usize>,
    pub psi: Vec<Vec<f64>>,
    pub psi_ref: Vec<f64>,
    pub phi: Vec<f64>,
    pub utility: Vec<f64>,
    /// Grid points past the largest observed death time or the horizon.
    pub extrapolated: Vec<bool>,
}

/// Runs [`estimate_survival`] for every draw, in parallel across draws.
pub fn gcompute(
    context: &ModelContext,
    draws: &[ParameterDraw],
    rule: &DecisionRule,
    feasible: &FeasibleSet,
    cfg: &GCompConfig,
) -> Result<GCompResult> {
    cfg.validate()?;
    rule.check(context.encoder.schema())?;
    let estimates: Vec<SurvivalEstimate> = draws
        .par_iter()
        .map(|d| estimate_survival(&DrawModel::new(context, d)?, rule, feasible, cfg))
        .collect::<Result<_>>()?;
    let limit = context.max_observed_death.unwrap_or(0.0).min(cfg.horizon);
    Ok(GCompResult {
        grid: cfg.grid.clone(),
        draws: draws.iter().map(|d| d.m).collect(),
        psi_ref: estimates.iter().map(|e| e.psi_ref).collect(),
        phi: estimates.iter().map(|e| e.phi).collect(),
        utility: estimates.iter().map(|e| e.utility).collect(),
        psi: estimates.into_iter().map(|e| e.psi).collect(),
        extrapolated: cfg.grid.iter().map(|t| *t > limit).collect(),
    })
}

pub(crate) fn estimate_value(
    model: &DrawModel<'_>,
    rules: &[DecisionRule],
    feasible: &FeasibleSet,
    cfg: &GCompConfig,
    utility: bool,
) -> Result<Vec<f64>> {
    let n = cfg.trajectories as f64;
    let mut totals = vec![0.0; rules.len()];
    let mut scratch = Scratch::new();
    for b in 0..cfg.trajectories {
        let base = trajectory_stream(cfg.seed, model.draw.m as u64, b as u64);
        for (rule, total) in rules.iter().zip(totals.iter_mut()) {
            let mut stream = base.clone();
            let out = model.run(rule, feasible, cfg, &mut stream, &mut scratch)?;
            let mut v = f64::from(u8::from(out.death_time > cfg.t_ref));
            if utility && out.adverse {
                v -= 1.0;
            }
            *total += v;
        }
    }
    Ok(totals.into_iter().map(|t| t / n).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::confounders::{ConfounderModel, CovariateModel, Submodel};
    use crate::data_model::{CovariateKind, CovariateSpec, Encoder, Schema};
    use crate::hazards::{Baseline, HazardModel, PiecewiseBaseline, TailPolicy, TimePartition};
    use crate::mcmc::CourseDraw;
    use crate::rules::{fixed_rule, threshold_rule, ThresholdRuleParams};
    use crate::stats::mean;

    fn constant(rate: f64, dim: usize) -> HazardModel {
        HazardModel {
            baseline: Baseline::Piecewise(
                PiecewiseBaseline::new(
                    TimePartition::new(vec![0.0, 1.0]).unwrap(),
                    vec![rate],
                    TailPolicy::Extend,
                )
                .unwrap(),
            ),
            beta: vec![0.0; dim],
        }
    }

    /// Constant-hazard model with one time-varying proportion covariate
    /// `ef`; `rates[k-1] = (death, next)`.
    pub(crate) fn constant_model(
        rates: &[(f64, f64)],
        ef_baseline: &[f64],
    ) -> (ModelContext, ParameterDraw) {
        let big_k = rates.len();
        let mut schema = Schema::new(
            big_k,
            vec![CovariateSpec {
                name: "ef".into(),
                kind: CovariateKind::Proportion,
                varying: true,
            }],
        )
        .unwrap();
        schema.wait_cutpoints = Some([1.0, 2.0, 3.0]);
        let encoder = Encoder::from_parts(schema, vec![None], [1.0, 2.0, 3.0]);
        let courses = (1..=big_k)
            .map(|k| {
                let dim = encoder.hazard_len(k);
                let (death, next) = rates[k - 1];
                CourseDraw {
                    course: k,
                    death: constant(death, dim),
                    next: (k < big_k).then(|| constant(next, dim)),
                    confounders: (k > 1).then(|| ConfounderModel {
                        course: k,
                        models: vec![CovariateModel {
                            covariate: 0,
                            submodel: Submodel::Beta {
                                coef: vec![0.0; encoder.confounder_len(k)],
                                precision: 10.0,
                            },
                        }],
                    }),
                }
            })
            .collect();
        let n = ef_baseline.len();
        let context = ModelContext {
            encoder,
            baseline_rows: ef_baseline.iter().map(|e| vec![*e]).collect(),
            max_observed_death: Some(10.0),
            max_observed_time: 12.0,
        };
        let draw = ParameterDraw {
            m: 1,
            courses,
            bootstrap_weights: vec![1.0 / n as f64; n],
        };
        (context, draw)
    }

    fn cfg(grid: Vec<f64>, b: usize) -> GCompConfig {
        let mut c = GCompConfig::new(grid, b, 17);
        c.horizon = f64::INFINITY;
        c
    }

    #[test]
    fn single_course_is_exponential() {
        let (ctx, draw) = constant_model(&[(0.5, 0.0)], &[0.6]);
        let model = DrawModel::new(&ctx, &draw).unwrap();
        let c = cfg(vec![0.0, 1.0], 1);
        let rule = fixed_rule(vec![1]);
        let n = 100_000;
        let times: Vec<f64> = (0..n)
            .map(|b| {
                let mut s = trajectory_stream(3, 1, b);
                simulate_trajectory(&model, &rule, &FeasibleSet::unrestricted(), &c, &mut s)
                    .unwrap()
                    .death_time
            })
            .collect();
        let se = 2.0 / (n as f64).sqrt();
        assert!((mean(&times) - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn competing_exponentials_split() {
        let (ctx, draw) = constant_model(&[(1.0, 3.0), (0.5, 0.0)], &[0.6]);
        let model = DrawModel::new(&ctx, &draw).unwrap();
        let c = cfg(vec![0.0, 1.0], 1);
        let rule = fixed_rule(vec![1, 1]);
        let n = 100_000;
        let second = (0..n)
            .filter(|b| {
                let mut s = trajectory_stream(4, 1, *b);
                let t =
                    simulate_trajectory(&model, &rule, &FeasibleSet::unrestricted(), &c, &mut s)
                        .unwrap();
                assert_eq!(t.path.covariates.len(), t.kappa);
                t.kappa == 2
            })
            .count() as f64
            / n as f64;
        let p = 0.75;
        assert!((second - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn survival_at_zero_and_utility_identity() {
        let (ctx, draw) = constant_model(&[(0.3, 1.0), (0.2, 0.8), (0.4, 0.0)], &[0.55, 0.7]);
        let model = DrawModel::new(&ctx, &draw).unwrap();
        let mut c = cfg(vec![0.0, 1.0, 2.0, 5.0], 4000);
        c.t_ref = 2.0;
        c.s = Some(0.5);
        c.phi_covariate = Some(0);
        let rule = threshold_rule(ThresholdRuleParams::new(-0.1, 0.5).unwrap(), 0);
        let e = estimate_survival(&model, &rule, &FeasibleSet::default(), &c).unwrap();
        assert_eq!(e.psi[0], 1.0);
        assert!(e.psi.windows(2).all(|w| w[0] >= w[1]));
        assert!(e.phi > 0.0);
        assert_eq!(e.utility, e.psi_ref - e.phi);
        assert_eq!(e.psi_ref, e.psi[2]);

        c.s = Some(0.0);
        let e0 = estimate_survival(&model, &rule, &FeasibleSet::default(), &c).unwrap();
        assert_eq!(e0.phi, 0.0);
        assert_eq!(e0.utility, e0.psi_ref);
    }

    #[test]
    fn never_binding_threshold_matches_fixed_rule() {
        let (ctx, mut draw) = constant_model(&[(0.3, 1.0), (0.2, 0.0)], &[0.55, 0.7]);
        // Treatment raises the course-2 death hazard so decisions matter.
        let dim = draw.courses[1].death.beta.len();
        draw.courses[1].death.beta[dim - 1] = 1.0;
        let model = DrawModel::new(&ctx, &draw).unwrap();
        let c = cfg(vec![0.0, 1.0, 3.0], 3000);
        let threshold = threshold_rule(ThresholdRuleParams::new(-0.99, 0.001).unwrap(), 0);
        let fixed = fixed_rule(vec![1, 1]);
        let feasible = FeasibleSet::unrestricted();
        let a = estimate_survival(&model, &threshold, &feasible, &c).unwrap();
        let b = estimate_survival(&model, &fixed, &feasible, &c).unwrap();
        assert_eq!(a.psi, b.psi);
        let withhold = estimate_survival(&model, &fixed_rule(vec![1, 0]), &feasible, &c).unwrap();
        assert!(withhold.psi[2] > b.psi[2]);
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let (ctx, draw) = constant_model(&[(0.3, 1.0), (0.2, 0.0)], &[0.55, 0.7]);
        let draws: Vec<ParameterDraw> = (1..=6)
            .map(|m| ParameterDraw { m, ..draw.clone() })
            .collect();
        let c = cfg(vec![0.0, 1.0, 3.0], 500);
        let rule = fixed_rule(vec![1, 1]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    gcompute(&ctx, &draws, &rule, &FeasibleSet::unrestricted(), &c).unwrap()
                })
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one.extrapolated, vec![false, false, false]);
        assert_ne!(one.psi[0], one.psi[1]);
    }
}
