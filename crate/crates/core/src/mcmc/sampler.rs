use rand::Rng;

use super::blocks::{gibbs_update_rates, mh_update_beta, BetaTarget, HazardData};
use super::config::{BaselineKind, KnotPlacement, ModelConfig, SamplerConfig};
use super::draw::{CourseDraw, ModelContext, ParameterDraw};
use super::exposure::risk_set_exposures;
use super::proposal::{metropolis_step, AdaptiveProposal};
use crate::confounders::{
    bayesian_bootstrap_draw, beta_log_density, clamp_proportion, ConfounderModel, CovariateModel,
    Submodel,
};
use crate::data_model::{Cohort, CovariateKind, Encoder, Transition};
use crate::hazards::{
    Baseline, GammaProcessPrior, HazardModel, PiecewiseBaseline, TailPolicy, TimePartition,
    WeibullBaseline,
};
use crate::rng::{self, tags, Stream};
use crate::stats::{dot, mean};
use crate::{Error, Result};

enum BaselineBlock {
    Piecewise {
        partition: TimePartition,
        prior: GammaProcessPrior,
        rates: Vec<f64>,
        tail: TailPolicy,
    },
    Weibull {
        /// `(log a, log s)`.
        params: Vec<f64>,
        proposal: AdaptiveProposal,
        prior_mean: [f64; 2],
        prior_sd: [f64; 2],
    },
}

struct HazardBlock {
    name: String,
    data: HazardData,
    baseline: BaselineBlock,
    beta: Vec<f64>,
    proposal: AdaptiveProposal,
    prior_var: f64,
    lp: Vec<f64>,
    cumulative: Vec<f64>,
}

impl HazardBlock {
    fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.data.linear_predictors(&self.beta, &mut self.lp);
        match &mut self.baseline {
            BaselineBlock::Piecewise {
                partition,
                prior,
                rates,
                ..
            } => {
                *rates = gibbs_update_rates(&self.data, &self.lp, prior, partition, rng);
                self.data.piecewise_cumulative(rates, &mut self.cumulative);
            }
            BaselineBlock::Weibull {
                params,
                proposal,
                prior_mean,
                prior_sd,
            } => {
                let (data, lp) = (&self.data, &self.lp);
                let target = |p: &[f64]| weibull_log_posterior(data, lp, p, prior_mean, prior_sd);
                let current = target(params);
                metropolis_step(proposal, params, current, target, rng);
                let (a, s) = (params[0].exp(), params[1].exp());
                self.cumulative.clear();
                self.cumulative
                    .extend(self.data.waits.iter().map(|w| (w / s).powf(a)));
            }
        }
        let target = BetaTarget {
            data: &self.data,
            base_cumulative: &self.cumulative,
            prior_var: self.prior_var,
        };
        mh_update_beta(&target, &mut self.beta, &mut self.proposal, rng);
    }

    fn observe(&mut self) {
        self.proposal.observe(&self.beta);
        if let BaselineBlock::Weibull {
            params, proposal, ..
        } = &mut self.baseline
        {
            proposal.observe(params);
        }
    }

    fn freeze(&mut self, config: &SamplerConfig) {
        self.proposal.freeze(config.adapt_scale, config.jitter);
        if let BaselineBlock::Weibull { proposal, .. } = &mut self.baseline {
            proposal.freeze(config.adapt_scale, config.jitter);
        }
    }

    fn model(&self) -> Result<HazardModel> {
        let baseline = match &self.baseline {
            BaselineBlock::Piecewise {
                partition,
                rates,
                tail,
                ..
            } => Baseline::Piecewise(PiecewiseBaseline::new(
                partition.clone(),
                rates.clone(),
                *tail,
            )?),
            BaselineBlock::Weibull { params, .. } => Baseline::Weibull(WeibullBaseline {
                shape: params[0].exp(),
                scale: params[1].exp(),
            }),
        };
        Ok(HazardModel {
            baseline,
            beta: self.beta.clone(),
        })
    }

    /// Full conditional log-likelihood contribution of this hazard.
    fn log_likelihood(&self) -> f64 {
        let mut ll = 0.0;
        let mut lp = Vec::new();
        self.data.linear_predictors(&self.beta, &mut lp);
        let model = match self.model() {
            Ok(m) => m,
            Err(_) => return f64::NAN,
        };
        for (i, w) in self.data.waits.iter().enumerate() {
            if self.data.events[i] {
                ll += model.hazard_at_lp(*w, lp[i]).ln();
            }
            ll -= self.cumulative[i] * lp[i].exp();
        }
        ll
    }
}

fn weibull_log_posterior(
    data: &HazardData,
    lp: &[f64],
    p: &[f64],
    mean: &[f64; 2],
    sd: &[f64; 2],
) -> f64 {
    let (log_a, log_s) = (p[0], p[1]);
    let (a, s) = (log_a.exp(), log_s.exp());
    let mut out =
        -0.5 * ((log_a - mean[0]) / sd[0]).powi(2) - 0.5 * ((log_s - mean[1]) / sd[1]).powi(2);
    for (i, w) in data.waits.iter().enumerate() {
        if data.events[i] {
            out += log_a - a * log_s + (a - 1.0) * w.ln() + lp[i];
        }
        out -= (w / s).powf(a) * lp[i].exp();
    }
    out
}

enum Auxiliary {
    None,
    /// Beta precision on the log scale.
    Precision {
        proposal: AdaptiveProposal,
        prior: (f64, f64),
    },
    /// Gaussian noise variance, inverse-Gamma prior.
    Noise {
        prior: (f64, f64),
    },
}

struct CovariateBlock {
    name: String,
    covariate: usize,
    dim: usize,
    design: Vec<f64>,
    y: Vec<f64>,
    submodel: Submodel,
    proposal: AdaptiveProposal,
    auxiliary: Auxiliary,
    prior_var: f64,
    eta: Vec<f64>,
}

impl CovariateBlock {
    fn linear_predictors(&self, coef: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            (0..self.y.len()).map(|i| dot(&self.design[i * self.dim..(i + 1) * self.dim], coef)),
        );
    }

    fn log_likelihood_at(&self, submodel: &Submodel, eta: &[f64]) -> f64 {
        eta.iter()
            .zip(&self.y)
            .map(|(e, y)| submodel.log_density_at(*e, *y))
            .sum()
    }

    fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut coef = self.submodel.coef().to_vec();
        let mut eta = std::mem::take(&mut self.eta);
        let (design, dim, y, submodel, prior_var) = (
            &self.design,
            self.dim,
            &self.y,
            &self.submodel,
            self.prior_var,
        );
        let target = |c: &[f64]| {
            let ll: f64 = y
                .iter()
                .enumerate()
                .map(|(i, y)| submodel.log_density_at(dot(&design[i * dim..(i + 1) * dim], c), *y))
                .sum();
            ll - 0.5 * dot(c, c) / prior_var
        };
        let current = target(&coef);
        metropolis_step(&mut self.proposal, &mut coef, current, target, rng);
        *self.submodel.coef_mut() = coef;
        self.linear_predictors(self.submodel.coef(), &mut eta);

        match &mut self.auxiliary {
            Auxiliary::None => {}
            Auxiliary::Precision { proposal, prior } => {
                let Submodel::Beta { precision, .. } = &mut self.submodel else {
                    unreachable!("precision block on a non-Beta submodel")
                };
                let (shape, rate) = *prior;
                let y = &self.y;
                let target = |p: &[f64]| {
                    let phi = p[0].exp();
                    let ll: f64 = eta
                        .iter()
                        .zip(y)
                        .map(|(e, y)| beta_log_density(*e, phi, *y))
                        .sum();
                    ll + shape * p[0] - rate * phi
                };
                let mut log_phi = vec![precision.ln()];
                let current = target(&log_phi);
                metropolis_step(proposal, &mut log_phi, current, target, rng);
                *precision = log_phi[0].exp();
            }
            Auxiliary::Noise { prior } => {
                let Submodel::Gaussian { sd, .. } = &mut self.submodel else {
                    unreachable!("noise block on a non-Gaussian submodel")
                };
                let ss: f64 = eta.iter().zip(&self.y).map(|(e, y)| (y - e).powi(2)).sum();
                let shape = prior.0 + 0.5 * self.y.len() as f64;
                let scale = prior.1 + 0.5 * ss;
                let g =
                    rand_distr::Gamma::new(shape, 1.0 / scale).expect("positive Gamma parameters");
                let precision: f64 = rng.sample(g);
                *sd = precision.recip().sqrt();
            }
        }
        self.eta = eta;
    }

    fn observe(&mut self) {
        self.proposal.observe(self.submodel.coef());
        if let (Auxiliary::Precision { proposal, .. }, Submodel::Beta { precision, .. }) =
            (&mut self.auxiliary, &self.submodel)
        {
            proposal.observe(&[precision.ln()]);
        }
    }

    fn freeze(&mut self, config: &SamplerConfig) {
        self.proposal.freeze(config.adapt_scale, config.jitter);
        if let Auxiliary::Precision { proposal, .. } = &mut self.auxiliary {
            proposal.freeze(config.adapt_scale, config.jitter);
        }
    }
}

struct CourseBlocks {
    course: usize,
    death: HazardBlock,
    next: Option<HazardBlock>,
    confounders: Vec<CovariateBlock>,
}

/// Per-block acceptance rate after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAcceptance {
    pub block: String,
    pub rate: f64,
}

/// Blocked Metropolis-in-Gibbs sampler for one cohort.
pub struct Sampler {
    config: SamplerConfig,
    context: ModelContext,
    courses: Vec<CourseBlocks>,
    rng: Stream,
}

impl Sampler {
    pub fn new(cohort: &Cohort, model: &ModelConfig, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        model.validate()?;
        let encoder = Encoder::fit(cohort)?;
        let big_k = cohort.schema().courses;
        let intervals = model.intervals_for(cohort.len());
        let mut courses = Vec::with_capacity(big_k);
        for k in 1..=big_k {
            courses.push(build_course(cohort, &encoder, model, config, k, intervals)?);
        }
        let baseline_rows: Vec<Vec<f64>> = cohort
            .subjects()
            .iter()
            .map(|s| s.courses[0].covariates.clone())
            .collect();
        let context = ModelContext {
            encoder,
            baseline_rows,
            max_observed_death: cohort.max_observed_death(),
            max_observed_time: cohort
                .subjects()
                .iter()
                .map(|s| s.total_time())
                .fold(0.0, f64::max),
        };
        let mut sampler = Sampler {
            config: config.clone(),
            context,
            courses,
            rng: rng::stream(config.seed, &[tags::SAMPLER]),
        };
        sampler.initialize()?;
        Ok(sampler)
    }

    fn initialize(&mut self) -> Result<()> {
        for c in &mut self.courses {
            for h in std::iter::once(&mut c.death).chain(c.next.as_mut()) {
                h.data.linear_predictors(&h.beta, &mut h.lp);
                match &h.baseline {
                    BaselineBlock::Piecewise { rates, .. } => {
                        h.data.piecewise_cumulative(rates, &mut h.cumulative)
                    }
                    BaselineBlock::Weibull { params, .. } => {
                        let (a, s) = (params[0].exp(), params[1].exp());
                        h.cumulative = h.data.waits.iter().map(|w| (w / s).powf(a)).collect();
                    }
                }
                let ll = h.log_likelihood();
                if !ll.is_finite() {
                    return Err(Error::Initialization(format!(
                        "{}: log-likelihood is {ll}",
                        h.name
                    )));
                }
            }
            for b in &mut c.confounders {
                let mut eta = Vec::new();
                b.linear_predictors(b.submodel.coef(), &mut eta);
                let ll = b.log_likelihood_at(&b.submodel, &eta);
                if !ll.is_finite() {
                    return Err(Error::Initialization(format!(
                        "{}: log-likelihood is {ll}",
                        b.name
                    )));
                }
                b.eta = eta;
            }
        }
        Ok(())
    }

    pub fn context(&self) -> &ModelContext {
        &self.context
    }

    fn sweep(&mut self) {
        let rng = &mut self.rng;
        for c in &mut self.courses {
            c.death.update(rng);
            if let Some(next) = &mut c.next {
                next.update(rng);
            }
            for b in &mut c.confounders {
                b.update(rng);
            }
        }
    }

    fn for_each_block(
        &mut self,
        mut hazard: impl FnMut(&mut HazardBlock),
        mut cov: impl FnMut(&mut CovariateBlock),
    ) {
        for c in &mut self.courses {
            hazard(&mut c.death);
            if let Some(n) = &mut c.next {
                hazard(n);
            }
            c.confounders.iter_mut().for_each(&mut cov);
        }
    }

    fn snapshot(&self, m: usize) -> Result<ParameterDraw> {
        let mut courses = Vec::with_capacity(self.courses.len());
        for c in &self.courses {
            let confounders = (c.course > 1).then(|| ConfounderModel {
                course: c.course,
                models: c
                    .confounders
                    .iter()
                    .map(|b| CovariateModel {
                        covariate: b.covariate,
                        submodel: b.submodel.clone(),
                    })
                    .collect(),
            });
            courses.push(CourseDraw {
                course: c.course,
                death: c.death.model()?,
                next: c.next.as_ref().map(HazardBlock::model).transpose()?,
                confounders,
            });
        }
        let mut boot = rng::stream(self.config.seed, &[tags::BOOTSTRAP, m as u64]);
        Ok(ParameterDraw {
            m,
            courses,
            bootstrap_weights: bayesian_bootstrap_draw(self.context.baseline_rows.len(), &mut boot),
        })
    }

    /// Runs all `M` iterations, passing each kept draw to `sink`.
    pub fn run(
        &mut self,
        mut sink: impl FnMut(ParameterDraw) -> Result<()>,
    ) -> Result<Vec<BlockAcceptance>> {
        let cfg = self.config.clone();
        for m in 1..=cfg.iterations {
            self.sweep();
            if m <= cfg.burn_in {
                self.for_each_block(HazardBlock::observe, CovariateBlock::observe);
                if m == cfg.burn_in {
                    self.for_each_block(|h| h.freeze(&cfg), |b| b.freeze(&cfg));
                }
            } else if (m - cfg.burn_in).is_multiple_of(cfg.thin) {
                sink(self.snapshot(m)?)?;
            }
        }
        Ok(self.acceptance_rates())
    }

    pub fn acceptance_rates(&self) -> Vec<BlockAcceptance> {
        let mut out = Vec::new();
        for c in &self.courses {
            for h in std::iter::once(&c.death).chain(c.next.as_ref()) {
                out.push(BlockAcceptance {
                    block: format!("{}/beta", h.name),
                    rate: h.proposal.acceptance_rate(),
                });
                if let BaselineBlock::Weibull { proposal, .. } = &h.baseline {
                    out.push(BlockAcceptance {
                        block: format!("{}/weibull", h.name),
                        rate: proposal.acceptance_rate(),
                    });
                }
            }
            for b in &c.confounders {
                out.push(BlockAcceptance {
                    block: format!("{}/eta", b.name),
                    rate: b.proposal.acceptance_rate(),
                });
            }
        }
        out
    }
}

/// Runs the sampler end to end; returns the model context and per-block
/// acceptance rates.
pub fn run_sampler(
    cohort: &Cohort,
    model: &ModelConfig,
    config: &SamplerConfig,
    sink: impl FnMut(ParameterDraw) -> Result<()>,
) -> Result<(ModelContext, Vec<BlockAcceptance>)> {
    let mut sampler = Sampler::new(cohort, model, config)?;
    let rates = sampler.run(sink)?;
    Ok((sampler.context.clone(), rates))
}

fn partition_for(
    waits: &[f64],
    events: &[f64],
    intervals: usize,
    placement: KnotPlacement,
) -> Result<TimePartition> {
    let shared = TimePartition::from_quantiles(waits, intervals)?;
    if placement == KnotPlacement::Shared || events.is_empty() {
        return Ok(shared);
    }
    let mut knots = TimePartition::from_quantiles(events, intervals)?
        .knots()
        .to_vec();
    knots.pop();
    let max = shared.last_knot();
    knots.retain(|k| *k < max);
    knots.push(max);
    TimePartition::new(knots)
}

fn build_course(
    cohort: &Cohort,
    encoder: &Encoder,
    model: &ModelConfig,
    config: &SamplerConfig,
    k: usize,
    intervals: usize,
) -> Result<CourseBlocks> {
    let big_k = cohort.schema().courses;
    let reaching: Vec<_> = cohort.reaching(k).collect();
    let dim = encoder.hazard_len(k);
    let mut design = Vec::with_capacity(reaching.len() * dim);
    let mut row = Vec::with_capacity(dim);
    let mut waits = Vec::with_capacity(reaching.len());
    let mut transitions = Vec::with_capacity(reaching.len());
    for s in &reaching {
        let path = s.path_to(k)?;
        let c = &s.courses[k - 1];
        encoder.write_hazard_design(&path, c.treatment, &mut row);
        design.extend_from_slice(&row);
        waits.push(c.waiting_time);
        transitions.push(c.transition);
    }

    let hazard = |death: bool| -> Result<HazardBlock> {
        let cause = if death {
            Transition::Death
        } else {
            Transition::NextCourse
        };
        let name = format!("course{k}/{}", if death { "death" } else { "next" });
        let star_rate = if waits.is_empty() {
            1.0
        } else {
            1.0 / mean(&waits)
        };
        let (data, baseline) = match model.baseline {
            BaselineKind::GammaProcess => {
                let event_waits: Vec<f64> = waits
                    .iter()
                    .zip(&transitions)
                    .filter(|(_, t)| **t == cause)
                    .map(|(w, _)| *w)
                    .collect();
                let partition = if waits.is_empty() {
                    TimePartition::new(vec![0.0, 1.0])?
                } else {
                    partition_for(&waits, &event_waits, intervals, model.knots)?
                };
                let exposures = if waits.is_empty() {
                    Vec::new()
                } else {
                    risk_set_exposures(cohort, k, &partition, model.tail)
                };
                let mut data =
                    HazardData::piecewise(dim, design.clone(), waits.clone(), &exposures, death);
                data.intervals = partition.intervals();
                data.counts.resize(partition.intervals(), 0.0);
                let rates = vec![star_rate; partition.intervals()];
                let prior = GammaProcessPrior::new(model.alpha, star_rate)?;
                (
                    data,
                    BaselineBlock::Piecewise {
                        partition,
                        prior,
                        rates,
                        tail: model.tail,
                    },
                )
            }
            BaselineKind::Weibull => {
                let events = transitions.iter().map(|t| *t == cause).collect();
                let data = HazardData::parametric(dim, design.clone(), waits.clone(), events);
                let log_mean = (1.0 / star_rate).ln();
                (
                    data,
                    BaselineBlock::Weibull {
                        params: vec![0.0, log_mean],
                        proposal: AdaptiveProposal::new(2, config.initial_sd),
                        prior_mean: [0.0, log_mean],
                        prior_sd: [model.weibull_log_shape_sd, model.weibull_log_scale_sd],
                    },
                )
            }
        };
        Ok(HazardBlock {
            name,
            data,
            baseline,
            beta: vec![0.0; dim],
            proposal: AdaptiveProposal::new(dim, config.initial_sd),
            prior_var: model.beta_prior_var,
            lp: Vec::new(),
            cumulative: Vec::new(),
        })
    };
    let death = hazard(true)?;
    let next = if k < big_k {
        Some(hazard(false)?)
    } else {
        None
    };

    let mut confounders = Vec::new();
    if k >= 2 {
        let zdim = encoder.confounder_len(k);
        let mut zdesign = Vec::with_capacity(reaching.len() * zdim);
        for s in &reaching {
            let path = s.path_before(k)?;
            encoder.write_confounder_design(&path, &mut row);
            zdesign.extend_from_slice(&row);
        }
        for &idx in encoder.varying_indices() {
            let spec = &cohort.schema().covariates[idx];
            let y: Vec<f64> = reaching
                .iter()
                .map(|s| {
                    let v = encoder.encode_value(idx, s.courses[k - 1].covariates[idx]);
                    if spec.kind == CovariateKind::Proportion {
                        clamp_proportion(v)
                    } else {
                        v
                    }
                })
                .collect();
            let auxiliary = match spec.kind {
                CovariateKind::Proportion => Auxiliary::Precision {
                    proposal: AdaptiveProposal::new(1, config.initial_sd.max(0.1)),
                    prior: model.precision_prior,
                },
                CovariateKind::Continuous => Auxiliary::Noise {
                    prior: model.noise_prior,
                },
                CovariateKind::Binary => Auxiliary::None,
            };
            confounders.push(CovariateBlock {
                name: format!("course{k}/{}", spec.name),
                covariate: idx,
                dim: zdim,
                design: zdesign.clone(),
                y,
                submodel: Submodel::initial(spec.kind, zdim),
                proposal: AdaptiveProposal::new(zdim, config.initial_sd),
                auxiliary,
                prior_var: model.eta_prior_var,
                eta: Vec::new(),
            });
        }
    }
    Ok(CourseBlocks {
        course: k,
        death,
        next,
        confounders,
    })
}

/// Observed-data log-likelihood of the transition hazards under `draw`:
/// `Σ δ_Y log λ_Y(w) + δ_T log λ_T(w) - Λ_Y(w) - Λ_T(w)` over all
/// subject-courses (the last course has no next-course terms).
pub fn transition_log_likelihood(
    cohort: &Cohort,
    encoder: &Encoder,
    draw: &ParameterDraw,
) -> Result<f64> {
    let mut ll = 0.0;
    let mut x = Vec::new();
    for s in cohort.subjects() {
        for c in &s.courses {
            let k = c.k;
            let path = s.path_to(k)?;
            encoder.write_hazard_design(&path, c.treatment, &mut x);
            let cd = draw.course(k);
            let w = c.waiting_time;
            let lp_t = cd.death.linear_predictor(&x);
            ll -= cd.death.cumulative_hazard_lp(w, lp_t);
            if c.transition == Transition::Death {
                ll += cd.death.hazard_at_lp(w, lp_t).ln();
            }
            if let Some(next) = &cd.next {
                let lp_y = next.linear_predictor(&x);
                ll -= next.cumulative_hazard_lp(w, lp_y);
                if c.transition == Transition::NextCourse {
                    ll += next.hazard_at_lp(w, lp_y).ln();
                }
            }
        }
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{CourseRecord, CovariateSpec, Schema};
    use crate::stats::variance;
    use rand_distr::{Distribution, Exp};

    fn exponential_cohort(n: usize, rate: f64, seed: u64) -> Cohort {
        let schema = Schema::new(1, Vec::new()).unwrap();
        let mut rng = rng::stream(seed, &[99]);
        let exp = Exp::new(rate).unwrap();
        let rows = (0..n)
            .map(|i| CourseRecord {
                subject_id: format!("s{i}"),
                k: 1,
                covariates: Vec::new(),
                treatment: 0,
                waiting_time: exp.sample(&mut rng),
                transition: if i % 4 == 3 {
                    Transition::Censored
                } else {
                    Transition::Death
                },
            })
            .collect();
        Cohort::from_records(schema, rows).unwrap()
    }

    pub(crate) fn two_course_cohort(n: usize, seed: u64) -> Cohort {
        let schema = Schema::new(
            2,
            vec![
                CovariateSpec {
                    name: "x".into(),
                    kind: CovariateKind::Binary,
                    varying: false,
                },
                CovariateSpec {
                    name: "ef".into(),
                    kind: CovariateKind::Proportion,
                    varying: true,
                },
                CovariateSpec {
                    name: "l".into(),
                    kind: CovariateKind::Continuous,
                    varying: true,
                },
            ],
        )
        .unwrap();
        let mut rng = rng::stream(seed, &[98]);
        let mut rows = Vec::new();
        for i in 0..n {
            let x = f64::from(rng.random::<bool>());
            let a1 = u8::from(rng.random::<bool>());
            let w1 = 0.2 + rng.random::<f64>() * 3.0;
            let moves = rng.random::<f64>() < 0.7;
            rows.push(CourseRecord {
                subject_id: format!("s{i}"),
                k: 1,
                covariates: vec![
                    x,
                    0.3 + 0.4 * rng.random::<f64>(),
                    rng.random::<f64>() - 0.5,
                ],
                treatment: a1,
                waiting_time: w1,
                transition: if moves {
                    Transition::NextCourse
                } else if rng.random::<bool>() {
                    Transition::Death
                } else {
                    Transition::Censored
                },
            });
            if moves {
                rows.push(CourseRecord {
                    subject_id: format!("s{i}"),
                    k: 2,
                    covariates: vec![
                        x,
                        0.3 + 0.4 * rng.random::<f64>(),
                        rng.random::<f64>() - 0.5 + w1 / 3.0,
                    ],
                    treatment: u8::from(rng.random::<bool>()),
                    waiting_time: 0.1 + rng.random::<f64>() * 2.0,
                    transition: if rng.random::<bool>() {
                        Transition::Death
                    } else {
                        Transition::Censored
                    },
                });
            }
        }
        Cohort::from_records(schema, rows).unwrap()
    }

    fn small_config(seed: u64) -> SamplerConfig {
        SamplerConfig {
            iterations: 300,
            burn_in: 100,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn conjugate_single_interval() {
        let cohort = exponential_cohort(20, 0.5, 4);
        let model = ModelConfig {
            intervals: Some(1),
            ..Default::default()
        };
        let cfg = SamplerConfig {
            iterations: 22_000,
            burn_in: 2_000,
            seed: 11,
            ..Default::default()
        };
        let mut rates = Vec::new();
        run_sampler(&cohort, &model, &cfg, |d| {
            match &d.courses[0].death.baseline {
                Baseline::Piecewise(p) => rates.push(p.rates[0]),
                Baseline::Weibull(_) => unreachable!(),
            }
            Ok(())
        })
        .unwrap();
        let waits: Vec<f64> = cohort.subjects().iter().map(|s| s.total_time()).collect();
        let u = waits.iter().cloned().fold(0.0, f64::max);
        let star = 1.0 / mean(&waits);
        let events = 15.0;
        let shape = 0.01 * star * u + events;
        let rate = 0.01 * u + waits.iter().sum::<f64>();
        let se = (shape / rate.powi(2) / rates.len() as f64).sqrt();
        assert!((mean(&rates) - shape / rate).abs() < 3.0 * se);
        assert!((variance(&rates) / (shape / rate.powi(2)) - 1.0).abs() < 0.05);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cohort = two_course_cohort(60, 1);
        let run = || {
            let mut out = Vec::new();
            run_sampler(&cohort, &ModelConfig::default(), &small_config(7), |d| {
                out.push(serde_json::to_string(&d).unwrap());
                Ok(())
            })
            .unwrap();
            out
        };
        let a = run();
        assert_eq!(a.len(), 200);
        assert_eq!(a, run());
    }

    #[test]
    fn draws_have_expected_blocks() {
        let cohort = two_course_cohort(60, 2);
        for baseline in [BaselineKind::GammaProcess, BaselineKind::Weibull] {
            let model = ModelConfig {
                baseline,
                knots: KnotPlacement::PerCause,
                ..Default::default()
            };
            let mut draws = Vec::new();
            let (ctx, acc) = run_sampler(&cohort, &model, &small_config(3), |d| {
                draws.push(d);
                Ok(())
            })
            .unwrap();
            assert_eq!(ctx.baseline_rows.len(), 60);
            assert!(acc.iter().all(|a| (0.0..=1.0).contains(&a.rate)));
            for d in &draws {
                d.validate(2).unwrap();
                let f2 = d.course(2).confounders.as_ref().unwrap();
                assert_eq!(f2.models.len(), 2);
                assert!((d.bootstrap_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            let ll = transition_log_likelihood(&cohort, &ctx.encoder, &draws[0]).unwrap();
            assert!(ll.is_finite());
        }
    }

    #[test]
    fn thinning_counts() {
        let cohort = two_course_cohort(30, 5);
        let cfg = SamplerConfig {
            thin: 7,
            ..small_config(1)
        };
        let mut n = 0;
        run_sampler(&cohort, &ModelConfig::default(), &cfg, |_| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(n, cfg.kept());
    }
}
