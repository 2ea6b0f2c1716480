use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::design::{SimDesign, HISTORY_TERMS};
use crate::data_model::{encode_waiting_time, Cohort, CourseRecord, Path, Transition};
use crate::rng::{stream, tags, Stream};
use crate::rules::{apply_rule, DecisionRule, FeasibleSet};
use crate::stats::{dot, logistic};
use crate::Result;

/// How treatment is assigned while walking a subject forward.
enum Assignment<'a> {
    /// Observational logistic propensity.
    Observed,
    Rule(&'a DecisionRule, &'a FeasibleSet),
}

struct Walk {
    records: Vec<CourseRecord>,
    /// Death time on the total-time scale; `∞` when censored.
    death_time: f64,
}

/// `x1..x4, l1, l2, l1_prev, l2_prev, a_prev, w2, w3, w4` for course `k`.
fn history_terms(design: &SimDesign, path: &Path) -> [f64; HISTORY_TERMS] {
    let k = path.course();
    let cur = path.current();
    let mut h = [0.0; HISTORY_TERMS];
    h[..4].copy_from_slice(&cur[..4]);
    h[4] = cur[4];
    h[5] = cur[5];
    if k >= 2 {
        let prev = &path.covariates[k - 2];
        h[6] = prev[4];
        h[7] = prev[5];
        h[8] = f64::from(path.treatments[k - 2]);
        let level = encode_waiting_time(path.waits[k - 2], &design.wait_cutpoints);
        if level >= 2 {
            h[7 + level] = 1.0;
        }
    }
    h
}

/// Draws from a Weibull PH model with survival `exp(-(w/s)^a e^lp)`.
fn weibull_ph(shape: f64, scale: f64, lp: f64, rng: &mut Stream) -> f64 {
    let e: f64 = Exp1.sample(rng);
    scale * (e * (-lp).exp()).powf(1.0 / shape)
}

fn bernoulli(p: f64, rng: &mut Stream) -> f64 {
    let u: f64 = rng.sample(Open01);
    f64::from(u8::from(u < p))
}

fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

fn walk(
    design: &SimDesign,
    id: usize,
    assign: &Assignment,
    censor: bool,
    rng: &mut Stream,
) -> Result<Walk> {
    let x1 = normal(rng);
    let x2 = normal(rng);
    let x3 = bernoulli(design.x3_prob, rng);
    let x4 = bernoulli(design.x4_prob, rng);
    let base = [1.0, x1, x2, x3, x4];
    let admin = if censor {
        let u: f64 = rng.sample(Open01);
        design.admin_scale * (-u.ln()).powf(1.0 / design.admin_shape)
    } else {
        f64::INFINITY
    };
    let mut path = Path::default();
    let mut records = Vec::with_capacity(design.courses);
    let mut elapsed = 0.0;
    for k in 1..=design.courses {
        let (l1, l2) = if k == 1 {
            let l1 = dot(&design.l1_init, &base) + design.l1_init_sd * normal(rng);
            let l2 = bernoulli(logistic(dot(&design.l2_init, &base)), rng);
            (l1, l2)
        } else {
            let prev = &path.covariates[k - 2];
            let level = encode_waiting_time(path.waits[k - 2], &design.wait_cutpoints);
            let mut z = [0.0; 11];
            z[..5].copy_from_slice(&base);
            z[5] = prev[4];
            z[6] = prev[5];
            z[7] = f64::from(path.treatments[k - 2]);
            if level >= 2 {
                z[6 + level] = 1.0;
            }
            let l1 = dot(&design.l1_coef, &z) + design.l1_sd * normal(rng);
            let l2 = bernoulli(logistic(dot(&design.l2_coef, &z)), rng);
            (l1, l2)
        };
        path.covariates.push(vec![x1, x2, x3, x4, l1, l2]);
        let h = history_terms(design, &path);
        let a = match assign {
            Assignment::Observed => {
                let eta = design.treat_coef[0] + dot(&design.treat_coef[1..], &h);
                bernoulli(logistic(eta), rng) as u8
            }
            Assignment::Rule(rule, feasible) => apply_rule(rule, &path, feasible, k)?.treatment,
        };
        let lp =
            |coef: &[f64]| dot(&coef[..HISTORY_TERMS], &h) + coef[HISTORY_TERMS] * f64::from(a);
        let t = weibull_ph(
            design.death_shape[k - 1],
            design.death_scale[k - 1],
            lp(&design.death_coef),
            rng,
        );
        let y = if k < design.courses {
            weibull_ph(
                design.next_shape[k - 1],
                design.next_scale[k - 1],
                lp(&design.next_coef),
                rng,
            )
        } else {
            f64::INFINITY
        };
        let c = if censor {
            let e: f64 = Exp1.sample(rng);
            let c = (e / design.censor_rate[k - 1]).min(admin - elapsed);
            if k == design.courses {
                c.min(design.final_followup)
            } else {
                c
            }
        } else {
            f64::INFINITY
        };
        let (w, transition) = if t <= y && t <= c {
            (t, Transition::Death)
        } else if y < c {
            (y, Transition::NextCourse)
        } else {
            (c, Transition::Censored)
        };
        records.push(CourseRecord {
            subject_id: format!("s{id}"),
            k,
            covariates: path.current().to_vec(),
            treatment: a,
            waiting_time: w,
            transition,
        });
        elapsed += w;
        match transition {
            Transition::Death => {
                return Ok(Walk {
                    records,
                    death_time: elapsed,
                })
            }
            Transition::Censored => {
                return Ok(Walk {
                    records,
                    death_time: f64::INFINITY,
                })
            }
            Transition::NextCourse => {
                path.treatments.push(a);
                path.waits.push(w);
            }
        }
    }
    unreachable!("the last course always ends in death or censoring")
}

/// Observational cohort of `design.n` subjects; subject `i` uses its own
/// stream so the cohort is reproducible for a seed.
pub fn generate_cohort(design: &SimDesign, seed: u64) -> Result<Cohort> {
    design.validate()?;
    let rows = (0..design.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[tags::COHORT, i as u64]);
            walk(design, i + 1, &Assignment::Observed, true, &mut rng).map(|w| w.records)
        })
        .collect::<Result<Vec<_>>>()?;
    Cohort::from_records(design.schema(), rows.into_iter().flatten().collect())
}

/// Composition of a generated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n: usize,
    /// Fraction whose follow-up reaches course `K`.
    pub completed: f64,
    pub died: f64,
    pub censored: f64,
    /// `(t, fraction with total follow-up beyond t)`.
    pub at_risk: Vec<(f64, f64)>,
}

impl CohortSummary {
    pub fn of(cohort: &Cohort, times: &[f64]) -> Self {
        let subjects = cohort.subjects();
        let n = subjects.len().max(1) as f64;
        let k = cohort.schema().courses;
        let frac = |f: &dyn Fn(&crate::data_model::SubjectRecord) -> bool| {
            subjects.iter().filter(|s| f(s)).count() as f64 / n
        };
        CohortSummary {
            n: subjects.len(),
            completed: frac(&|s| s.kappa() == k),
            died: frac(&|s| s.died()),
            censored: frac(&|s| !s.died()),
            at_risk: times
                .iter()
                .map(|&t| (t, frac(&|s| s.total_time() > t)))
                .collect(),
        }
    }
}

/// Monte Carlo truth of `P(T^r > t)` with binomial standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCurve {
    pub grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub se: Vec<f64>,
    pub n_mc: usize,
}

const TRUTH_CHUNK: usize = 8192;

/// Simulates `n_mc` uncensored subjects under `rule` and returns the
/// survival curve on `grid`. Chunks have fixed streams, so the result does
/// not depend on the thread count.
pub fn true_survival(
    design: &SimDesign,
    rule: &DecisionRule,
    feasible: &FeasibleSet,
    grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<TruthCurve> {
    design.validate()?;
    rule.check(&design.schema())?;
    let chunks = n_mc.div_ceil(TRUTH_CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, &[tags::TRUTH, c as u64]);
            let size = TRUTH_CHUNK.min(n_mc - c * TRUTH_CHUNK);
            let mut alive = vec![0u64; grid.len()];
            for i in 0..size {
                let w = walk(
                    design,
                    i,
                    &Assignment::Rule(rule, feasible),
                    false,
                    &mut rng,
                )?;
                for (slot, &t) in alive.iter_mut().zip(grid) {
                    *slot += u64::from(w.death_time > t);
                }
            }
            Ok(alive)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut alive = vec![0u64; grid.len()];
    for c in counts {
        for (a, b) in alive.iter_mut().zip(c) {
            *a += b;
        }
    }
    let n = n_mc as f64;
    let psi: Vec<f64> = alive.iter().map(|&a| a as f64 / n).collect();
    Ok(TruthCurve {
        grid: grid.to_vec(),
        se: psi.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect(),
        psi,
        n_mc,
    })
}
