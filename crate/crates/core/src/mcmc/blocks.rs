use rand::Rng;

use super::exposure::SubjectExposure;
use super::proposal::{metropolis_step, AdaptiveProposal};
use crate::hazards::{draw_scaled_rate, GammaProcessPrior, TimePartition};
use crate::stats::dot;

/// Likelihood data for one cause-specific hazard at one course.
#[derive(Debug, Clone)]
pub struct HazardData {
    pub dim: usize,
    /// Row-major `n x dim` hazard design.
    pub design: Vec<f64>,
    pub waits: Vec<f64>,
    /// Whether each subject's observed transition is this cause's event
    /// (and is observable under the tail policy).
    pub events: Vec<bool>,
    /// Row-major `n x J` interval exposures (empty for parametric baselines).
    pub exposure: Vec<f64>,
    /// Event count per interval.
    pub counts: Vec<f64>,
    pub intervals: usize,
}

impl HazardData {
    pub fn len(&self) -> usize {
        self.waits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waits.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.design[i * self.dim..(i + 1) * self.dim]
    }

    /// Builds the data for a piecewise baseline from per-subject exposures;
    /// `death` selects the cause.
    pub fn piecewise(
        dim: usize,
        design: Vec<f64>,
        waits: Vec<f64>,
        exposures: &[SubjectExposure],
        death: bool,
    ) -> Self {
        let intervals = exposures.first().map_or(0, |e| e.exposure.len());
        let mut counts = vec![0.0; intervals];
        let mut events = Vec::with_capacity(exposures.len());
        let mut exposure = Vec::with_capacity(exposures.len() * intervals);
        for e in exposures {
            let hit = if death {
                e.death_interval
            } else {
                e.next_interval
            };
            if let Some(j) = hit {
                counts[j] += 1.0;
            }
            events.push(hit.is_some());
            exposure.extend_from_slice(&e.exposure);
        }
        HazardData {
            dim,
            design,
            waits,
            events,
            exposure,
            counts,
            intervals,
        }
    }

    /// Builds the data for a parametric baseline.
    pub fn parametric(dim: usize, design: Vec<f64>, waits: Vec<f64>, events: Vec<bool>) -> Self {
        HazardData {
            dim,
            design,
            waits,
            events,
            exposure: Vec::new(),
            counts: Vec::new(),
            intervals: 0,
        }
    }

    pub fn linear_predictors(&self, beta: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.len()).map(|i| dot(self.row(i), beta)));
    }

    /// Baseline cumulative hazard at each subject's wait for piecewise rates.
    pub fn piecewise_cumulative(&self, rates: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let j = self.intervals;
        out.extend((0..self.len()).map(|i| dot(&self.exposure[i * j..(i + 1) * j], rates)));
    }
}

/// Conditional log-posterior of hazard coefficients given the baseline
/// cumulative hazard at each subject's wait.
pub struct BetaTarget<'a> {
    pub data: &'a HazardData,
    pub base_cumulative: &'a [f64],
    pub prior_var: f64,
}

impl BetaTarget<'_> {
    pub fn log_posterior(&self, beta: &[f64]) -> f64 {
        let mut lp = -0.5 * dot(beta, beta) / self.prior_var;
        for i in 0..self.data.len() {
            let eta = dot(self.data.row(i), beta);
            if self.data.events[i] {
                lp += eta;
            }
            lp -= self.base_cumulative[i] * eta.exp();
        }
        lp
    }
}

/// Conjugate draw of piecewise baseline rates: each scaled rate
/// `Δu_j λ_j` is Gamma(`α λ* Δu_j + D_j`, `α + R_j / Δu_j`) with
/// `R_j = Σ_i e_ij exp(lp_i)`.
pub fn gibbs_update_rates<R: Rng + ?Sized>(
    data: &HazardData,
    lp: &[f64],
    prior: &GammaProcessPrior,
    partition: &TimePartition,
    rng: &mut R,
) -> Vec<f64> {
    let j_len = partition.intervals();
    let mut risk = vec![0.0; j_len];
    for (i, eta) in lp.iter().enumerate() {
        let w = eta.exp();
        for (r, e) in risk
            .iter_mut()
            .zip(&data.exposure[i * j_len..(i + 1) * j_len])
        {
            *r += e * w;
        }
    }
    (0..j_len)
        .map(|j| {
            let width = partition.width(j);
            let counts = data.counts.get(j).copied().unwrap_or(0.0);
            let shape = prior.shape(width) + counts;
            let rate = prior.alpha + risk[j] / width;
            draw_scaled_rate(shape, rate, width, rng)
        })
        .collect()
}

/// One random-walk Metropolis update of `beta`; returns whether the move
/// was accepted.
pub fn mh_update_beta<R: Rng + ?Sized>(
    target: &BetaTarget<'_>,
    beta: &mut Vec<f64>,
    proposal: &mut AdaptiveProposal,
    rng: &mut R,
) -> bool {
    let current = target.log_posterior(beta);
    metropolis_step(proposal, beta, current, |b| target.log_posterior(b), rng).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats::{mean, variance};

    fn one_interval(d: f64, r: f64) -> (HazardData, TimePartition) {
        let p = TimePartition::new(vec![0.0, 1.0]).unwrap();
        let data = HazardData {
            dim: 0,
            design: Vec::new(),
            waits: vec![r],
            events: vec![d > 0.0],
            exposure: vec![r],
            counts: vec![d],
            intervals: 1,
        };
        (data, p)
    }

    #[test]
    fn conjugate_gamma_posterior() {
        let (data, p) = one_interval(3.0, 2.0);
        let prior = GammaProcessPrior::new(1.0, 1.0).unwrap();
        let mut rng = stream(5, &[1]);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| gibbs_update_rates(&data, &[0.0], &prior, &p, &mut rng)[0])
            .collect();
        // Gamma(4, 3): mean 4/3, variance 4/9.
        let se = (4.0f64 / 9.0 / 1e5).sqrt();
        assert!((mean(&draws) - 4.0 / 3.0).abs() < 3.0 * se);
        assert!((variance(&draws) - 4.0 / 9.0).abs() < 0.02);
    }

    #[test]
    fn no_data_reproduces_prior() {
        let p = TimePartition::new(vec![0.0, 0.5, 2.0]).unwrap();
        let data = HazardData {
            dim: 0,
            design: Vec::new(),
            waits: Vec::new(),
            events: Vec::new(),
            exposure: Vec::new(),
            counts: vec![0.0, 0.0],
            intervals: 2,
        };
        let prior = GammaProcessPrior::new(2.0, 1.5).unwrap();
        let mut rng = stream(6, &[1]);
        let n = 50_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let r = gibbs_update_rates(&data, &[], &prior, &p, &mut rng);
            sums[0] += r[0];
            sums[1] += r[1];
        }
        for (j, s) in sums.iter().enumerate() {
            let width = p.width(j);
            let shape = 2.0 * 1.5 * width;
            let sd_rate = (shape).sqrt() / 2.0 / width;
            assert!((s / n as f64 - 1.5).abs() < 3.0 * sd_rate / (n as f64).sqrt());
        }
    }

    #[test]
    fn more_exposure_lowers_rate() {
        let prior = GammaProcessPrior::new(0.01, 1.0).unwrap();
        let mut rng = stream(7, &[1]);
        let mut means = Vec::new();
        for r in [50.0, 100.0] {
            let (data, p) = one_interval(40.0, r);
            let draws: Vec<f64> = (0..20_000)
                .map(|_| gibbs_update_rates(&data, &[0.0], &prior, &p, &mut rng)[0])
                .collect();
            means.push(mean(&draws));
        }
        assert!(means[1] < means[0]);
        assert!((means[0] / means[1] - 2.0).abs() < 0.05);
    }

    #[test]
    fn prior_only_beta_chain() {
        let data = HazardData::parametric(1, Vec::new(), Vec::new(), Vec::new());
        let target = BetaTarget {
            data: &data,
            base_cumulative: &[],
            prior_var: 2.0,
        };
        let mut proposal = AdaptiveProposal::new(1, 1.0);
        let mut rng = stream(8, &[1]);
        let mut beta = vec![0.0];
        let mut draws = Vec::new();
        for m in 0..60_000 {
            mh_update_beta(&target, &mut beta, &mut proposal, &mut rng);
            if m < 2000 {
                proposal.observe(&beta);
            } else if m == 2000 {
                proposal.freeze(None, 1e-6);
            } else {
                draws.push(beta[0]);
            }
        }
        assert!((variance(&draws).sqrt() - 2f64.sqrt()).abs() < 0.05);
        assert!(mean(&draws).abs() < 0.1);
    }
}
