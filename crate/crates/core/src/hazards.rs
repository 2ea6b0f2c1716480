//! Cause-specific proportional hazards with piecewise-constant (Gamma
//! Process) or Weibull baselines.
//!
//! A hazard for course `k` is `λ0(w) · exp(x'β)` where `w` is the time since
//! course initiation and `x` the hazard design vector. Piecewise baselines
//! are constant on `[u_j, u_{j+1})`; beyond the last knot the tail policy
//! either extends the last rate or truncates the hazard to zero.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

/// Smallest rate kept after a Gamma draw; tiny shapes underflow to zero.
pub const MIN_RATE: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimePartition {
    knots: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimePartition {
    type Error = Error;
    fn try_from(knots: Vec<f64>) -> Result<Self> {
        TimePartition::new(knots)
    }
}

impl From<TimePartition> for Vec<f64> {
    fn from(p: TimePartition) -> Self {
        p.knots
    }
}

impl TimePartition {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::config("a partition needs at least two knots"));
        }
        if knots[0] != 0.0 {
            return Err(Error::config("the first knot must be 0"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) || !knots.iter().all(|k| k.is_finite()) {
            return Err(Error::config("knots must be finite and strictly ascending"));
        }
        Ok(TimePartition { knots })
    }

    /// Knots at empirical quantiles of `waits`, from the shortest observed
    /// wait to the longest, so `[0, min W)` is its own event-free interval.
    /// Duplicate quantiles are merged, so fewer intervals may result.
    pub fn from_quantiles(waits: &[f64], intervals: usize) -> Result<Self> {
        let mut sorted: Vec<f64> = waits.iter().copied().filter(|w| *w > 0.0).collect();
        if sorted.is_empty() {
            return Err(Error::config(
                "cannot place knots without positive waiting times",
            ));
        }
        sorted.sort_by(f64::total_cmp);
        let mut knots = vec![0.0];
        let inner = intervals.max(1) - 1;
        for j in 0..inner {
            let q = stats::quantile_sorted(&sorted, j as f64 / inner as f64);
            if q > *knots.last().unwrap() {
                knots.push(q);
            }
        }
        let max = *sorted.last().unwrap();
        if max > *knots.last().unwrap() {
            knots.push(max);
        }
        TimePartition::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of intervals, `J - 1`.
    pub fn intervals(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn width(&self, j: usize) -> f64 {
        self.knots[j + 1] - self.knots[j]
    }

    pub fn last_knot(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Interval containing `w`, with `w` past the last knot mapped to the
    /// last interval.
    pub fn interval_of(&self, w: f64) -> usize {
        let idx = self.knots.partition_point(|&u| u <= w);
        idx.saturating_sub(1).min(self.intervals() - 1)
    }

    /// Overlap of `[0, w)` with each interval. Under `extend`, time beyond
    /// the last knot is credited to the last interval.
    pub fn exposures(&self, w: f64, tail: TailPolicy, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            (0..self.intervals()).map(|j| (w.min(self.knots[j + 1]) - self.knots[j]).max(0.0)),
        );
        if tail == TailPolicy::Extend && w > self.last_knot() {
            *out.last_mut().unwrap() += w - self.last_knot();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaProcessPrior {
    /// Concentration; small values give a weak prior.
    pub alpha: f64,
    /// Rate of the linear prior cumulative hazard `Λ*(w) = star_rate · w`.
    pub star_rate: f64,
}

impl GammaProcessPrior {
    pub fn new(alpha: f64, star_rate: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && star_rate > 0.0 && star_rate.is_finite()) {
            return Err(Error::config(format!(
                "Gamma Process prior needs alpha > 0 and star_rate > 0 (got {alpha}, {star_rate})"
            )));
        }
        Ok(GammaProcessPrior { alpha, star_rate })
    }

    /// Prior shape of the scaled rate `Δu · λ` on an interval of width `width`.
    pub fn shape(&self, width: f64) -> f64 {
        self.alpha * self.star_rate * width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    #[default]
    Extend,
    Truncate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseBaseline {
    pub partition: TimePartition,
    pub rates: Vec<f64>,
    #[serde(default)]
    pub tail: TailPolicy,
}

impl PiecewiseBaseline {
    pub fn new(partition: TimePartition, rates: Vec<f64>, tail: TailPolicy) -> Result<Self> {
        if rates.len() != partition.intervals() {
            return Err(Error::config(format!(
                "{} rates for {} intervals",
                rates.len(),
                partition.intervals()
            )));
        }
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("baseline rates must be positive and finite"));
        }
        Ok(PiecewiseBaseline {
            partition,
            rates,
            tail,
        })
    }

    pub fn rate(&self, w: f64) -> f64 {
        if self.tail == TailPolicy::Truncate && w > self.partition.last_knot() {
            return 0.0;
        }
        self.rates[self.partition.interval_of(w)]
    }

    pub fn cumulative(&self, w: f64) -> f64 {
        let knots = self.partition.knots();
        let mut acc = 0.0;
        for (j, rate) in self.rates.iter().enumerate() {
            if w <= knots[j] {
                return acc;
            }
            acc += rate * (w.min(knots[j + 1]) - knots[j]);
        }
        if self.tail == TailPolicy::Extend && w > self.partition.last_knot() {
            acc += self.rates[self.rates.len() - 1] * (w - self.partition.last_knot());
        }
        acc
    }

    pub fn invert(&self, target: f64) -> Option<f64> {
        let knots = self.partition.knots();
        let mut acc = 0.0;
        for (j, rate) in self.rates.iter().enumerate() {
            let seg = rate * (knots[j + 1] - knots[j]);
            if acc + seg >= target {
                return Some(knots[j] + ((target - acc) / rate).min(knots[j + 1] - knots[j]));
            }
            acc += seg;
        }
        match self.tail {
            TailPolicy::Extend => {
                Some(self.partition.last_knot() + (target - acc) / self.rates[self.rates.len() - 1])
            }
            TailPolicy::Truncate => None,
        }
    }
}

/// `λ0(w) = (a / s^a) w^(a-1)`, `Λ0(w) = (w / s)^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaseline {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullBaseline {
    pub fn rate(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return if self.shape < 1.0 {
                f64::INFINITY
            } else if self.shape == 1.0 {
                1.0 / self.scale
            } else {
                0.0
            };
        }
        self.shape / self.scale * (w / self.scale).powf(self.shape - 1.0)
    }

    pub fn cumulative(&self, w: f64) -> f64 {
        if w <= 0.0 {
            0.0
        } else {
            (w / self.scale).powf(self.shape)
        }
    }

    pub fn invert(&self, target: f64) -> f64 {
        self.scale * target.powf(1.0 / self.shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Piecewise(PiecewiseBaseline),
    Weibull(WeibullBaseline),
}

impl Baseline {
    pub fn rate(&self, w: f64) -> f64 {
        match self {
            Baseline::Piecewise(p) => p.rate(w),
            Baseline::Weibull(b) => b.rate(w),
        }
    }

    pub fn cumulative(&self, w: f64) -> f64 {
        match self {
            Baseline::Piecewise(p) => p.cumulative(w),
            Baseline::Weibull(b) => b.cumulative(w),
        }
    }

    /// Solves `Λ0(w) = target`; `None` when the truncated tail never
    /// accumulates that much hazard.
    pub fn invert(&self, target: f64) -> Option<f64> {
        match self {
            Baseline::Piecewise(p) => p.invert(target),
            Baseline::Weibull(b) => Some(b.invert(target)),
        }
    }
}

/// Outcome of inverse-CDF sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaitingTime {
    At(f64),
    /// The event never occurs within the modeled horizon.
    BeyondHorizon,
}

impl WaitingTime {
    pub fn time(self) -> f64 {
        match self {
            WaitingTime::At(w) => w,
            WaitingTime::BeyondHorizon => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardModel {
    pub baseline: Baseline,
    /// Log hazard ratios, one per design column.
    pub beta: Vec<f64>,
}

impl HazardModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        stats::dot(x, &self.beta)
    }

    pub fn hazard_at_lp(&self, w: f64, lp: f64) -> f64 {
        self.baseline.rate(w) * lp.exp()
    }

    pub fn hazard_at(&self, w: f64, x: &[f64]) -> f64 {
        self.hazard_at_lp(w, self.linear_predictor(x))
    }

    pub fn cumulative_hazard_lp(&self, w: f64, lp: f64) -> f64 {
        self.baseline.cumulative(w) * lp.exp()
    }

    pub fn cumulative_hazard(&self, w: f64, x: &[f64]) -> f64 {
        self.cumulative_hazard_lp(w, self.linear_predictor(x))
    }

    pub fn survival_lp(&self, w: f64, lp: f64) -> f64 {
        (-self.cumulative_hazard_lp(w, lp)).exp()
    }

    pub fn survival(&self, w: f64, x: &[f64]) -> f64 {
        self.survival_lp(w, self.linear_predictor(x))
    }

    /// Inverse-CDF draw: solves `Λ0(W) exp(lp) = -log u`.
    pub fn sample_waiting_time_lp(&self, lp: f64, u: f64) -> WaitingTime {
        debug_assert!(u > 0.0 && u < 1.0);
        let target = -u.ln() * (-lp).exp();
        match self.baseline.invert(target) {
            Some(w) => WaitingTime::At(w),
            None => WaitingTime::BeyondHorizon,
        }
    }

    pub fn sample_waiting_time(&self, x: &[f64], u: f64) -> WaitingTime {
        self.sample_waiting_time_lp(self.linear_predictor(x), u)
    }
}

/// Probability of neither competing event by `w`:
/// `exp(-Λ_Y(w) - Λ_T(w))`.
pub fn survival_both(
    next: &HazardModel,
    death: &HazardModel,
    w: f64,
    lp_next: f64,
    lp_death: f64,
) -> f64 {
    (-next.cumulative_hazard_lp(w, lp_next) - death.cumulative_hazard_lp(w, lp_death)).exp()
}

/// One draw of piecewise rates from the induced independent Gamma priors:
/// `Δu_j λ_j ~ Gamma(α Λ*(Δu_j), rate α)`.
pub fn sample_gp_prior<R: Rng + ?Sized>(
    prior: &GammaProcessPrior,
    partition: &TimePartition,
    rng: &mut R,
) -> Vec<f64> {
    (0..partition.intervals())
        .map(|j| {
            let width = partition.width(j);
            draw_scaled_rate(prior.shape(width), prior.alpha, width, rng)
        })
        .collect()
}

/// Draws `θ ~ Gamma(shape, rate)` and returns `θ / width`, floored at
/// [`MIN_RATE`].
pub(crate) fn draw_scaled_rate<R: Rng + ?Sized>(
    shape: f64,
    rate: f64,
    width: f64,
    rng: &mut R,
) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / rate).expect("positive Gamma parameters");
    (gamma.sample(rng) / width).max(MIN_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_step(tail: TailPolicy) -> HazardModel {
        HazardModel {
            baseline: Baseline::Piecewise(
                PiecewiseBaseline::new(
                    TimePartition::new(vec![0.0, 1.0, 2.0]).unwrap(),
                    vec![0.5, 1.0],
                    tail,
                )
                .unwrap(),
            ),
            beta: vec![],
        }
    }

    fn constant(rate: f64) -> HazardModel {
        HazardModel {
            baseline: Baseline::Piecewise(
                PiecewiseBaseline::new(
                    TimePartition::new(vec![0.0, 1.0]).unwrap(),
                    vec![rate],
                    TailPolicy::Extend,
                )
                .unwrap(),
            ),
            beta: vec![],
        }
    }

    #[test]
    fn hazard_lookup_and_scaling() {
        let m = two_step(TailPolicy::Extend);
        assert_eq!(m.hazard_at_lp(0.5, 0.0), 0.5);
        assert_abs_diff_eq!(m.hazard_at_lp(0.5, 2f64.ln()), 1.0, epsilon = 1e-15);
        assert_eq!(m.hazard_at_lp(2.5, 0.0), 1.0);
        assert_eq!(m.hazard_at_lp(1.0, 0.0), 1.0);
        assert_eq!(two_step(TailPolicy::Truncate).hazard_at_lp(2.5, 0.0), 0.0);
    }

    #[test]
    fn cumulative_hazard_values() {
        let m = two_step(TailPolicy::Extend);
        assert_eq!(m.cumulative_hazard_lp(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(m.cumulative_hazard_lp(1.5, 0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative_hazard_lp(1.5, 2f64.ln()), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.cumulative_hazard_lp(3.0, 0.0), 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            two_step(TailPolicy::Truncate).cumulative_hazard_lp(3.0, 0.0),
            1.5
        );
    }

    #[test]
    fn cumulative_matches_midpoint_quadrature() {
        // independent oracle: midpoint rule on the step function
        let m = two_step(TailPolicy::Extend);
        for &w in &[0.3, 1.0, 1.5, 2.0, 2.7] {
            let n = 200_000;
            let h = w / n as f64;
            let quad: f64 = (0..n)
                .map(|i| m.hazard_at_lp((i as f64 + 0.5) * h, 0.0) * h)
                .sum();
            assert_abs_diff_eq!(m.cumulative_hazard_lp(w, 0.0), quad, epsilon = 1e-5);
        }
    }

    #[test]
    fn survival_values() {
        let m = two_step(TailPolicy::Extend);
        assert_eq!(m.survival_lp(0.0, 0.3), 1.0);
        assert_abs_diff_eq!(
            constant(1.0).survival_lp(1.0, 0.0),
            (-1f64).exp(),
            epsilon = 1e-15
        );
        let both = survival_both(&constant(1.0), &constant(1.0), 1.0, 0.0, 0.0);
        assert_abs_diff_eq!(both, (-2f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn inverse_cdf_values() {
        let w = constant(2.0).sample_waiting_time_lp(0.0, 0.5).time();
        assert_abs_diff_eq!(w, 2f64.ln() / 2.0, epsilon = 1e-12);
        let w = two_step(TailPolicy::Extend)
            .sample_waiting_time_lp(0.0, (-1f64).exp())
            .time();
        assert_abs_diff_eq!(w, 1.5, epsilon = 1e-12);
        let w = two_step(TailPolicy::Extend)
            .sample_waiting_time_lp(0.0, 1.0 - 1e-12)
            .time();
        assert!(w > 0.0 && w < 1e-10);
        assert_eq!(
            two_step(TailPolicy::Truncate).sample_waiting_time_lp(0.0, 1e-3),
            WaitingTime::BeyondHorizon
        );
    }

    #[test]
    fn weibull_inverts_its_cumulative() {
        let b = WeibullBaseline {
            shape: 2.5,
            scale: 4.0,
        };
        for &w in &[0.1, 1.0, 3.0, 9.0] {
            assert_abs_diff_eq!(b.invert(b.cumulative(w)), w, epsilon = 1e-12);
        }
        let r = b.rate(2.0);
        let numeric = (b.cumulative(2.0 + 1e-6) - b.cumulative(2.0 - 1e-6)) / 2e-6;
        assert_abs_diff_eq!(r, numeric, epsilon = 1e-6);
    }

    #[test]
    fn partition_validation_and_quantiles() {
        assert!(TimePartition::new(vec![0.0]).is_err());
        assert!(TimePartition::new(vec![0.5, 1.0]).is_err());
        assert!(TimePartition::new(vec![0.0, 1.0, 1.0]).is_err());
        let waits: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = TimePartition::from_quantiles(&waits, 10).unwrap();
        assert_eq!(p.intervals(), 10);
        assert_eq!(p.last_knot(), 100.0);
        assert_eq!(&p.knots()[..3], &[0.0, 1.0, 12.0]);
        assert_eq!(
            TimePartition::from_quantiles(&waits, 1).unwrap().knots(),
            &[0.0, 100.0]
        );
        assert_eq!(
            TimePartition::from_quantiles(&waits, 2).unwrap().knots(),
            &[0.0, 1.0, 100.0]
        );
        let ties = TimePartition::from_quantiles(&[5.0; 10], 10).unwrap();
        assert_eq!(ties.knots(), &[0.0, 5.0]);
        assert_eq!(p.interval_of(0.0), 0);
        assert_eq!(p.interval_of(1e9), 9);
    }

    #[test]
    fn exposures_split_by_interval() {
        let p = TimePartition::new(vec![0.0, 1.0, 2.0]).unwrap();
        let mut e = Vec::new();
        p.exposures(1.5, TailPolicy::Extend, &mut e);
        assert_eq!(e, vec![1.0, 0.5]);
        p.exposures(0.4, TailPolicy::Extend, &mut e);
        assert_eq!(e, vec![0.4, 0.0]);
        p.exposures(3.0, TailPolicy::Extend, &mut e);
        assert_eq!(e, vec![1.0, 2.0]);
        p.exposures(3.0, TailPolicy::Truncate, &mut e);
        assert_eq!(e, vec![1.0, 1.0]);
    }

    #[test]
    fn prior_rejects_nonpositive() {
        assert!(GammaProcessPrior::new(0.0, 1.0).is_err());
        assert!(GammaProcessPrior::new(1.0, -1.0).is_err());
    }
}
