use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Proposals between scalar step-size adjustments during burn-in.
const TUNE_BATCH: usize = 25;

/// `s_d * cov(history) + jitter * I`, or `fallback` when the empirical
/// covariance is degenerate (a zero or non-finite variance, or not positive
/// definite after the ridge).
pub fn adapt_covariance(
    history: &[Vec<f64>],
    scale: f64,
    jitter: f64,
    fallback: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = fallback.nrows();
    if history.len() < 2 {
        log::warn!("fewer than two burn-in draws; keeping the initial proposal");
        return fallback.clone();
    }
    let n = history.len() as f64;
    let mut mean = DVector::zeros(d);
    for row in history {
        mean += DVector::from_column_slice(row);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for row in history {
        let c = DVector::from_column_slice(row) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    let degenerate = (0..d).any(|i| !(cov[(i, i)] > 0.0) || !cov[(i, i)].is_finite());
    if degenerate {
        log::warn!("degenerate burn-in covariance; falling back to the initial diagonal proposal");
        return fallback.clone();
    }
    let out = cov * scale + DMatrix::identity(d, d) * jitter;
    if out.clone().cholesky().is_none() {
        log::warn!("adapted covariance is not positive definite; falling back to the initial diagonal proposal");
        return fallback.clone();
    }
    out
}

/// Gaussian random-walk proposal for one block.
///
/// During burn-in the initial diagonal proposal is rescaled every
/// [`TUNE_BATCH`] steps toward the optimal acceptance rate, and the visited
/// states are recorded. [`AdaptiveProposal::freeze`] replaces it with the
/// scaled empirical covariance of the second half of burn-in; it never
/// changes afterwards.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal {
    dim: usize,
    initial_sd: f64,
    chol: DMatrix<f64>,
    covariance: DMatrix<f64>,
    log_scale: f64,
    history: Vec<Vec<f64>>,
    batch_accepted: usize,
    batch_proposed: usize,
    batches: usize,
    accepted: usize,
    proposed: usize,
    frozen: bool,
}

impl AdaptiveProposal {
    pub fn new(dim: usize, initial_sd: f64) -> Self {
        let covariance = DMatrix::identity(dim, dim) * (initial_sd * initial_sd);
        AdaptiveProposal {
            dim,
            initial_sd,
            chol: DMatrix::identity(dim, dim) * initial_sd,
            covariance,
            log_scale: 0.0,
            history: Vec::new(),
            batch_accepted: 0,
            batch_proposed: 0,
            batches: 0,
            accepted: 0,
            proposed: 0,
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Current proposal covariance, scale factor included.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.covariance * (2.0 * self.log_scale).exp()
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &[f64], rng: &mut R) -> Vec<f64> {
        let z = DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        let step = &self.chol * z * self.log_scale.exp();
        current
            .iter()
            .zip(step.iter())
            .map(|(x, s)| x + s)
            .collect()
    }

    fn target(&self) -> f64 {
        if self.dim == 1 {
            0.44
        } else {
            0.234
        }
    }

    /// Records one accept/reject outcome; tunes the scale during burn-in.
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += usize::from(accepted);
        if self.frozen {
            return;
        }
        self.batch_proposed += 1;
        self.batch_accepted += usize::from(accepted);
        if self.batch_proposed == TUNE_BATCH {
            self.batches += 1;
            let rate = self.batch_accepted as f64 / TUNE_BATCH as f64;
            self.log_scale += 2.0 * (rate - self.target()) / (self.batches as f64).sqrt();
            self.log_scale = self.log_scale.clamp(-12.0, 6.0);
            self.batch_proposed = 0;
            self.batch_accepted = 0;
        }
    }

    /// Stores a burn-in state for the covariance estimate.
    pub fn observe(&mut self, state: &[f64]) {
        if !self.frozen {
            self.history.push(state.to_vec());
        }
    }

    /// Adapts and freezes the proposal; `scale` defaults to `2.38^2 / d`.
    pub fn freeze(&mut self, scale: Option<f64>, jitter: f64) {
        if self.frozen {
            return;
        }
        let s_d = scale.unwrap_or(2.38 * 2.38 / self.dim as f64);
        let fallback = DMatrix::identity(self.dim, self.dim) * (self.initial_sd * self.initial_sd);
        let half = &self.history[self.history.len() / 2..];
        let cov = adapt_covariance(half, s_d, jitter, &fallback);
        self.chol = cov
            .clone()
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| DMatrix::identity(self.dim, self.dim) * self.initial_sd);
        self.covariance = cov;
        self.log_scale = 0.0;
        self.history = Vec::new();
        self.frozen = true;
        self.accepted = 0;
        self.proposed = 0;
    }

    /// Acceptance rate since the last freeze (or since creation).
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One Metropolis step with a symmetric proposal. Non-finite proposal
/// densities are rejected.
pub(crate) fn metropolis_step<R: Rng + ?Sized>(
    proposal: &mut AdaptiveProposal,
    current: &mut Vec<f64>,
    current_lp: f64,
    log_post: impl Fn(&[f64]) -> f64,
    rng: &mut R,
) -> (bool, f64) {
    let candidate = proposal.propose(current, rng);
    let lp = log_post(&candidate);
    let accept = lp.is_finite() && rng.random::<f64>().ln() < lp - current_lp;
    proposal.record(accept);
    if accept {
        *current = candidate;
        (true, lp)
    } else {
        (false, current_lp)
    }
}
