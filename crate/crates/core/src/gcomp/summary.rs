use serde::{Deserialize, Serialize};

use super::simulate::GCompResult;
use crate::stats::{mean, quantile_sorted};
use crate::{Error, Result};

/// Pointwise posterior mean, median and equal-tailed percentile band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Summarizes per-draw curves (`values[m][point]`) at level `1 - alpha`
/// using linear-interpolation percentiles.
pub fn posterior_summary(values: &[Vec<f64>], alpha: f64) -> Result<PosteriorSummary> {
    if values.len() < 2 {
        return Err(Error::config("posterior summaries need at least two draws"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1) (got {alpha})"
        )));
    }
    let points = values[0].len();
    if values.iter().any(|v| v.len() != points) {
        return Err(Error::config("draws have curves of different lengths"));
    }
    let mut out = PosteriorSummary {
        mean: Vec::with_capacity(points),
        median: Vec::with_capacity(points),
        lower: Vec::with_capacity(points),
        upper: Vec::with_capacity(points),
    };
    let mut column = Vec::with_capacity(values.len());
    for j in 0..points {
        column.clear();
        column.extend(values.iter().map(|v| v[j]));
        out.mean.push(mean(&column));
        column.sort_by(f64::total_cmp);
        out.median.push(quantile_sorted(&column, 0.5));
        out.lower.push(quantile_sorted(&column, alpha / 2.0));
        out.upper.push(quantile_sorted(&column, 1.0 - alpha / 2.0));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Ratio,
    Difference,
}

impl std::str::FromStr for ContrastKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(ContrastKind::Ratio),
            "difference" => Ok(ContrastKind::Difference),
            _ => Err(Error::config(format!("unknown contrast `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastResult {
    pub kind: ContrastKind,
    /// Per-draw contrast curves; `NaN` where undefined.
    pub values: Vec<Vec<f64>>,
    /// Grid points where some draw has a zero denominator.
    pub undefined: Vec<bool>,
    /// Summary over draws; `NaN` at undefined points.
    pub summary: PosteriorSummary,
}

/// Per-draw `Ψ_r / Ψ_r'` or `Ψ_r - Ψ_r'`, then pointwise summaries.
pub fn contrast(
    r: &GCompResult,
    r2: &GCompResult,
    kind: ContrastKind,
    alpha: f64,
) -> Result<ContrastResult> {
    if r.grid != r2.grid || r.draws != r2.draws {
        return Err(Error::config(
            "contrasted results must share draws and grid",
        ));
    }
    let values: Vec<Vec<f64>> = r
        .psi
        .iter()
        .zip(&r2.psi)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| match kind {
                    ContrastKind::Difference => x - y,
                    ContrastKind::Ratio if *y == 0.0 => f64::NAN,
                    ContrastKind::Ratio => x / y,
                })
                .collect()
        })
        .collect();
    let undefined: Vec<bool> = (0..r.grid.len())
        .map(|j| values.iter().any(|v| v[j].is_nan()))
        .collect();
    let mut summary = posterior_summary(&values, alpha)?;
    for (j, bad) in undefined.iter().enumerate() {
        if *bad {
            summary.mean[j] = f64::NAN;
            summary.median[j] = f64::NAN;
            summary.lower[j] = f64::NAN;
            summary.upper[j] = f64::NAN;
        }
    }
    Ok(ContrastResult {
        kind,
        values,
        undefined,
        summary,
    })
}
