use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{estimate_value, DrawModel, GCompConfig};
use crate::mcmc::{ModelContext, ParameterDraw};
use crate::rules::{DecisionRule, FeasibleSet};
use crate::{Error, Result};

/// Mass differences below this count as ties.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Ψ(t_ref)`.
    Survival,
    /// `Ψ(t_ref) - Φ(s)`.
    Utility,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "survival" => Ok(Objective::Survival),
            "utility" => Ok(Objective::Utility),
            _ => Err(Error::config(format!("unknown objective `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRulePosterior {
    /// Per-draw index of the best cell.
    pub argmax: Vec<usize>,
    /// Per-draw objective values, `values[m][cell]`.
    pub values: Vec<Vec<f64>>,
    /// Number of draws whose maximum was shared by several cells.
    pub tied_draws: usize,
    pub pmf: Vec<f64>,
    /// Posterior mode (lowest index among equal masses).
    pub mode: usize,
    pub credible: Vec<bool>,
    pub level: f64,
}

/// Per-draw argmax over `rules` with common random numbers across cells;
/// ties go to the lowest index.
pub fn optimize_rule(
    context: &ModelContext,
    draws: &[ParameterDraw],
    rules: &[DecisionRule],
    feasible: &FeasibleSet,
    objective: Objective,
    cfg: &GCompConfig,
    level: f64,
) -> Result<OptimalRulePosterior> {
    if rules.is_empty() {
        return Err(Error::config("the rule grid is empty"));
    }
    if draws.is_empty() {
        return Err(Error::config("no posterior draws"));
    }
    cfg.validate()?;
    for r in rules {
        r.check(context.encoder.schema())?;
    }
    let utility = objective == Objective::Utility;
    if utility && (cfg.s.is_none() || cfg.phi_covariate.is_none()) {
        return Err(Error::config(
            "the utility objective needs s and a monitored covariate",
        ));
    }
    let values: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|d| estimate_value(&DrawModel::new(context, d)?, rules, feasible, cfg, utility))
        .collect::<Result<_>>()?;
    let mut argmax = Vec::with_capacity(values.len());
    let mut tied_draws = 0;
    for v in &values {
        let best = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = v.iter().position(|x| *x == best).expect("nonempty grid");
        if v.iter().filter(|x| **x == best).count() > 1 {
            tied_draws += 1;
        }
        argmax.push(first);
    }
    let mut pmf = vec![0.0; rules.len()];
    for a in &argmax {
        pmf[*a] += 1.0 / argmax.len() as f64;
    }
    let mode = (0..pmf.len()).fold(0, |best, i| {
        if pmf[i] > pmf[best] + TIE_TOL {
            i
        } else {
            best
        }
    });
    let credible = hdi_set(&pmf, level)?;
    Ok(OptimalRulePosterior {
        argmax,
        values,
        tied_draws,
        pmf,
        mode,
        credible,
        level,
    })
}

/// Highest-mass credible set: cells in descending mass until the running
/// total reaches `level`; every cell tied with the last one included is
/// also included. Zero-mass cells are never included.
pub fn hdi_set(pmf: &[f64], level: f64) -> Result<Vec<bool>> {
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 || pmf.iter().any(|p| *p < 0.0) {
        return Err(Error::config(format!(
            "pmf must be nonnegative and sum to 1 (sums to {total})"
        )));
    }
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::config(format!(
            "credible level must lie in (0, 1] (got {level})"
        )));
    }
    let mut order: Vec<usize> = (0..pmf.len()).collect();
    order.sort_by(|a, b| pmf[*b].total_cmp(&pmf[*a]).then(a.cmp(b)));
    let mut keep = vec![false; pmf.len()];
    let mut acc = 0.0;
    let mut cut = f64::INFINITY;
    for &i in &order {
        if acc >= level - TIE_TOL || pmf[i] <= 0.0 {
            break;
        }
        keep[i] = true;
        acc += pmf[i];
        cut = pmf[i];
    }
    for (i, p) in pmf.iter().enumerate() {
        if *p > 0.0 && (p - cut).abs() <= TIE_TOL {
            keep[i] = true;
        }
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdi_examples() {
        assert_eq!(
            hdi_set(&[0.5, 0.3, 0.2], 0.8).unwrap(),
            vec![true, true, false]
        );
        assert_eq!(hdi_set(&[0.25; 4], 0.5).unwrap(), vec![true; 4]);
        assert_eq!(
            hdi_set(&[0.6, 0.0, 0.4], 1.0).unwrap(),
            vec![true, false, true]
        );
        assert_eq!(
            hdi_set(&[0.2, 0.5, 0.3], 0.5).unwrap(),
            vec![false, true, false]
        );
        assert!(hdi_set(&[0.5, 0.4], 0.9).is_err());
    }

    proptest::proptest! {
        #[test]
        fn hdi_mass_and_minimality(raw in proptest::collection::vec(0u32..20, 1..12), level in 0.05f64..=1.0) {
            let total: u32 = raw.iter().sum();
            proptest::prop_assume!(total > 0);
            let pmf: Vec<f64> = raw.iter().map(|r| f64::from(*r) / f64::from(total)).collect();
            let set = hdi_set(&pmf, level).unwrap();
            let mass: f64 = pmf.iter().zip(&set).filter(|(_, s)| **s).map(|(p, _)| p).sum();
            proptest::prop_assert!(mass >= level - 1e-9);
            // Every included cell outweighs every excluded positive cell.
            let min_in = pmf.iter().zip(&set).filter(|(_, s)| **s).map(|(p, _)| *p).fold(f64::INFINITY, f64::min);
            let max_out = pmf.iter().zip(&set).filter(|(_, s)| !**s).map(|(p, _)| *p).fold(0.0, f64::max);
            proptest::prop_assert!(min_in > max_out - 1e-12);
        }
    }
}
