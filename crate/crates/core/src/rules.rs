//! Dynamic treatment rules and feasible treatment sets.
//!
//! Rules are pure functions of the raw accumulated path (covariates up to
//! the current course, earlier treatments and waits). The threshold class
//! withholds treatment when the monitored covariate has both declined by
//! more than `τ1` relative to course 1 and dropped below `τ2`:
//! `a_k = 1 - I(L_k / L_1 - 1 < τ1) I(L_k < τ2)`, with `a_1 = 1 - I(L_1 < τ2)`
//! and `a_3 = 0`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_model::{CovariateKind, Path, Schema};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRuleParams {
    /// Relative-decline threshold, `<= 0`.
    pub tau1: f64,
    /// Absolute threshold in `(0, 1)`.
    pub tau2: f64,
}

impl ThresholdRuleParams {
    pub fn new(tau1: f64, tau2: f64) -> Result<Self> {
        if !(tau1 <= 0.0 && tau1.is_finite()) {
            return Err(Error::config(format!("tau1 must be <= 0 (got {tau1})")));
        }
        if !(tau2 > 0.0 && tau2 < 1.0) {
            return Err(Error::config(format!(
                "tau2 must lie in (0, 1) (got {tau2})"
            )));
        }
        Ok(ThresholdRuleParams { tau1, tau2 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    Threshold {
        covariate: usize,
        params: ThresholdRuleParams,
    },
    /// One fixed treatment per course.
    Fixed { treatments: Vec<u8> },
    /// Treat when the current value of a covariate is below `cut`.
    Below { covariate: usize, cut: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub name: String,
    pub kind: RuleKind,
}

impl DecisionRule {
    /// Raw rule output at course `k`; `path` ends with `L_k`.
    pub fn decide(&self, k: usize, path: &Path) -> u8 {
        match &self.kind {
            RuleKind::Threshold { covariate, params } => {
                let current = path.covariates[k - 1][*covariate];
                match k {
                    1 => u8::from(!(current < params.tau2)),
                    3 => 0,
                    _ => {
                        let first = path.covariates[0][*covariate];
                        let declined = current / first - 1.0 < params.tau1;
                        u8::from(!(declined && current < params.tau2))
                    }
                }
            }
            RuleKind::Fixed { treatments } => treatments[k - 1],
            RuleKind::Below { covariate, cut } => {
                u8::from(path.covariates[k - 1][*covariate] < *cut)
            }
        }
    }

    /// Checks the rule against a schema with `courses` courses.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        match &self.kind {
            RuleKind::Fixed { treatments } => {
                if treatments.len() != schema.courses || treatments.iter().any(|a| *a > 1) {
                    return Err(Error::config(format!(
                        "rule {} needs {} treatments in {{0,1}}",
                        self.name, schema.courses
                    )));
                }
            }
            RuleKind::Threshold { covariate, .. } | RuleKind::Below { covariate, .. } => {
                if *covariate >= schema.covariates.len() {
                    return Err(Error::config(format!(
                        "rule {} refers to an unknown covariate",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses `threshold(tau1, tau2[, covariate])`, `fixed(a1, ..., aK)` or
    /// `below(covariate, cut)`. A threshold rule without a covariate uses the
    /// first time-varying proportion covariate.
    pub fn parse(text: &str, schema: &Schema) -> Result<Self> {
        let text = text.trim();
        let (head, args) = text
            .strip_suffix(')')
            .and_then(|t| t.split_once('('))
            .ok_or_else(|| Error::config(format!("cannot parse rule `{text}`")))?;
        let args: Vec<&str> = args
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::config(format!("bad number `{s}` in rule `{text}`")))
        };
        let covariate = |name: &str| {
            schema.index_of(name).ok_or_else(|| {
                Error::config(format!("unknown covariate `{name}` in rule `{text}`"))
            })
        };
        let rule = match (head.trim(), args.as_slice()) {
            ("threshold", [t1, t2]) => {
                let idx = schema
                    .covariates
                    .iter()
                    .position(|c| c.varying && c.kind == CovariateKind::Proportion)
                    .ok_or_else(|| {
                        Error::config("threshold rule needs a time-varying proportion covariate")
                    })?;
                threshold_rule(ThresholdRuleParams::new(num(t1)?, num(t2)?)?, idx)
            }
            ("threshold", [t1, t2, name]) => threshold_rule(
                ThresholdRuleParams::new(num(t1)?, num(t2)?)?,
                covariate(name)?,
            ),
            ("fixed", list) if !list.is_empty() => {
                let treatments = list
                    .iter()
                    .map(|a| match *a {
                        "0" => Ok(0),
                        "1" => Ok(1),
                        _ => Err(Error::config(format!(
                            "fixed treatments must be 0 or 1 in `{text}`"
                        ))),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                fixed_rule(treatments)
            }
            ("below", [name, cut]) => below_rule(covariate(name)?, num(cut)?),
            _ => return Err(Error::config(format!("cannot parse rule `{text}`"))),
        };
        rule.check(schema)?;
        Ok(rule)
    }
}

impl fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub fn threshold_rule(params: ThresholdRuleParams, covariate: usize) -> DecisionRule {
    DecisionRule {
        name: format!("threshold({},{})", params.tau1, params.tau2),
        kind: RuleKind::Threshold { covariate, params },
    }
}

pub fn fixed_rule(treatments: Vec<u8>) -> DecisionRule {
    let list: Vec<String> = treatments.iter().map(u8::to_string).collect();
    DecisionRule {
        name: format!("fixed({})", list.join(",")),
        kind: RuleKind::Fixed { treatments },
    }
}

pub fn below_rule(covariate: usize, cut: f64) -> DecisionRule {
    DecisionRule {
        name: format!("below({covariate},{cut})"),
        kind: RuleKind::Below { covariate, cut },
    }
}

/// Allowed treatments per course; courses without an override allow both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    overrides: BTreeMap<usize, Vec<u8>>,
}

const BOTH: [u8; 2] = [0, 1];

impl Default for FeasibleSet {
    /// Course 3 allows only `0`.
    fn default() -> Self {
        FeasibleSet {
            overrides: BTreeMap::from([(3, vec![0])]),
        }
    }
}

impl FeasibleSet {
    pub fn unrestricted() -> Self {
        FeasibleSet {
            overrides: BTreeMap::new(),
        }
    }

    pub fn with(mut self, k: usize, allowed: Vec<u8>) -> Self {
        self.overrides.insert(k, allowed);
        self
    }

    pub fn allowed(&self, k: usize) -> &[u8] {
        self.overrides.get(&k).map_or(&BOTH, Vec::as_slice)
    }

    /// Parses `none`, `default`, or `k:a[|a];...` (e.g. `3:0;4:1`).
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "default" => return Ok(Self::default()),
            "none" | "" => return Ok(Self::unrestricted()),
            _ => {}
        }
        let mut set = Self::unrestricted();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, allowed) = part.split_once(':').ok_or_else(|| {
                Error::config(format!("feasible entry `{part}` must be k:treatments"))
            })?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad course in feasible entry `{part}`")))?;
            let allowed = allowed
                .split('|')
                .map(|a| match a.trim() {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    _ => Err(Error::config(format!(
                        "bad treatment in feasible entry `{part}`"
                    ))),
                })
                .collect::<Result<Vec<u8>>>()?;
            set.overrides.insert(k, allowed);
        }
        Ok(set)
    }

    pub fn to_spec(&self) -> String {
        if self.overrides.is_empty() {
            return "none".into();
        }
        let parts: Vec<String> = self
            .overrides
            .iter()
            .map(|(k, a)| {
                let a: Vec<String> = a.iter().map(u8::to_string).collect();
                format!("{k}:{}", a.join("|"))
            })
            .collect();
        parts.join(";")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub treatment: u8,
    /// The raw rule output was infeasible and was replaced.
    pub overridden: bool,
}

/// Applies `rule` at course `k` and coerces infeasible output to the lone
/// feasible treatment.
pub fn apply_rule(
    rule: &DecisionRule,
    path: &Path,
    feasible: &FeasibleSet,
    k: usize,
) -> Result<Decision> {
    let allowed = feasible.allowed(k);
    if allowed.is_empty() {
        return Err(Error::config(format!("empty feasible set at course {k}")));
    }
    let raw = rule.decide(k, path);
    if allowed.contains(&raw) {
        Ok(Decision {
            treatment: raw,
            overridden: false,
        })
    } else if let [only] = allowed {
        Ok(Decision {
            treatment: *only,
            overridden: true,
        })
    } else {
        Err(Error::config(format!(
            "rule {rule} chose {raw} at course {k}, outside the feasible set"
        )))
    }
}

/// Cartesian product of threshold values in row-major order (`tau1` outer).
pub fn rule_grid(tau1: &[f64], tau2: &[f64]) -> Result<Vec<ThresholdRuleParams>> {
    if tau1.is_empty() || tau2.is_empty() {
        return Err(Error::config(
            "threshold grids need at least one value per axis",
        ));
    }
    tau1.iter()
        .flat_map(|t1| {
            tau2.iter()
                .map(move |t2| ThresholdRuleParams::new(*t1, *t2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::CovariateSpec;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema::new(
            4,
            vec![
                CovariateSpec {
                    name: "ef".into(),
                    kind: CovariateKind::Proportion,
                    varying: true,
                },
                CovariateSpec {
                    name: "l1".into(),
                    kind: CovariateKind::Continuous,
                    varying: true,
                },
            ],
        )
        .unwrap()
    }

    fn path(efs: &[f64]) -> Path {
        Path {
            covariates: efs.iter().map(|e| vec![*e, 0.0]).collect(),
            treatments: vec![1; efs.len() - 1],
            waits: vec![30.0; efs.len() - 1],
        }
    }

    fn rule(t1: f64, t2: f64) -> DecisionRule {
        threshold_rule(ThresholdRuleParams::new(t1, t2).unwrap(), 0)
    }

    #[test]
    fn course_three_is_always_withheld() {
        let d = apply_rule(
            &fixed_rule(vec![1, 1, 1, 1]),
            &path(&[0.6, 0.6, 0.6]),
            &FeasibleSet::default(),
            3,
        )
        .unwrap();
        assert_eq!(
            d,
            Decision {
                treatment: 0,
                overridden: true
            }
        );
        assert_eq!(rule(-0.1, 0.5).decide(3, &path(&[0.6, 0.7, 0.8])), 0);
    }

    #[test]
    fn both_conditions_needed_to_withhold() {
        let r = rule(-0.1, 0.5);
        // 0.45 / 0.5625 - 1 = -0.2
        assert_eq!(r.decide(2, &path(&[0.5625, 0.45])), 0);
        // 0.60 / 0.75 - 1 = -0.2
        assert_eq!(r.decide(2, &path(&[0.75, 0.60])), 1);
    }

    #[test]
    fn first_and_fourth_course() {
        let r = rule(0.0, 0.7);
        assert_eq!(r.decide(1, &path(&[0.65])), 0);
        assert_eq!(r.decide(4, &path(&[0.70, 0.7, 0.7, 0.72])), 1);
    }

    #[test]
    fn ties_give_treatment() {
        let r = rule(-0.2, 0.5);
        assert_eq!(r.decide(1, &path(&[0.5])), 1);
        // Exactly at both thresholds: 0.5 / 0.625 - 1 = -0.2.
        assert_eq!(r.decide(2, &path(&[0.625, 0.5])), 1);
    }

    #[test]
    fn default_grid_size_and_order() {
        let t1 = crate::kv::parse_list("0,-0.1,...,-0.5").unwrap();
        let t2 = crate::kv::parse_list("0.4,0.5,...,0.9").unwrap();
        let g = rule_grid(&t1, &t2).unwrap();
        assert_eq!(g.len(), 36);
        assert_eq!((g[0].tau1, g[0].tau2), (0.0, 0.4));
        assert_eq!((g[1].tau1, g[1].tau2), (0.0, 0.5));
        assert_eq!((g[6].tau1, g[6].tau2), (-0.1, 0.4));
        assert_eq!(g, rule_grid(&t1, &t2).unwrap());
        assert_eq!(rule_grid(&[0.0], &[0.5]).unwrap().len(), 1);
        assert!(rule_grid(&[], &[0.5]).is_err());
    }

    #[test]
    fn parsing() {
        let s = schema();
        let r = DecisionRule::parse("threshold(-0.1, 0.5)", &s).unwrap();
        assert_eq!(r, rule(-0.1, 0.5));
        let r = DecisionRule::parse("fixed(1,0,0,1)", &s).unwrap();
        assert_eq!(r.decide(4, &path(&[0.5; 4])), 1);
        assert!(DecisionRule::parse("fixed(1,0)", &s).is_err());
        let r = DecisionRule::parse("below(l1, 0)", &s).unwrap();
        let mut p = path(&[0.5]);
        p.covariates[0][1] = -0.3;
        assert_eq!(r.decide(1, &p), 1);
        assert!(DecisionRule::parse("threshold(0.1,0.5)", &s).is_err());
        assert!(DecisionRule::parse("nonsense", &s).is_err());
    }

    #[test]
    fn feasible_set_parsing_and_errors() {
        assert_eq!(
            FeasibleSet::parse("default").unwrap(),
            FeasibleSet::default()
        );
        let f = FeasibleSet::parse("3:0;4:1").unwrap();
        assert_eq!(f.allowed(4), &[1]);
        assert_eq!(FeasibleSet::parse(&f.to_spec()).unwrap(), f);
        let empty = FeasibleSet::unrestricted().with(2, Vec::new());
        assert!(apply_rule(&fixed_rule(vec![1; 4]), &path(&[0.5, 0.5]), &empty, 2).is_err());
    }

    proptest! {
        #[test]
        fn decisions_are_feasible(
            efs in proptest::collection::vec(0.01f64..0.99, 4),
            t1 in -0.6f64..=0.0,
            t2 in 0.01f64..0.99,
            k in 1usize..=4,
            restrict in proptest::option::of((1usize..=4, 0u8..=1)),
        ) {
            let mut feasible = FeasibleSet::default();
            if let Some((c, a)) = restrict {
                feasible = feasible.with(c, vec![a]);
            }
            let p = path(&efs[..k]);
            let d = apply_rule(&rule(t1, t2), &p, &feasible, k).unwrap();
            prop_assert!(feasible.allowed(k).contains(&d.treatment));
        }

        #[test]
        fn raising_tau2_never_unwithholds(
            efs in proptest::collection::vec(0.01f64..0.99, 4),
            t1 in -0.6f64..=0.0,
            lo in 0.01f64..0.98,
            bump in 0.0f64..0.5,
            k in 1usize..=4,
        ) {
            let hi = (lo + bump).min(0.989);
            let p = path(&efs[..k]);
            let before = rule(t1, lo).decide(k, &p);
            let after = rule(t1, hi).decide(k, &p);
            prop_assert!(!(before == 0 && after == 1));
        }
    }
}
