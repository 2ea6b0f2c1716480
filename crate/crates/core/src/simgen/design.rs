use std::fmt::Write as _;

use crate::data_model::{CovariateKind, CovariateSpec, LagPolicy, Schema};
use crate::kv::{format_list, KvFile};
use crate::{Error, Result};

/// History terms shared by treatment, confounder and hazard models, in
/// order: `x1, x2, x3, x4, l1, l2, l1_prev, l2_prev, a_prev, w2, w3, w4`.
pub(crate) const HISTORY_TERMS: usize = 12;

/// Data-generating design. Coefficient layouts:
///
/// - `l1_init`, `l2_init`: intercept, `x1..x4`.
/// - `l1_coef`, `l2_coef` (courses `k >= 2`): intercept, `x1..x4`,
///   `l1_prev, l2_prev, a_prev, w2, w3, w4`.
/// - `treat_coef`: intercept then the twelve history terms.
/// - `next_coef`, `death_coef`: the twelve history terms then `a`.
///
/// `w2..w4` are indicators of the previous waiting time's category under
/// `wait_cutpoints`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub n: usize,
    pub courses: usize,
    pub x3_prob: f64,
    pub x4_prob: f64,
    pub l1_init: Vec<f64>,
    pub l1_init_sd: f64,
    pub l2_init: Vec<f64>,
    pub l1_coef: Vec<f64>,
    pub l1_sd: f64,
    pub l2_coef: Vec<f64>,
    pub treat_coef: Vec<f64>,
    pub next_coef: Vec<f64>,
    pub death_coef: Vec<f64>,
    /// Weibull shape/scale per course; `next_*` have `K - 1` entries.
    pub next_shape: Vec<f64>,
    pub next_scale: Vec<f64>,
    pub death_shape: Vec<f64>,
    pub death_scale: Vec<f64>,
    /// Exponential dropout rate per course; 0 disables it.
    pub censor_rate: Vec<f64>,
    /// Administrative end of follow-up on the total-time scale, Weibull
    /// distributed per subject; an infinite scale disables it.
    pub admin_shape: f64,
    pub admin_scale: f64,
    /// Longest follow-up after the last course starts; `∞` disables it.
    pub final_followup: f64,
    pub wait_cutpoints: [f64; 3],
}

impl Default for SimDesign {
    fn default() -> Self {
        SimDesign {
            n: 300,
            courses: 4,
            x3_prob: 0.4,
            x4_prob: 0.5,
            l1_init: vec![0.0, 0.3, -0.2, 0.2, 0.0],
            l1_init_sd: 1.0,
            l2_init: vec![-1.0, 0.2, 0.0, 0.3, 0.0],
            l1_coef: vec![0.0, 0.2, -0.1, 0.1, 0.0, 0.5, 0.0, -0.3, 0.0, 0.0, 0.0],
            l1_sd: 0.8,
            l2_coef: vec![-1.0, 0.1, 0.0, 0.0, 0.2, -0.3, 1.0, 0.3, 0.0, 0.2, 0.4],
            treat_coef: vec![
                0.5, 0.2, 0.0, 0.2, -0.2, 0.5, -0.5, 0.3, 0.0, 0.8, 0.0, 0.0, 0.0,
            ],
            next_coef: vec![
                0.1, -0.1, 0.1, 0.0, 0.1, -0.2, 0.0, 0.0, 0.1, -0.3, -0.6, -0.9, 0.1,
            ],
            death_coef: vec![
                0.2, 0.1, 0.2, 0.0, -0.2, 0.3, -0.1, 0.1, 0.0, 0.2, 0.4, 0.6, -0.2,
            ],
            next_shape: vec![2.0, 2.0, 2.0],
            next_scale: vec![4.4, 4.4, 5.6],
            death_shape: vec![1.5, 1.5, 1.5, 7.25],
            death_scale: vec![260.0, 215.0, 20.7, 5.85],
            censor_rate: vec![0.005, 0.005, 0.005, 0.005],
            admin_shape: 75.0,
            admin_scale: 19.8,
            final_followup: 5.0,
            wait_cutpoints: [2.5, 4.0, 5.6],
        }
    }
}

const KEYS: &[&str] = &[
    "n",
    "courses",
    "x3_prob",
    "x4_prob",
    "l1_init",
    "l1_init_sd",
    "l2_init",
    "l1_coef",
    "l1_sd",
    "l2_coef",
    "treat_coef",
    "next_coef",
    "death_coef",
    "next_shape",
    "next_scale",
    "death_shape",
    "death_scale",
    "censor_rate",
    "admin_shape",
    "admin_scale",
    "final_followup",
    "wait_cutpoints",
];

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        let k = self.courses;
        if self.n == 0 || k == 0 {
            return Err(Error::config("design needs n >= 1 and at least one course"));
        }
        let lens = [
            ("l1_init", self.l1_init.len(), 5),
            ("l2_init", self.l2_init.len(), 5),
            ("l1_coef", self.l1_coef.len(), 11),
            ("l2_coef", self.l2_coef.len(), 11),
            ("treat_coef", self.treat_coef.len(), HISTORY_TERMS + 1),
            ("next_coef", self.next_coef.len(), HISTORY_TERMS + 1),
            ("death_coef", self.death_coef.len(), HISTORY_TERMS + 1),
            ("next_shape", self.next_shape.len(), k - 1),
            ("next_scale", self.next_scale.len(), k - 1),
            ("death_shape", self.death_shape.len(), k),
            ("death_scale", self.death_scale.len(), k),
            ("censor_rate", self.censor_rate.len(), k),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(Error::config(format!(
                    "design `{name}` needs {want} values, got {got}"
                )));
            }
        }
        let weibull = self
            .next_shape
            .iter()
            .chain(&self.next_scale)
            .chain(&self.death_shape)
            .chain(&self.death_scale)
            .chain([&self.admin_shape, &self.admin_scale]);
        if weibull.clone().any(|v| !(*v > 0.0)) {
            return Err(Error::config("Weibull shapes and scales must be positive"));
        }
        if !(self.final_followup > 0.0) {
            return Err(Error::config("final_followup must be positive"));
        }
        if self
            .censor_rate
            .iter()
            .any(|r| !(*r >= 0.0 && r.is_finite()))
        {
            return Err(Error::config(
                "censoring rates must be finite and nonnegative",
            ));
        }
        if !(0.0..=1.0).contains(&self.x3_prob) || !(0.0..=1.0).contains(&self.x4_prob) {
            return Err(Error::config(
                "binary covariate probabilities must lie in [0, 1]",
            ));
        }
        if !(self.l1_init_sd > 0.0 && self.l1_sd > 0.0) {
            return Err(Error::config("confounder noise must be positive"));
        }
        let c = self.wait_cutpoints;
        if !(c[0] < c[1] && c[1] < c[2]) {
            return Err(Error::config("wait_cutpoints must be strictly ascending"));
        }
        Ok(())
    }

    /// Schema of generated cohorts.
    pub fn schema(&self) -> Schema {
        let spec = |name: &str, kind, varying| CovariateSpec {
            name: name.into(),
            kind,
            varying,
        };
        Schema {
            courses: self.courses,
            covariates: vec![
                spec("x1", CovariateKind::Continuous, false),
                spec("x2", CovariateKind::Continuous, false),
                spec("x3", CovariateKind::Binary, false),
                spec("x4", CovariateKind::Binary, false),
                spec("l1", CovariateKind::Continuous, true),
                spec("l2", CovariateKind::Binary, true),
            ],
            lag: LagPolicy::Previous,
            wait_cutpoints: Some(self.wait_cutpoints),
        }
    }

    /// Reads a design; missing keys keep their defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(KEYS)?;
        let d = SimDesign::default();
        // An empty value is an empty list, needed for `next_*` when K = 1.
        let list = |key: &str, default: Vec<f64>| -> Result<Vec<f64>> {
            match kv.get(key) {
                Some("") => Ok(Vec::new()),
                _ => Ok(kv.list(key)?.unwrap_or(default)),
            }
        };
        let cut = list("wait_cutpoints", d.wait_cutpoints.to_vec())?;
        let design = SimDesign {
            n: kv.parsed_or("n", d.n)?,
            courses: kv.parsed_or("courses", d.courses)?,
            x3_prob: kv.parsed_or("x3_prob", d.x3_prob)?,
            x4_prob: kv.parsed_or("x4_prob", d.x4_prob)?,
            l1_init: list("l1_init", d.l1_init)?,
            l1_init_sd: kv.parsed_or("l1_init_sd", d.l1_init_sd)?,
            l2_init: list("l2_init", d.l2_init)?,
            l1_coef: list("l1_coef", d.l1_coef)?,
            l1_sd: kv.parsed_or("l1_sd", d.l1_sd)?,
            l2_coef: list("l2_coef", d.l2_coef)?,
            treat_coef: list("treat_coef", d.treat_coef)?,
            next_coef: list("next_coef", d.next_coef)?,
            death_coef: list("death_coef", d.death_coef)?,
            next_shape: list("next_shape", d.next_shape)?,
            next_scale: list("next_scale", d.next_scale)?,
            death_shape: list("death_shape", d.death_shape)?,
            death_scale: list("death_scale", d.death_scale)?,
            censor_rate: list("censor_rate", d.censor_rate)?,
            admin_shape: kv.parsed_or("admin_shape", d.admin_shape)?,
            admin_scale: kv.parsed_or("admin_scale", d.admin_scale)?,
            final_followup: kv.parsed_or("final_followup", d.final_followup)?,
            wait_cutpoints: cut
                .try_into()
                .map_err(|_| Error::config("wait_cutpoints needs exactly 3 values"))?,
        };
        design.validate()?;
        Ok(design)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text, "<design>")?)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "courses = {}", self.courses);
        let _ = writeln!(s, "x3_prob = {}", self.x3_prob);
        let _ = writeln!(s, "x4_prob = {}", self.x4_prob);
        let _ = writeln!(s, "l1_init = {}", format_list(&self.l1_init));
        let _ = writeln!(s, "l1_init_sd = {}", self.l1_init_sd);
        let _ = writeln!(s, "l2_init = {}", format_list(&self.l2_init));
        let _ = writeln!(s, "l1_coef = {}", format_list(&self.l1_coef));
        let _ = writeln!(s, "l1_sd = {}", self.l1_sd);
        let _ = writeln!(s, "l2_coef = {}", format_list(&self.l2_coef));
        let _ = writeln!(s, "treat_coef = {}", format_list(&self.treat_coef));
        let _ = writeln!(s, "next_coef = {}", format_list(&self.next_coef));
        let _ = writeln!(s, "death_coef = {}", format_list(&self.death_coef));
        let _ = writeln!(s, "next_shape = {}", format_list(&self.next_shape));
        let _ = writeln!(s, "next_scale = {}", format_list(&self.next_scale));
        let _ = writeln!(s, "death_shape = {}", format_list(&self.death_shape));
        let _ = writeln!(s, "death_scale = {}", format_list(&self.death_scale));
        let _ = writeln!(s, "censor_rate = {}", format_list(&self.censor_rate));
        let _ = writeln!(s, "admin_shape = {}", self.admin_shape);
        let _ = writeln!(s, "admin_scale = {}", self.admin_scale);
        let _ = writeln!(s, "final_followup = {}", self.final_followup);
        let _ = writeln!(s, "wait_cutpoints = {}", format_list(&self.wait_cutpoints));
        s
    }
}
