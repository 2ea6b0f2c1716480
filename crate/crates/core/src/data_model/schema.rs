use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kv::{format_list, KvFile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    Binary,
    /// Values in `(0, 1)`, e.g. ejection fraction.
    Proportion,
}

impl FromStr for CovariateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "continuous" => Ok(CovariateKind::Continuous),
            "binary" => Ok(CovariateKind::Binary),
            "proportion" => Ok(CovariateKind::Proportion),
            other => Err(Error::config(format!("unknown covariate type `{other}`"))),
        }
    }
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateKind::Continuous => "continuous",
            CovariateKind::Binary => "binary",
            CovariateKind::Proportion => "proportion",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    /// `false` for baseline (time-constant) covariates.
    pub varying: bool,
}

/// How much of the past enters the course-`k` design vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagPolicy {
    /// Current course plus the immediately preceding one.
    #[default]
    Previous,
    /// Every preceding course.
    Full,
}

impl LagPolicy {
    pub fn lags(self, k: usize) -> usize {
        match self {
            LagPolicy::Previous => (k - 1).min(1),
            LagPolicy::Full => k - 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// Maximum number of courses `K`.
    pub courses: usize,
    pub covariates: Vec<CovariateSpec>,
    pub lag: LagPolicy,
    /// Cutpoints for the four-level lagged waiting-time encoding; `None`
    /// means quartiles of the observed lagged waits.
    pub wait_cutpoints: Option<[f64; 3]>,
}

impl Schema {
    pub fn new(courses: usize, covariates: Vec<CovariateSpec>) -> Result<Self> {
        let schema = Schema {
            courses,
            covariates,
            lag: LagPolicy::Previous,
            wait_cutpoints: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.courses == 0 {
            return Err(Error::config("schema must declare at least one course"));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.covariates {
            if c.name.is_empty() || !seen.insert(c.name.as_str()) {
                return Err(Error::config(format!(
                    "covariate names must be unique and nonempty (`{}`)",
                    c.name
                )));
            }
        }
        if let Some(cuts) = self.wait_cutpoints {
            if !(cuts[0] < cuts[1] && cuts[1] < cuts[2]) || cuts.iter().any(|c| !c.is_finite()) {
                return Err(Error::config("wait cutpoints must be strictly ascending"));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariates.iter().position(|c| c.name == name)
    }

    pub fn baseline_indices(&self) -> Vec<usize> {
        (0..self.covariates.len())
            .filter(|&i| !self.covariates[i].varying)
            .collect()
    }

    pub fn varying_indices(&self) -> Vec<usize> {
        (0..self.covariates.len())
            .filter(|&i| self.covariates[i].varying)
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvFile::parse(text, "<schema>")?)
    }

    fn from_kv(kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(&["courses", "covariates", "lag", "wait_cutpoints"])?;
        let courses = kv
            .parsed::<usize>("courses")?
            .ok_or_else(|| Error::config("schema is missing `courses`"))?;
        let mut covariates = Vec::new();
        if let Some(list) = kv.get("covariates") {
            for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let parts: Vec<&str> = item.split(':').map(str::trim).collect();
                let [name, kind, timing] = parts[..] else {
                    return Err(Error::config(format!(
                        "covariate `{item}` must be name:type:varying|baseline"
                    )));
                };
                let varying = match timing {
                    "varying" => true,
                    "baseline" => false,
                    other => {
                        return Err(Error::config(format!(
                            "covariate `{name}`: expected varying or baseline, got `{other}`"
                        )))
                    }
                };
                covariates.push(CovariateSpec {
                    name: name.to_string(),
                    kind: kind.parse()?,
                    varying,
                });
            }
        }
        let lag = match kv.get("lag").unwrap_or("previous") {
            "previous" => LagPolicy::Previous,
            "full" => LagPolicy::Full,
            other => return Err(Error::config(format!("unknown lag policy `{other}`"))),
        };
        let wait_cutpoints = match kv.get("wait_cutpoints") {
            None | Some("auto") => None,
            Some(_) => {
                let v = kv.list("wait_cutpoints")?.unwrap_or_default();
                let arr: [f64; 3] = v
                    .try_into()
                    .map_err(|_| Error::config("wait_cutpoints needs exactly 3 values"))?;
                Some(arr)
            }
        };
        let schema = Schema {
            courses,
            covariates,
            lag,
            wait_cutpoints,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_kv_string(&self) -> String {
        let covs: Vec<String> = self
            .covariates
            .iter()
            .map(|c| {
                format!(
                    "{}:{}:{}",
                    c.name,
                    c.kind,
                    if c.varying { "varying" } else { "baseline" }
                )
            })
            .collect();
        let cuts = match self.wait_cutpoints {
            None => "auto".to_string(),
            Some(c) => format_list(&c),
        };
        format!(
            "courses = {}\ncovariates = {}\nlag = {}\nwait_cutpoints = {}\n",
            self.courses,
            covs.join(", "),
            match self.lag {
                LagPolicy::Previous => "previous",
                LagPolicy::Full => "full",
            },
            cuts
        )
    }
}
