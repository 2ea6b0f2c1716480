use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, SubjectRecord, Transition};
use super::schema::{CovariateKind, Schema};
use crate::stats;
use crate::{Error, Result};

/// Raw accumulated trajectory: covariate vectors for each initiated course,
/// plus the treatments and waiting times of completed courses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Path {
    pub covariates: Vec<Vec<f64>>,
    pub treatments: Vec<u8>,
    pub waits: Vec<f64>,
}

impl Path {
    /// Current course index when the path ends with a measured `L_k`.
    pub fn course(&self) -> usize {
        self.covariates.len()
    }

    pub fn current(&self) -> &[f64] {
        self.covariates.last().map_or(&[], Vec::as_slice)
    }

    pub fn baseline(&self) -> &[f64] {
        self.covariates.first().map_or(&[], Vec::as_slice)
    }
}

/// Encoded history design vector `H_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryVector(pub Vec<f64>);

impl std::ops::Deref for HistoryVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Four-level category of a waiting time: one plus the number of cutpoints
/// strictly below `w`, so a tie maps to the lower level.
pub fn encode_waiting_time(w: f64, cutpoints: &[f64; 3]) -> usize {
    debug_assert!(cutpoints[0] < cutpoints[1] && cutpoints[1] < cutpoints[2]);
    1 + cutpoints.iter().filter(|&&c| c < w).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

/// Schema plus the training-cohort transforms (standardization of
/// continuous covariates, waiting-time cutpoints). Built once at fit time and
/// shipped with the posterior draws so simulation uses identical encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "EncoderParts", into = "EncoderParts")]
pub struct Encoder {
    schema: Schema,
    standardization: Vec<Option<Standardization>>,
    wait_cutpoints: [f64; 3],
    baseline_idx: Vec<usize>,
    varying_idx: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct EncoderParts {
    schema: Schema,
    standardization: Vec<Option<Standardization>>,
    wait_cutpoints: [f64; 3],
}

impl From<EncoderParts> for Encoder {
    fn from(p: EncoderParts) -> Self {
        Encoder::from_parts(p.schema, p.standardization, p.wait_cutpoints)
    }
}

impl From<Encoder> for EncoderParts {
    fn from(e: Encoder) -> Self {
        EncoderParts {
            schema: e.schema,
            standardization: e.standardization,
            wait_cutpoints: e.wait_cutpoints,
        }
    }
}

impl Encoder {
    pub fn from_parts(
        schema: Schema,
        standardization: Vec<Option<Standardization>>,
        wait_cutpoints: [f64; 3],
    ) -> Self {
        Encoder {
            baseline_idx: schema.baseline_indices(),
            varying_idx: schema.varying_indices(),
            schema,
            standardization,
            wait_cutpoints,
        }
    }

    pub fn fit(cohort: &Cohort) -> Result<Self> {
        let schema = cohort.schema().clone();
        let subjects = cohort.subjects();
        let standardization = schema
            .covariates
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                if spec.kind != CovariateKind::Continuous {
                    return None;
                }
                let values: Vec<f64> = if spec.varying {
                    subjects
                        .iter()
                        .flat_map(|s| s.courses.iter().map(move |c| c.covariates[i]))
                        .collect()
                } else {
                    subjects
                        .iter()
                        .map(|s| s.courses[0].covariates[i])
                        .collect()
                };
                let center = stats::mean(&values);
                let sd = stats::variance(&values).sqrt();
                let scale = if sd.is_finite() && sd > 0.0 { sd } else { 1.0 };
                Some(Standardization { center, scale })
            })
            .collect();
        let wait_cutpoints = match schema.wait_cutpoints {
            Some(c) => c,
            None => {
                let mut lagged: Vec<f64> = subjects
                    .iter()
                    .flat_map(|s| s.courses.iter())
                    .filter(|c| c.transition == Transition::NextCourse)
                    .map(|c| c.waiting_time)
                    .collect();
                if lagged.is_empty() {
                    lagged = subjects
                        .iter()
                        .flat_map(|s| s.courses.iter().map(|c| c.waiting_time))
                        .collect();
                }
                lagged.sort_by(f64::total_cmp);
                let q = [0.25, 0.5, 0.75].map(|p| stats::quantile_sorted(&lagged, p));
                if schema.courses > 1 && !(q[0] < q[1] && q[1] < q[2]) {
                    return Err(Error::config(format!(
                        "waiting-time quartiles {q:?} are not distinct; declare wait_cutpoints in the schema"
                    )));
                }
                if q[0] < q[1] && q[1] < q[2] {
                    q
                } else {
                    [1.0, 2.0, 3.0]
                }
            }
        };
        Ok(Encoder::from_parts(schema, standardization, wait_cutpoints))
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn courses(&self) -> usize {
        self.schema.courses
    }

    pub fn wait_cutpoints(&self) -> &[f64; 3] {
        &self.wait_cutpoints
    }

    pub fn varying_indices(&self) -> &[usize] {
        &self.varying_idx
    }

    pub fn baseline_indices(&self) -> &[usize] {
        &self.baseline_idx
    }

    pub fn standardization(&self, i: usize) -> Option<Standardization> {
        self.standardization.get(i).copied().flatten()
    }

    #[inline]
    pub fn encode_value(&self, i: usize, v: f64) -> f64 {
        match self.standardization[i] {
            Some(s) => (v - s.center) / s.scale,
            None => v,
        }
    }

    #[inline]
    pub fn decode_value(&self, i: usize, z: f64) -> f64 {
        match self.standardization[i] {
            Some(s) => z * s.scale + s.center,
            None => z,
        }
    }

    fn lag_block_len(&self) -> usize {
        self.varying_idx.len() + 1 + 3
    }

    pub fn history_len(&self, k: usize) -> usize {
        self.baseline_idx.len()
            + self.varying_idx.len()
            + self.schema.lag.lags(k) * self.lag_block_len()
    }

    pub fn hazard_len(&self, k: usize) -> usize {
        self.history_len(k) + 1
    }

    /// Length of the course-`k` confounder design (`k >= 2`), intercept
    /// included.
    pub fn confounder_len(&self, k: usize) -> usize {
        1 + self.baseline_idx.len() + self.schema.lag.lags(k) * self.lag_block_len()
    }

    fn push_lags(&self, path: &Path, k: usize, out: &mut Vec<f64>) {
        let lags = self.schema.lag.lags(k);
        for j in (k - lags..k).rev() {
            // j is the 1-based index of the completed course.
            let covs = &path.covariates[j - 1];
            out.extend(
                self.varying_idx
                    .iter()
                    .map(|&i| self.encode_value(i, covs[i])),
            );
            out.push(f64::from(path.treatments[j - 1]));
            let level = encode_waiting_time(path.waits[j - 1], &self.wait_cutpoints);
            out.extend((2..=4).map(|l| if l == level { 1.0 } else { 0.0 }));
        }
    }

    fn push_baseline(&self, path: &Path, out: &mut Vec<f64>) {
        let base = path.baseline();
        out.extend(
            self.baseline_idx
                .iter()
                .map(|&i| self.encode_value(i, base[i])),
        );
    }

    /// History design `H_k` for a path whose last covariate vector is `L_k`.
    pub fn write_history(&self, path: &Path, out: &mut Vec<f64>) {
        let k = path.course();
        debug_assert!(k >= 1 && path.treatments.len() >= k - 1);
        out.clear();
        self.push_baseline(path, out);
        let current = path.current();
        out.extend(
            self.varying_idx
                .iter()
                .map(|&i| self.encode_value(i, current[i])),
        );
        self.push_lags(path, k, out);
    }

    /// Hazard design: `H_k` followed by the course-`k` treatment.
    pub fn write_hazard_design(&self, path: &Path, treatment: u8, out: &mut Vec<f64>) {
        self.write_history(path, out);
        out.push(f64::from(treatment));
    }

    /// Confounder design for `L_k`: intercept, baseline covariates and the
    /// lagged block of the completed courses. `path` ends after course
    /// `k - 1` (its treatment and waiting time recorded, `L_k` not yet).
    pub fn write_confounder_design(&self, path: &Path, out: &mut Vec<f64>) {
        let k = path.covariates.len() + 1;
        debug_assert_eq!(path.treatments.len(), k - 1);
        out.clear();
        out.push(1.0);
        self.push_baseline(path, out);
        self.push_lags(path, k, out);
    }

    pub fn history(&self, subject: &SubjectRecord, k: usize) -> Result<HistoryVector> {
        let path = subject.path_to(k)?;
        let mut out = Vec::with_capacity(self.history_len(k));
        self.write_history(&path, &mut out);
        Ok(HistoryVector(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{CourseRecord, CovariateSpec, LagPolicy};

    fn cohort(lag: LagPolicy) -> Cohort {
        let mut schema = Schema::new(
            4,
            vec![
                CovariateSpec {
                    name: "ef".into(),
                    kind: CovariateKind::Proportion,
                    varying: true,
                },
                CovariateSpec {
                    name: "age".into(),
                    kind: CovariateKind::Continuous,
                    varying: false,
                },
            ],
        )
        .unwrap();
        schema.lag = lag;
        schema.wait_cutpoints = Some([20.0, 35.0, 50.0]);
        let row = |id: &str, k, ef, age, a, w, t| CourseRecord {
            subject_id: id.into(),
            k,
            covariates: vec![ef, age],
            treatment: a,
            waiting_time: w,
            transition: t,
        };
        Cohort::from_records(
            schema,
            vec![
                row("a", 1, 0.6, 10.0, 1, 40.0, Transition::NextCourse),
                row("a", 2, 0.5, 10.0, 0, 10.0, Transition::NextCourse),
                row("a", 3, 0.55, 10.0, 0, 5.0, Transition::Censored),
                row("b", 1, 0.7, 14.0, 0, 3.0, Transition::NextCourse),
                row("b", 2, 0.65, 14.0, 1, 60.0, Transition::Death),
            ],
        )
        .unwrap()
    }

    #[test]
    fn waiting_time_levels() {
        let cuts = [20.0, 35.0, 50.0];
        assert_eq!(encode_waiting_time(10.0, &cuts), 1);
        assert_eq!(encode_waiting_time(35.0, &cuts), 2);
        assert_eq!(encode_waiting_time(35.0001, &cuts), 3);
        assert_eq!(encode_waiting_time(100.0, &cuts), 4);
    }

    #[test]
    fn first_course_has_no_lags() {
        let c = cohort(LagPolicy::Previous);
        let enc = Encoder::fit(&c).unwrap();
        let h = enc.history(&c.subjects()[0], 1).unwrap();
        // standardized age, then ef at course 1
        assert_eq!(h.len(), 2);
        assert!((h[0] - (10.0 - 12.0) / 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(h[1], 0.6);
    }

    #[test]
    fn second_course_contains_lag_block() {
        let c = cohort(LagPolicy::Previous);
        let enc = Encoder::fit(&c).unwrap();
        let h = enc.history(&c.subjects()[0], 2).unwrap();
        // age, ef_2, ef_1, a_1, wcat(40) = level 3 -> dummies (0,1,0)
        assert_eq!(&h[1..], &[0.5, 0.6, 1.0, 0.0, 1.0, 0.0]);
        let h3 = enc.history(&c.subjects()[0], 3).unwrap();
        assert_eq!(h3.len(), enc.history_len(3));
        assert_eq!(h3.len(), h.len());
    }

    #[test]
    fn full_lag_policy_grows_with_course() {
        let c = cohort(LagPolicy::Full);
        let enc = Encoder::fit(&c).unwrap();
        let h3 = enc.history(&c.subjects()[0], 3).unwrap();
        assert_eq!(h3.len(), 2 + 2 * 5);
        assert_eq!(enc.history_len(4), 2 + 3 * 5);
    }

    #[test]
    fn history_beyond_kappa_is_an_error() {
        let c = cohort(LagPolicy::Previous);
        let enc = Encoder::fit(&c).unwrap();
        assert!(matches!(
            enc.history(&c.subjects()[1], 3),
            Err(Error::CourseOutOfRange { k: 3, kappa: 2 })
        ));
    }

    #[test]
    fn confounder_design_matches_history_lags() {
        let c = cohort(LagPolicy::Previous);
        let enc = Encoder::fit(&c).unwrap();
        let s = &c.subjects()[1];
        let mut z = Vec::new();
        enc.write_confounder_design(&s.path_before(2).unwrap(), &mut z);
        assert_eq!(z.len(), enc.confounder_len(2));
        // intercept, age, ef_1, a_1, wcat(3) = level 1
        assert_eq!(z[0], 1.0);
        assert_eq!(&z[2..], &[0.7, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn encoder_serde_round_trip() {
        let enc = Encoder::fit(&cohort(LagPolicy::Previous)).unwrap();
        let json = serde_json::to_string(&enc).unwrap();
        let back: Encoder = serde_json::from_str(&json).unwrap();
        assert_eq!(enc, back);
    }
}
