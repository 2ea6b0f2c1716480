use std::collections::HashMap;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use super::schema::{CovariateKind, Schema};
use super::Path;
use crate::{Error, Result};

/// Transition that ends a course's waiting time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    Death,
    Censored,
    NextCourse,
}

impl Transition {
    pub fn code(self) -> i8 {
        match self {
            Transition::Death => 1,
            Transition::Censored => 0,
            Transition::NextCourse => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(Transition::Death),
            0 => Some(Transition::Censored),
            -1 => Some(Transition::NextCourse),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseRecord {
    pub subject_id: String,
    pub k: usize,
    /// All covariates in schema order (baseline values repeated per row).
    pub covariates: Vec<f64>,
    pub treatment: u8,
    pub waiting_time: f64,
    pub transition: Transition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub courses: Vec<CourseRecord>,
}

impl SubjectRecord {
    /// Observed number of courses, `κ`.
    pub fn kappa(&self) -> usize {
        self.courses.len()
    }

    /// Total observed follow-up, the sum of waiting times.
    pub fn total_time(&self) -> f64 {
        self.courses.iter().map(|c| c.waiting_time).sum()
    }

    pub fn died(&self) -> bool {
        self.courses
            .last()
            .is_some_and(|c| c.transition == Transition::Death)
    }

    pub fn course(&self, k: usize) -> Option<&CourseRecord> {
        k.checked_sub(1).and_then(|i| self.courses.get(i))
    }

    /// Raw history `H_k` just before the course-`k` decision.
    pub fn path_to(&self, k: usize) -> Result<Path> {
        if k == 0 || k > self.kappa() {
            return Err(Error::CourseOutOfRange {
                k,
                kappa: self.kappa(),
            });
        }
        let prior = &self.courses[..k - 1];
        Ok(Path {
            covariates: self.courses[..k]
                .iter()
                .map(|c| c.covariates.clone())
                .collect(),
            treatments: prior.iter().map(|c| c.treatment).collect(),
            waits: prior.iter().map(|c| c.waiting_time).collect(),
        })
    }

    /// Path after course `k - 1` completed but before `L_k` is measured.
    pub fn path_before(&self, k: usize) -> Result<Path> {
        if k < 2 || k > self.kappa() {
            return Err(Error::CourseOutOfRange {
                k,
                kappa: self.kappa(),
            });
        }
        let prior = &self.courses[..k - 1];
        Ok(Path {
            covariates: prior.iter().map(|c| c.covariates.clone()).collect(),
            treatments: prior.iter().map(|c| c.treatment).collect(),
            waits: prior.iter().map(|c| c.waiting_time).collect(),
        })
    }
}

/// Validated, immutable collection of subject trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    schema: Schema,
    subjects: Vec<SubjectRecord>,
}

const FIXED_COLUMNS: [&str; 5] = ["subject_id", "k", "a", "w", "delta"];

impl Cohort {
    /// Groups rows by subject (first-appearance order), sorts each subject's
    /// courses and checks every invariant.
    pub fn from_records(schema: Schema, rows: Vec<CourseRecord>) -> Result<Self> {
        schema.validate()?;
        let mut order: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, Vec<CourseRecord>> = HashMap::new();
        for row in rows {
            let entry = grouped.entry(row.subject_id.clone()).or_insert_with(|| {
                order.push(row.subject_id.clone());
                Vec::new()
            });
            if entry.iter().any(|c| c.k == row.k) {
                return Err(Error::validation(
                    &row.subject_id,
                    format!("duplicate record for course {}", row.k),
                ));
            }
            entry.push(row);
        }
        let mut subjects = Vec::with_capacity(order.len());
        for id in order {
            let mut courses = grouped.remove(&id).unwrap_or_default();
            courses.sort_by_key(|c| c.k);
            let subject = SubjectRecord { id, courses };
            validate_subject(&schema, &subject)?;
            subjects.push(subject);
        }
        if subjects.is_empty() {
            return Err(Error::config("cohort contains no subjects"));
        }
        Ok(Cohort { schema, subjects })
    }

    pub fn ingest(path: &FsPath, schema: &Schema) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            msg,
        };
        let header = reader.headers()?.clone();
        let expected: Vec<&str> = FIXED_COLUMNS
            .iter()
            .copied()
            .chain(schema.covariates.iter().map(|c| c.name.as_str()))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(parse_err(
                1,
                format!("header must be `{}`", expected.join(",")),
            ));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| record.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| {
                    parse_err(
                        line,
                        format!("column `{}`: `{}` is not a number", expected[i], field(i)),
                    )
                })
            };
            let int = |i: usize| -> Result<i64> {
                field(i).parse::<i64>().map_err(|_| {
                    parse_err(
                        line,
                        format!("column `{}`: `{}` is not an integer", expected[i], field(i)),
                    )
                })
            };
            let subject_id = field(0).to_string();
            if subject_id.is_empty() {
                return Err(parse_err(line, "empty subject_id".into()));
            }
            let k = int(1)?;
            if k < 1 {
                return Err(parse_err(line, format!("course index {k} must be >= 1")));
            }
            let treatment = match int(2)? {
                0 => 0u8,
                1 => 1u8,
                other => return Err(parse_err(line, format!("treatment {other} not in {{0,1}}"))),
            };
            let waiting_time = num(3)?;
            let delta = int(4)?;
            let transition = Transition::from_code(delta)
                .ok_or_else(|| parse_err(line, format!("delta {delta} not in {{-1,0,1}}")))?;
            let covariates = (FIXED_COLUMNS.len()..expected.len())
                .map(num)
                .collect::<Result<Vec<_>>>()?;
            rows.push(CourseRecord {
                subject_id,
                k: k as usize,
                covariates,
                treatment,
                waiting_time,
                transition,
            });
        }
        Cohort::from_records(schema.clone(), rows)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let header: Vec<&str> = FIXED_COLUMNS
            .iter()
            .copied()
            .chain(self.schema.covariates.iter().map(|c| c.name.as_str()))
            .collect();
        writer.write_record(&header)?;
        for c in self.subjects.iter().flat_map(|s| &s.courses) {
            let mut fields = vec![
                c.subject_id.clone(),
                c.k.to_string(),
                c.treatment.to_string(),
                format!("{}", c.waiting_time),
                c.transition.code().to_string(),
            ];
            fields.extend(c.covariates.iter().map(|v| format!("{v}")));
            writer.write_record(&fields)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Subjects that initiated course `k`.
    pub fn reaching(&self, k: usize) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(move |s| s.kappa() >= k)
    }

    /// Largest observed total time among subjects whose death was observed.
    pub fn max_observed_death(&self) -> Option<f64> {
        self.subjects
            .iter()
            .filter(|s| s.died())
            .map(SubjectRecord::total_time)
            .reduce(f64::max)
    }
}

fn validate_subject(schema: &Schema, s: &SubjectRecord) -> Result<()> {
    let fail = |rule: String| Err(Error::validation(&s.id, rule));
    let kappa = s.kappa();
    for (i, c) in s.courses.iter().enumerate() {
        if c.k != i + 1 {
            return fail(format!(
                "course indices must be contiguous from 1 (found {} at position {})",
                c.k,
                i + 1
            ));
        }
        if c.k > schema.courses {
            return fail(format!(
                "course {} exceeds the declared maximum K = {}",
                c.k, schema.courses
            ));
        }
        if !(c.waiting_time.is_finite() && c.waiting_time > 0.0) {
            return fail(format!(
                "nonpositive waiting time {} at course {}",
                c.waiting_time, c.k
            ));
        }
        if c.covariates.len() != schema.covariates.len() {
            return fail(format!(
                "course {} has {} covariates, schema declares {}",
                c.k,
                c.covariates.len(),
                schema.covariates.len()
            ));
        }
        let last = i + 1 == kappa;
        match (last, c.transition) {
            (true, Transition::NextCourse) => {
                return fail(format!(
                    "course {} is the last observed course but delta = -1 implies a next course",
                    c.k
                ))
            }
            (false, Transition::Death | Transition::Censored) => {
                return fail(format!(
                    "course {} has delta = {} but later courses are recorded",
                    c.k,
                    c.transition.code()
                ))
            }
            _ => {}
        }
        for (spec, &v) in schema.covariates.iter().zip(&c.covariates) {
            let ok = match spec.kind {
                CovariateKind::Continuous => v.is_finite(),
                CovariateKind::Binary => v == 0.0 || v == 1.0,
                CovariateKind::Proportion => (0.0..=1.0).contains(&v),
            };
            if !ok {
                return fail(format!(
                    "covariate `{}` = {v} at course {} is outside its {} domain",
                    spec.name, c.k, spec.kind
                ));
            }
        }
        if i > 0 {
            for j in schema.baseline_indices() {
                if c.covariates[j] != s.courses[0].covariates[j] {
                    return fail(format!(
                        "baseline covariate `{}` changes at course {}",
                        schema.covariates[j].name, c.k
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::{CovariateKind, CovariateSpec};

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
                    name: "male".into(),
                    kind: CovariateKind::Binary,
                    varying: false,
                },
            ],
        )
        .unwrap()
    }

    fn ingest_str(text: &str) -> Result<Cohort> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, text).unwrap();
        Cohort::ingest(&path, &schema())
    }

    const HEADER: &str = "subject_id,k,a,w,delta,ef,male\n";

    #[test]
    fn ingests_one_subject() {
        let c = ingest_str(&format!(
            "{HEADER}s1,1,1,30,-1,0.6,1\ns1,2,0,25.5,-1,0.55,1\ns1,3,0,40,1,0.5,1\n"
        ))
        .unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.subjects()[0];
        assert_eq!(s.kappa(), 3);
        assert!(s.died());
        assert!((s.total_time() - 95.5).abs() < 1e-12);
    }

    #[test]
    fn trailing_next_course_indicator_is_invalid() {
        let err =
            ingest_str(&format!("{HEADER}s1,1,1,30,-1,0.6,1\ns1,2,1,30,-1,0.6,1\n")).unwrap_err();
        assert!(matches!(err, Error::Validation { ref subject, .. } if subject == "s1"));
        assert!(err.to_string().contains("delta = -1"));
    }

    #[test]
    fn zero_wait_is_rejected() {
        let err = ingest_str(&format!("{HEADER}s1,1,1,0,1,0.6,1\n")).unwrap_err();
        assert!(err.to_string().contains("nonpositive waiting time"));
    }

    #[test]
    fn duplicate_course_is_rejected() {
        let err =
            ingest_str(&format!("{HEADER}s1,1,1,3,-1,0.6,1\ns1,1,1,3,0,0.6,1\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_row_names_line() {
        let err =
            ingest_str(&format!("{HEADER}s1,1,1,3,0,0.6,1\ns2,1,1,abc,0,0.6,1\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn gaps_and_bad_domains_are_rejected() {
        assert!(ingest_str(&format!("{HEADER}s1,1,1,3,-1,0.6,1\ns1,3,1,3,0,0.6,1\n")).is_err());
        assert!(ingest_str(&format!("{HEADER}s1,1,2,3,0,0.6,1\n")).is_err());
        assert!(ingest_str(&format!("{HEADER}s1,1,1,3,0,1.6,1\n")).is_err());
        assert!(ingest_str(&format!("{HEADER}s1,1,1,3,-1,0.6,1\ns1,2,1,3,0,0.6,0\n")).is_err());
        assert!(ingest_str("subject_id,k,a,w,delta,male,ef\n").is_err());
    }

    #[test]
    fn csv_round_trip_is_identical() {
        let c = ingest_str(&format!(
            "{HEADER}s1,1,1,30.125,-1,0.6,1\ns1,2,0,0.1,0,0.55,1\ns2,1,0,7,1,0.7,0\n"
        ))
        .unwrap();
        let text = c.to_csv_string().unwrap();
        let again = ingest_str(&text).unwrap();
        assert_eq!(c, again);
    }
}
