use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confounders::ConfounderModel;
use crate::data_model::Encoder;
use crate::hazards::HazardModel;
use crate::{Error, Result};

/// Parameters of one course within a joint posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CourseDraw {
    pub course: usize,
    pub death: HazardModel,
    /// Next-course hazard; absent at the last course.
    pub next: Option<HazardModel>,
    /// Time-varying confounder models; absent at course 1, where the
    /// Bayesian bootstrap is used instead.
    pub confounders: Option<ConfounderModel>,
}

/// One joint posterior draw `ω^(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDraw {
    pub m: usize,
    pub courses: Vec<CourseDraw>,
    /// Dirichlet weights over [`ModelContext::baseline_rows`].
    pub bootstrap_weights: Vec<f64>,
}

impl ParameterDraw {
    pub fn course(&self, k: usize) -> &CourseDraw {
        &self.courses[k - 1]
    }

    pub fn validate(&self, courses: usize) -> Result<()> {
        if self.courses.len() != courses {
            return Err(Error::Format(format!(
                "draw {} has {} courses, expected {courses}",
                self.m,
                self.courses.len()
            )));
        }
        for (i, c) in self.courses.iter().enumerate() {
            let k = i + 1;
            let ok = c.course == k
                && (c.next.is_none() == (k == courses))
                && (c.confounders.is_none() == (k == 1));
            if !ok {
                return Err(Error::Format(format!(
                    "draw {} course {k} has the wrong blocks",
                    self.m
                )));
            }
        }
        Ok(())
    }
}

/// Fit-time information the g-computation needs besides the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelContext {
    pub encoder: Encoder,
    /// Observed course-1 covariate rows (raw scale, schema order).
    pub baseline_rows: Vec<Vec<f64>>,
    /// Largest observed total time to death, if any death was observed.
    pub max_observed_death: Option<f64>,
    /// Largest observed total follow-up time.
    pub max_observed_time: f64,
}

impl ModelContext {
    /// Sidecar path stored next to a draws file.
    pub fn sidecar(draws: &Path) -> std::path::PathBuf {
        let mut name = draws.as_os_str().to_owned();
        name.push(".model.json");
        name.into()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Streams draws as newline-delimited JSON, one draw per line.
pub struct DrawWriter<W: Write> {
    out: W,
}

impl<W: Write> DrawWriter<W> {
    pub fn new(out: W) -> Self {
        DrawWriter { out }
    }

    pub fn write(&mut self, draw: &ParameterDraw) -> Result<()> {
        serde_json::to_writer(&mut self.out, draw)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_draws<R: Read>(input: R) -> Result<Vec<ParameterDraw>> {
    let mut draws = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let draw = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: "draws".into(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        draws.push(draw);
    }
    Ok(draws)
}
