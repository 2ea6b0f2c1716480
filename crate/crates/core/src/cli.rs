//! Command-line front end: `fit`, `gcompute`, `optimize`, `simulate` and
//! `calibrate`.
//!
//! Every flag can also be set through an environment variable named
//! `DTRSURV_` followed by the flag in upper snake case (`--grid-t` is
//! `DTRSURV_GRID_T`). Outputs are written to a temporary file and renamed
//! into place. Each run also writes `<out>.manifest.json` holding the
//! resolved arguments, seed, crate version and SHA-256 digests of inputs and
//! outputs. The worker count is left out of the manifest because it never
//! changes the results.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data_model::{Cohort, Schema};
use crate::gcomp::{
    contrast, gcompute, optimize_rule, posterior_summary, ContrastKind, GCompConfig, GCompResult,
    Objective,
};
use crate::kv::{parse_list, KvFile};
use crate::mcmc::{
    read_draws, run_sampler, DrawWriter, ModelConfig, ModelContext, ParameterDraw, SamplerConfig,
    FIT_KEYS,
};
use crate::rules::{rule_grid, threshold_rule, DecisionRule, FeasibleSet, RuleKind};
use crate::simgen::{
    calibrate, generate_cohort, CalibrationConfig, CohortSummary, ModelVariant, SimDesign,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "dtrsurv",
    version,
    about = "Bayesian dynamic treatment rules for multi-course survival data"
)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "DTRSURV_THREADS")]
    pub threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Fit the transition and confounder models and write posterior draws.
    Fit(FitArgs),
    /// Posterior potential survival curves under a rule.
    Gcompute(GcomputeArgs),
    /// Posterior over the optimal threshold rule on a grid.
    Optimize(OptimizeArgs),
    /// Generate a synthetic cohort.
    Simulate(SimulateArgs),
    /// Bias, coverage and width of posterior estimates over replicates.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, env = "DTRSURV_COHORT")]
    pub cohort: PathBuf,
    #[arg(long, env = "DTRSURV_SCHEMA")]
    pub schema: PathBuf,
    /// Sampler and model settings as `key = value` lines.
    #[arg(long, env = "DTRSURV_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "DTRSURV_OUT")]
    pub out: PathBuf,
    /// Overrides the config file's seed (default 1).
    #[arg(long, env = "DTRSURV_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GcomputeArgs {
    #[arg(long, env = "DTRSURV_DRAWS")]
    pub draws: PathBuf,
    /// `threshold(t1,t2[,cov])`, `fixed(a1,...)` or `below(cov,cut)`.
    #[arg(long, env = "DTRSURV_RULE")]
    pub rule: String,
    /// Time grid: `a,b,c`, `start:stop:step` or `a,b,...,c`.
    #[arg(long, env = "DTRSURV_GRID_T", allow_hyphen_values = true)]
    pub grid_t: String,
    /// Trajectories per posterior draw.
    #[arg(long = "B", env = "DTRSURV_B", default_value_t = 10_000)]
    pub trajectories: usize,
    #[arg(long, env = "DTRSURV_OUT")]
    pub out: PathBuf,
    /// `default` (no treatment at course 3), `none`, or `k:a|a;...`.
    #[arg(long, env = "DTRSURV_FEASIBLE", default_value = "default")]
    pub feasible: String,
    /// Interval level is `1 - alpha`.
    #[arg(long, env = "DTRSURV_ALPHA", default_value_t = 0.05)]
    pub alpha: f64,
    /// Follow-up horizon; defaults to the last grid point.
    #[arg(long, env = "DTRSURV_HORIZON")]
    pub horizon: Option<f64>,
    /// Adverse-event threshold for the utility column.
    #[arg(long, env = "DTRSURV_S")]
    pub s: Option<f64>,
    /// Covariate monitored against `s`; defaults to the rule's covariate.
    #[arg(long, env = "DTRSURV_PHI_COVARIATE")]
    pub phi_covariate: Option<String>,
    /// Reference time of the utility; defaults to the last grid point.
    #[arg(long, env = "DTRSURV_T_REF")]
    pub t_ref: Option<f64>,
    /// Second rule contrasted with `--rule`.
    #[arg(long, env = "DTRSURV_VERSUS")]
    pub versus: Option<String>,
    #[arg(long, env = "DTRSURV_CONTRAST", default_value = "difference")]
    pub contrast: String,
    #[arg(long, env = "DTRSURV_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long, env = "DTRSURV_DRAWS")]
    pub draws: PathBuf,
    /// `survival` or `utility`.
    #[arg(long, env = "DTRSURV_OBJECTIVE", default_value = "survival")]
    pub objective: String,
    #[arg(long, env = "DTRSURV_T_REF")]
    pub t_ref: f64,
    #[arg(long, env = "DTRSURV_S")]
    pub s: Option<f64>,
    /// Covariate the thresholds apply to; defaults to the first varying
    /// proportion.
    #[arg(long, env = "DTRSURV_COVARIATE")]
    pub covariate: Option<String>,
    #[arg(long, env = "DTRSURV_TAU1", allow_hyphen_values = true)]
    pub tau1: String,
    #[arg(long, env = "DTRSURV_TAU2", allow_hyphen_values = true)]
    pub tau2: String,
    /// Credible-set level is `1 - alpha`.
    #[arg(long, env = "DTRSURV_ALPHA", default_value_t = 0.10)]
    pub alpha: f64,
    #[arg(long = "B", env = "DTRSURV_B", default_value_t = 10_000)]
    pub trajectories: usize,
    #[arg(long, env = "DTRSURV_FEASIBLE", default_value = "default")]
    pub feasible: String,
    #[arg(long, env = "DTRSURV_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "DTRSURV_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Design file; the shipped default design when omitted.
    #[arg(long, env = "DTRSURV_DESIGN")]
    pub design: Option<PathBuf>,
    #[arg(long, env = "DTRSURV_N")]
    pub n: Option<usize>,
    #[arg(long, env = "DTRSURV_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Cohort CSV; the matching schema is written to `<out>.schema`.
    #[arg(long, env = "DTRSURV_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long, env = "DTRSURV_DESIGN")]
    pub design: Option<PathBuf>,
    #[arg(long, env = "DTRSURV_N")]
    pub n: Option<usize>,
    #[arg(long, env = "DTRSURV_REPS", default_value_t = 100)]
    pub reps: usize,
    #[arg(long, env = "DTRSURV_T", default_value = "5,10,15,20")]
    pub t: String,
    /// Any of `gp`, `weibull`, `gp_half`.
    #[arg(long, env = "DTRSURV_MODELS", default_value = "gp,weibull")]
    pub models: String,
    /// Rule compared with the truth.
    #[arg(long, env = "DTRSURV_RULE", default_value = "below(l1,0)")]
    pub rule: String,
    #[arg(long, env = "DTRSURV_FEASIBLE", default_value = "none")]
    pub feasible: String,
    #[arg(long, env = "DTRSURV_ITERATIONS", default_value_t = 4000)]
    pub iterations: usize,
    #[arg(long, env = "DTRSURV_BURN_IN", default_value_t = 2000)]
    pub burn_in: usize,
    #[arg(long = "B", env = "DTRSURV_B", default_value_t = 2000)]
    pub trajectories: usize,
    /// Draws used for g-computation per fit.
    #[arg(long, env = "DTRSURV_MAX_DRAWS", default_value_t = 200)]
    pub max_draws: usize,
    #[arg(long, env = "DTRSURV_N_TRUTH", default_value_t = 1_000_000)]
    pub n_truth: usize,
    #[arg(long, env = "DTRSURV_LEVEL", default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, env = "DTRSURV_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "DTRSURV_SEED", default_value_t = 1)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code: 0 on success, 2 on usage errors and 1 on
/// validation or runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(command: &Command) -> Result<()> {
    let mut run = Run::default();
    let out = match command {
        Command::Fit(a) => fit(a, &mut run)?,
        Command::Gcompute(a) => gcompute_cmd(a, &mut run)?,
        Command::Optimize(a) => optimize_cmd(a, &mut run)?,
        Command::Simulate(a) => simulate(a, &mut run)?,
        Command::Calibrate(a) => calibrate_cmd(a, &mut run)?,
    };
    run.write_manifest(command, &out)
}

/// Inputs read and outputs written by one command.
#[derive(Default)]
struct Run {
    inputs: Vec<(String, String)>,
    outputs: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    args: &'a Command,
    inputs: Vec<FileDigest<'a>>,
    outputs: Vec<FileDigest<'a>>,
}

#[derive(Serialize)]
struct FileDigest<'a> {
    path: &'a str,
    sha256: &'a str,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Run {
    fn read(&mut self, path: &Path) -> Result<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| io_context(e, path))?;
        self.inputs
            .push((path.display().to_string(), sha256(&bytes)));
        Ok(bytes)
    }

    fn read_string(&mut self, path: &Path) -> Result<String> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| Error::Format(format!("{}: not UTF-8 text", path.display())))
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.outputs
            .push((path.display().to_string(), sha256(bytes)));
        Ok(())
    }

    fn write_manifest<'a>(&'a self, command: &'a Command, out: &Path) -> Result<()> {
        let digests = |v: &'a [(String, String)]| {
            v.iter()
                .map(|(p, h)| FileDigest { path: p, sha256: h })
                .collect()
        };
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION"),
            args: command,
            inputs: digests(&self.inputs),
            outputs: digests(&self.outputs),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_atomic(&suffixed(out, ".manifest.json"), text.as_bytes())
    }
}

fn io_context(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    name.into()
}

/// `<out stem>.<ext>` next to `out`, e.g. `psi.csv` to `psi.summary.csv`.
fn sibling(out: &Path, ext: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{ext}"))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("`{}` is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| io_context(e, &tmp))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_context(e, path)
    })
}

fn fit(a: &FitArgs, run: &mut Run) -> Result<PathBuf> {
    let schema = Schema::parse(&run.read_string(&a.schema)?)?;
    run.read(&a.cohort)?;
    let cohort = Cohort::ingest(&a.cohort, &schema)?;
    let kv = match &a.config {
        Some(p) => KvFile::parse(&run.read_string(p)?, &p.display().to_string())?,
        None => KvFile::default(),
    };
    kv.reject_unknown(FIT_KEYS)?;
    let mut sampler = SamplerConfig::from_kv(&kv)?;
    if let Some(seed) = a.seed {
        sampler.seed = seed;
    }
    let model = ModelConfig::from_kv(&kv)?;
    let mut writer = DrawWriter::new(Vec::new());
    let (context, rates) = run_sampler(&cohort, &model, &sampler, |d| writer.write(&d))?;
    for r in &rates {
        info!("{}: acceptance {:.3}", r.block, r.rate);
    }
    run.write(&a.out, &writer.finish()?)?;
    let mut sidecar = serde_json::to_string(&context)?;
    sidecar.push('\n');
    run.write(&ModelContext::sidecar(&a.out), sidecar.as_bytes())?;
    Ok(a.out.clone())
}

fn load_draws(path: &Path, run: &mut Run) -> Result<(ModelContext, Vec<ParameterDraw>)> {
    let bytes = run.read(path)?;
    let draws = read_draws(bytes.as_slice())?;
    let side = ModelContext::sidecar(path);
    let context: ModelContext = serde_json::from_str(&run.read_string(&side)?)?;
    let courses = context.encoder.courses();
    for d in &draws {
        d.validate(courses)?;
    }
    if draws.is_empty() {
        return Err(Error::config(format!("{}: no draws", path.display())));
    }
    Ok((context, draws))
}

fn covariate_index(schema: &Schema, name: &str) -> Result<usize> {
    schema
        .index_of(name)
        .ok_or_else(|| Error::config(format!("unknown covariate `{name}`")))
}

fn rule_covariate(rule: &DecisionRule) -> Option<usize> {
    match &rule.kind {
        RuleKind::Threshold { covariate, .. } | RuleKind::Below { covariate, .. } => {
            Some(*covariate)
        }
        RuleKind::Fixed { .. } => None,
    }
}

fn grid(spec: &str) -> Result<Vec<f64>> {
    parse_list(spec).map_err(|msg| Error::config(format!("grid `{spec}`: {msg}")))
}

fn gcompute_cmd(a: &GcomputeArgs, run: &mut Run) -> Result<PathBuf> {
    let (context, draws) = load_draws(&a.draws, run)?;
    let schema = context.encoder.schema();
    let rule = DecisionRule::parse(&a.rule, schema)?;
    let feasible = FeasibleSet::parse(&a.feasible)?;
    let mut cfg = GCompConfig::new(grid(&a.grid_t)?, a.trajectories, a.seed);
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    if let Some(t) = a.t_ref {
        cfg.t_ref = t;
    }
    cfg.s = a.s;
    cfg.phi_covariate = match &a.phi_covariate {
        Some(name) => Some(covariate_index(schema, name)?),
        None => a.s.and(rule_covariate(&rule)),
    };
    let result = gcompute(&context, &draws, &rule, &feasible, &cfg)?;
    run.write(&a.out, psi_csv(&result).as_bytes())?;
    run.write(
        &sibling(&a.out, "summary.csv"),
        summary_csv(&result, a.alpha)?.as_bytes(),
    )?;
    if let Some(versus) = &a.versus {
        let other = DecisionRule::parse(versus, schema)?;
        let kind: ContrastKind = a.contrast.parse()?;
        let second = gcompute(&context, &draws, &other, &feasible, &cfg)?;
        let c = contrast(&result, &second, kind, a.alpha)?;
        let mut s = String::from("t,mean,lower,upper,undefined,extrapolated\n");
        for (j, t) in result.grid.iter().enumerate() {
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{}",
                c.summary.mean[j],
                c.summary.lower[j],
                c.summary.upper[j],
                c.undefined[j],
                result.extrapolated[j]
            );
        }
        run.write(&sibling(&a.out, "contrast.csv"), s.as_bytes())?;
    }
    Ok(a.out.clone())
}

fn psi_csv(r: &GCompResult) -> String {
    let mut s = String::from("draw,t,psi,phi,utility\n");
    for (i, curve) in r.psi.iter().enumerate() {
        for (t, psi) in r.grid.iter().zip(curve) {
            let _ = writeln!(s, "{},{t},{psi},{},{}", r.draws[i], r.phi[i], r.utility[i]);
        }
    }
    s
}

fn summary_csv(r: &GCompResult, alpha: f64) -> Result<String> {
    let mut s = String::from("t,mean,median,lower,upper,extrapolated\n");
    let rows = if r.psi.len() >= 2 {
        posterior_summary(&r.psi, alpha)?
    } else {
        // A single draw has no spread; its curve is every summary.
        let c = r.psi[0].clone();
        crate::gcomp::PosteriorSummary {
            mean: c.clone(),
            median: c.clone(),
            lower: c.clone(),
            upper: c,
        }
    };
    for (j, t) in r.grid.iter().enumerate() {
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{}",
            rows.mean[j], rows.median[j], rows.lower[j], rows.upper[j], r.extrapolated[j]
        );
    }
    Ok(s)
}

fn optimize_cmd(a: &OptimizeArgs, run: &mut Run) -> Result<PathBuf> {
    let (context, draws) = load_draws(&a.draws, run)?;
    let schema = context.encoder.schema();
    let objective: Objective = a.objective.parse()?;
    let covariate = match &a.covariate {
        Some(name) => covariate_index(schema, name)?,
        None => {
            let probe = DecisionRule::parse("threshold(0,0.5)", schema)?;
            rule_covariate(&probe).expect("threshold rules carry a covariate")
        }
    };
    let tau1 = grid(&a.tau1)?;
    let tau2 = grid(&a.tau2)?;
    let cells = rule_grid(&tau1, &tau2)?;
    let rules: Vec<DecisionRule> = cells
        .iter()
        .map(|p| threshold_rule(*p, covariate))
        .collect();
    let feasible = FeasibleSet::parse(&a.feasible)?;
    let mut cfg = GCompConfig::new(vec![a.t_ref], a.trajectories, a.seed);
    cfg.s = a.s;
    cfg.phi_covariate = a.s.map(|_| covariate);
    let post = optimize_rule(
        &context,
        &draws,
        &rules,
        &feasible,
        objective,
        &cfg,
        1.0 - a.alpha,
    )?;
    if post.tied_draws > 0 {
        info!("{} draws had tied maxima", post.tied_draws);
    }
    let mut s = String::from("tau1,tau2,mass,in_credible_set,mode\n");
    for (i, p) in cells.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            p.tau1,
            p.tau2,
            post.pmf[i],
            post.credible[i],
            i == post.mode
        );
    }
    run.write(&a.out, s.as_bytes())?;
    Ok(a.out.clone())
}

fn load_design(path: &Option<PathBuf>, n: Option<usize>, run: &mut Run) -> Result<SimDesign> {
    let mut design = match path {
        Some(p) => SimDesign::from_kv(&KvFile::parse(
            &run.read_string(p)?,
            &p.display().to_string(),
        )?)?,
        None => SimDesign::default(),
    };
    if let Some(n) = n {
        design.n = n;
    }
    design.validate()?;
    Ok(design)
}

fn simulate(a: &SimulateArgs, run: &mut Run) -> Result<PathBuf> {
    let design = load_design(&a.design, a.n, run)?;
    let cohort = generate_cohort(&design, a.seed)?;
    let s = CohortSummary::of(&cohort, &[]);
    info!(
        "{} subjects: {:.1}% completed, {:.1}% died",
        s.n,
        100.0 * s.completed,
        100.0 * s.died
    );
    run.write(&a.out, cohort.to_csv_string()?.as_bytes())?;
    run.write(
        &suffixed(&a.out, ".schema"),
        design.schema().to_kv_string().as_bytes(),
    )?;
    Ok(a.out.clone())
}

fn calibrate_cmd(a: &CalibrateArgs, run: &mut Run) -> Result<PathBuf> {
    let design = load_design(&a.design, a.n, run)?;
    let schema = design.schema();
    let standard = ModelVariant::standard(design.n);
    let models = a
        .models
        .split(',')
        .map(str::trim)
        .map(|label| {
            standard
                .iter()
                .find(|v| v.label == label)
                .cloned()
                .ok_or_else(|| {
                    Error::config(format!("unknown model `{label}` (gp, weibull, gp_half)"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = CalibrationConfig {
        rule: DecisionRule::parse(&a.rule, &schema)?,
        feasible: FeasibleSet::parse(&a.feasible)?,
        design,
        replicates: a.reps,
        sampler: SamplerConfig {
            iterations: a.iterations,
            burn_in: a.burn_in,
            ..SamplerConfig::default()
        },
        models,
        points: grid(&a.t)?,
        trajectories: a.trajectories,
        max_draws: a.max_draws,
        n_truth: a.n_truth,
        level: a.level,
        seed: a.seed,
    };
    let report = calibrate(&cfg)?;
    let mut bytes = Vec::new();
    report.write_csv(&mut bytes)?;
    run.write(&a.out, &bytes)?;
    Ok(a.out.clone())
}
