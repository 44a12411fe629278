//! Batch front-end: loads scenario and schedule files, runs either engine,
//! checks the convergence conditions and writes traces and reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use asdiloc::analysis::{verify, VerifyOptions};
use asdiloc::attack::{random_schedule_with, AttackSchedule, ScheduleOptions};
use asdiloc::io::{self, describe_generator, load_schedule, RunSummary, ScheduleFile};
use asdiloc::localization::{run, Algorithm, Problem, RunConfig, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use asdiloc::network::{anchor_to_sensor_distance_bound, NetworkScenario, ValidationOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "asdiloc", version, about = "Distributed localization under link-denial attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the selected engines and write one trace per (algorithm, schedule).
    Run(RunArgs),
    /// Check reachability, window norms, product decay and the gamma limit.
    Verify(VerifyArgs),
    /// Run both engines on identical inputs and print a side-by-side summary.
    Compare(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmChoice {
    Diloc,
    Asdiloc,
    Both,
}

impl AlgorithmChoice {
    fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmChoice::Diloc => vec![Algorithm::Diloc],
            AlgorithmChoice::Asdiloc => vec![Algorithm::AsDiloc],
            AlgorithmChoice::Both => vec![Algorithm::Diloc, Algorithm::AsDiloc],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Schedule JSON file; repeatable. Without any, the run is attack-free.
    #[arg(long)]
    pub schedule: Vec<PathBuf>,
    /// Number of seeded random schedules to add (seeds `seed .. seed + n`).
    #[arg(long, default_value_t = 0)]
    pub random_count: usize,
    #[arg(long, default_value_t = 3)]
    pub random_stride: usize,
    #[arg(long, default_value_t = 1)]
    pub random_dwell: usize,
    #[arg(long, default_value_t = 0.5)]
    pub drop_probability: f64,
    /// Overrides the scenario's gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Accept schedules without an attack-free instant between periods.
    #[arg(long)]
    pub allow_invalid_schedule: bool,
    /// Check every step against the matrix form of the update.
    #[arg(long)]
    pub dual_path_check: bool,
    /// Write each resolved schedule in explicit form next to the outputs.
    #[arg(long)]
    pub dump_schedules: bool,
    /// Keep iterating to `max_iters` after convergence.
    #[arg(long)]
    pub full_trace: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = AlgorithmChoice::Both)]
    pub algorithm: AlgorithmChoice,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Horizon for product decay and the gamma limit; defaults to `max_iters`.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Window length in periods; defaults to the anchor-to-sensor hop bound.
    #[arg(long)]
    pub window: Option<usize>,
}

/// Failure of a command, sorted by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Check(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => write!(f, "input error: {}", chain_message(e)),
            CliError::Check(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by their
/// parent.
fn chain_message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

struct LabeledSchedule {
    label: String,
    schedule: AttackSchedule,
}

struct Experiment {
    scenario: NetworkScenario,
    problem: Problem,
    gamma: f64,
    schedules: Vec<LabeledSchedule>,
}

fn unique_label(taken: &mut BTreeSet<String>, base: String) -> String {
    let mut label = base.clone();
    let mut n = 2;
    while !taken.insert(label.clone()) {
        label = format!("{base}-{n}");
        n += 1;
    }
    label
}

fn load(common: &CommonArgs, horizon: usize) -> anyhow::Result<Experiment> {
    let validation = ValidationOptions { allow_unit_gamma: true };
    let mut scenario = io::load_scenario(&common.scenario, validation)?;
    if let Some(g) = common.gamma {
        scenario.set_gamma(g, validation).map_err(|e| anyhow!("--gamma: {e}"))?;
    }
    let gamma = scenario.gamma();
    if common.tol.is_nan() || common.tol <= 0.0 {
        bail!("--tol must be positive, got {}", common.tol);
    }
    let problem = Problem::from_scenario(&scenario)
        .with_context(|| format!("{}: system matrices", common.scenario.display()))?;
    let opts = ScheduleOptions { allow_invalid: common.allow_invalid_schedule };
    let tri = scenario.triangulation().clone();
    let mut taken = BTreeSet::new();
    let mut schedules = Vec::new();
    if common.schedule.is_empty() && common.random_count == 0 {
        schedules.push(LabeledSchedule {
            label: unique_label(&mut taken, "none".into()),
            schedule: AttackSchedule::empty(horizon),
        });
    }
    for path in &common.schedule {
        let schedule = load_schedule(path, &tri, horizon, opts)?;
        if schedule.horizon() < horizon {
            bail!(
                "{}: field `horizon`: {} is shorter than the {} instants required",
                path.display(),
                schedule.horizon(),
                horizon
            );
        }
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "schedule".into());
        schedules.push(LabeledSchedule { label: unique_label(&mut taken, stem), schedule });
    }
    for k in 0..common.random_count {
        let seed = common.seed.wrapping_add(k as u64);
        let schedule = random_schedule_with(
            seed,
            &tri,
            horizon,
            common.random_stride,
            common.random_dwell,
            common.drop_probability,
            opts,
        )
        .map_err(|e| anyhow!("--random-stride/--random-dwell/--drop-probability: {e}"))?;
        schedules.push(LabeledSchedule { label: unique_label(&mut taken, format!("random-{seed}")), schedule });
    }
    Ok(Experiment { scenario, problem, gamma, schedules })
}

fn prepare_out(common: &CommonArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&common.out).with_context(|| format!("--out {}", common.out.display()))
}

fn dump_schedules(common: &CommonArgs, exp: &Experiment) -> anyhow::Result<()> {
    if !common.dump_schedules {
        return Ok(());
    }
    for s in &exp.schedules {
        let path = common.out.join(format!("schedule_{}.json", s.label));
        let mut text = ScheduleFile::explicit_from(&s.schedule).to_json();
        text.push('\n');
        io::write_file(&path, text.as_bytes())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    scenario: String,
    runs: &'a [RunSummary],
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(io::write_file(path, text.as_bytes())?)
}

fn run_all(common: &CommonArgs, algorithms: &[Algorithm]) -> anyhow::Result<Vec<RunSummary>> {
    let exp = load(common, common.max_iters)?;
    for &alg in algorithms {
        alg.check_gamma(exp.gamma).map_err(|e| anyhow!("gamma: {e}"))?;
    }
    prepare_out(common)?;
    dump_schedules(common, &exp)?;
    let mut summaries = Vec::new();
    for s in &exp.schedules {
        for &alg in algorithms {
            let config = RunConfig::new(alg, exp.gamma)
                .max_iters(common.max_iters)
                .tol(common.tol)
                .stop_on_convergence(!common.full_trace)
                .dual_path_check(common.dual_path_check);
            let trace = run(&exp.problem, &s.schedule, &config).with_context(|| format!("schedule {}", s.label))?;
            let path = common.out.join(format!("trace_{}_{}.csv", s.label, alg.name()));
            let file = fs::File::create(&path).with_context(|| path.display().to_string())?;
            io::write_trace_csv(&trace, BufWriter::new(file)).with_context(|| path.display().to_string())?;
            summaries.push(RunSummary::new(s.label.clone(), &trace, exp.gamma, common.max_iters, common.tol));
        }
    }
    let summary = SummaryFile { scenario: common.scenario.display().to_string(), runs: &summaries };
    write_json(&common.out.join("summary.json"), &summary)?;
    Ok(summaries)
}

fn format_summary_table(summaries: &[RunSummary]) -> String {
    let mut out = String::from("schedule,algorithm,converged_at,final_error\n");
    for s in summaries {
        let at = s.converged_at.map_or_else(|| "none".to_string(), |t| t.to_string());
        let _ = writeln!(out, "{},{},{},{}", s.schedule, s.algorithm, at, io::format_f64(s.final_error));
    }
    out
}

pub fn cmd_run(args: &RunArgs) -> Result<String, CliError> {
    let summaries = run_all(&args.common, &args.algorithm.algorithms())?;
    Ok(format_summary_table(&summaries))
}

pub fn cmd_compare(common: &CommonArgs) -> Result<String, CliError> {
    let summaries = run_all(common, &[Algorithm::Diloc, Algorithm::AsDiloc])?;
    let table = format_summary_table(&summaries);
    io::write_file(&common.out.join("compare.csv"), table.as_bytes()).map_err(anyhow::Error::from)?;
    Ok(table)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<String, CliError> {
    let common = &args.common;
    let horizon = args.horizon.unwrap_or(common.max_iters);
    let exp = load(common, horizon)?;
    if !(exp.gamma > 0.0 && exp.gamma < 1.0) {
        return Err(anyhow!("gamma: verification needs 0 < gamma < 1, got {}", exp.gamma).into());
    }
    let p = match args.window {
        Some(0) => return Err(anyhow!("--window must be positive").into()),
        Some(p) => p,
        None => anchor_to_sensor_distance_bound(&exp.scenario).map_err(anyhow::Error::from)?,
    };
    prepare_out(common)?;
    dump_schedules(common, &exp)?;
    let options = VerifyOptions { exempt_window_norms: common.allow_invalid_schedule };
    let mut lines = String::from("schedule,generator,result\n");
    let mut first_failure = None;
    for s in &exp.schedules {
        let report = verify(&s.label, &s.schedule, &exp.problem.matrices, exp.gamma, p, horizon, common.seed, options)
            .map_err(|e| anyhow!("schedule {}: {e}", s.label))?;
        let path = common.out.join(format!("verify_{}.txt", s.label));
        io::write_file(&path, report.to_string().as_bytes()).map_err(anyhow::Error::from)?;
        let failure = report.first_failure();
        let _ = writeln!(
            lines,
            "{},{},{}",
            s.label,
            describe_generator(&s.schedule),
            if failure.is_none() { "pass" } else { "FAIL" }
        );
        if first_failure.is_none() {
            first_failure = failure;
        }
    }
    io::write_file(&common.out.join("verify_summary.csv"), lines.as_bytes()).map_err(anyhow::Error::from)?;
    match first_failure {
        None => Ok(lines),
        Some(msg) => Err(CliError::Check(msg)),
    }
}

pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

/// Parses `args`, runs the command and reports on stdout/stderr. Returns
/// the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
