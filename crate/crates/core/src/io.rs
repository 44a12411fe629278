//! File formats: scenario and schedule documents (JSON), run traces (CSV)
//! and run summaries (JSON).
//!
//! Scenario:
//!
//! ```json
//! {
//!   "anchors": [{"id": 1, "x": 1.0, "y": 1.73}, ...],
//!   "sensors": [{"id": 4, "x": 0.55, "y": 0.2}, ...],
//!   "triangulation": {"4": [2, 5, 7], ...},
//!   "initial": {"4": {"x": 1.0, "y": 0.5}},
//!   "gamma": 0.5
//! }
//! ```
//!
//! `triangulation` and `initial` are optional; sensors without a set get one
//! by radius search.
//!
//! Schedule, one of:
//!
//! ```json
//! {"type": "explicit", "horizon": 100, "periods": [{"s": 0, "phi": 1, "links": [[2, 4]]}]}
//! {"type": "periodic", "start": 0, "stride": 3, "dwell": 1, "instant_links": [[[2, 4]], [[4, 7]]]}
//! {"type": "random", "seed": 42, "stride": 3, "dwell": 1, "drop_probability": 0.5}
//! ```
//!
//! Links are `[from, to]`. A period gives either `links` (every instant) or
//! `instant_links` (one list per instant `s .. s + phi`). `horizon` is
//! optional everywhere; the caller supplies a default.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{
    random_schedule_with, AttackPeriod, AttackSchedule, Link, PeriodLinks, ScheduleError,
    ScheduleGenerator, ScheduleOptions,
};
use crate::geometry::Point2;
use crate::localization::RunTrace;
use crate::network::{NetworkError, NetworkScenario, Node, NodeId, Triangulation, ValidationOptions};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{context}: {source}")]
    Json { context: String, source: serde_json::Error },
    #[error("{context}: {source}")]
    Csv { context: String, source: csv::Error },
    #[error("{context}: {source}")]
    Network { context: String, source: NetworkError },
    #[error("{context}: {source}")]
    Schedule { context: String, source: ScheduleError },
    #[error("{context}: field `{field}`: {message}")]
    Field { context: String, field: &'static str, message: String },
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_owned(), source })
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::Write { path: path.to_owned(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub anchors: Vec<Node>,
    pub sensors: Vec<Node>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub triangulation: BTreeMap<NodeId, [NodeId; 3]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<NodeId, Point2>,
    pub gamma: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str, context: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|source| IoError::Json { context: context.into(), source })
    }

    /// Validates and fills in any missing triangulation sets.
    pub fn into_scenario(
        self,
        options: ValidationOptions,
        context: &str,
    ) -> Result<NetworkScenario, IoError> {
        let wrap = |source| IoError::Network { context: context.into(), source };
        let mut s = NetworkScenario::new(self.anchors, self.sensors, self.triangulation, self.gamma, options)
            .map_err(wrap)?;
        s.set_initial_estimates(self.initial).map_err(wrap)?;
        s.discover_triangulation().map_err(wrap)?;
        Ok(s)
    }

    pub fn from_scenario(s: &NetworkScenario) -> Self {
        Self {
            anchors: s.anchors().to_vec(),
            sensors: s.sensors().to_vec(),
            triangulation: s.triangulation().clone(),
            initial: s.initial_estimates().clone(),
            gamma: s.gamma(),
        }
    }
}

pub fn parse_scenario(
    text: &str,
    options: ValidationOptions,
    context: &str,
) -> Result<NetworkScenario, IoError> {
    ScenarioFile::parse(text, context)?.into_scenario(options, context)
}

pub fn load_scenario(path: &Path, options: ValidationOptions) -> Result<NetworkScenario, IoError> {
    parse_scenario(&read_file(path)?, options, &path.display().to_string())
}

type LinkPair = [NodeId; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodFile {
    pub s: usize,
    pub phi: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<LinkPair>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instant_links: Option<Vec<Vec<LinkPair>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScheduleFile {
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
        periods: Vec<PeriodFile>,
    },
    Periodic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
        #[serde(default)]
        start: usize,
        stride: usize,
        dwell: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        links: Option<Vec<LinkPair>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instant_links: Option<Vec<Vec<LinkPair>>>,
    },
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
        seed: u64,
        stride: usize,
        dwell: usize,
        drop_probability: f64,
    },
}

fn link_set(pairs: &[LinkPair]) -> BTreeSet<Link> {
    pairs.iter().map(|&[from, to]| (from, to)).collect()
}

fn link_pairs(set: &BTreeSet<Link>) -> Vec<LinkPair> {
    set.iter().map(|&(from, to)| [from, to]).collect()
}

fn period_links(
    links: Option<Vec<LinkPair>>,
    instant_links: Option<Vec<Vec<LinkPair>>>,
    context: &str,
) -> Result<PeriodLinks, IoError> {
    match (links, instant_links) {
        (Some(_), Some(_)) => Err(IoError::Field {
            context: context.into(),
            field: "instant_links",
            message: "give either `links` or `instant_links`, not both".into(),
        }),
        (Some(l), None) => Ok(PeriodLinks::Uniform(link_set(&l))),
        (None, Some(v)) => Ok(PeriodLinks::PerInstant(v.iter().map(|l| link_set(l)).collect())),
        (None, None) => Ok(PeriodLinks::Uniform(BTreeSet::new())),
    }
}

impl ScheduleFile {
    pub fn parse(text: &str, context: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|source| IoError::Json { context: context.into(), source })
    }

    /// Builds the schedule; `random` types draw their arcs from
    /// `triangulation`. Links are checked against the network.
    pub fn resolve(
        self,
        triangulation: &Triangulation,
        default_horizon: usize,
        options: ScheduleOptions,
        context: &str,
    ) -> Result<AttackSchedule, IoError> {
        let wrap = |source| IoError::Schedule { context: context.into(), source };
        let schedule = match self {
            ScheduleFile::Explicit { horizon, periods } => {
                let periods = periods
                    .into_iter()
                    .map(|p| {
                        Ok(AttackPeriod {
                            start: p.s,
                            dwell: p.phi,
                            links: period_links(p.links, p.instant_links, context)?,
                        })
                    })
                    .collect::<Result<Vec<_>, IoError>>()?;
                AttackSchedule::explicit(periods, horizon.unwrap_or(default_horizon), options)
            }
            ScheduleFile::Periodic { horizon, start, stride, dwell, links, instant_links } => {
                let links = period_links(links, instant_links, context)?;
                if stride < dwell + if options.allow_invalid { 1 } else { 2 } {
                    return Err(IoError::Field {
                        context: context.into(),
                        field: "stride",
                        message: format!(
                            "stride {stride} leaves no attack-free instant after a dwell of {dwell}"
                        ),
                    });
                }
                AttackSchedule::periodic(start, stride, dwell, links, horizon.unwrap_or(default_horizon), options)
            }
            ScheduleFile::Random { horizon, seed, stride, dwell, drop_probability } => random_schedule_with(
                seed,
                triangulation,
                horizon.unwrap_or(default_horizon),
                stride,
                dwell,
                drop_probability,
                options,
            ),
        }
        .map_err(wrap)?;
        schedule.validate_links(triangulation).map_err(wrap)?;
        Ok(schedule)
    }

    /// Explicit form of a resolved schedule, for exact replay.
    pub fn explicit_from(schedule: &AttackSchedule) -> Self {
        let periods = schedule
            .periods()
            .iter()
            .map(|p| {
                let (links, instant_links) = match &p.links {
                    PeriodLinks::Uniform(l) => (Some(link_pairs(l)), None),
                    PeriodLinks::PerInstant(v) => (None, Some(v.iter().map(link_pairs).collect())),
                };
                PeriodFile { s: p.start, phi: p.dwell, links, instant_links }
            })
            .collect();
        ScheduleFile::Explicit { horizon: Some(schedule.horizon()), periods }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

pub fn load_schedule(
    path: &Path,
    triangulation: &Triangulation,
    default_horizon: usize,
    options: ScheduleOptions,
) -> Result<AttackSchedule, IoError> {
    let context = path.display().to_string();
    ScheduleFile::parse(&read_file(path)?, &context)?.resolve(triangulation, default_horizon, options, &context)
}

/// Short description of how a schedule was generated.
pub fn describe_generator(schedule: &AttackSchedule) -> String {
    match schedule.generator() {
        ScheduleGenerator::Explicit => format!("explicit({} periods)", schedule.periods().len()),
        ScheduleGenerator::Periodic { start, stride, dwell } => {
            format!("periodic(start={start}, stride={stride}, dwell={dwell})")
        }
        ScheduleGenerator::Random { seed, stride, dwell, drop_probability } => {
            format!("random(seed={seed}, stride={stride}, dwell={dwell}, p={drop_probability})")
        }
    }
}

/// One CSV line of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub sensor_id: u32,
    pub x: f64,
    pub y: f64,
    pub err_i: f64,
    pub masked: u8,
}

pub const TRACE_HEADER: [&str; 6] = ["t", "sensor_id", "x", "y", "err_i", "masked"];

/// 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_rows(trace: &RunTrace) -> Vec<TraceRow> {
    let mut rows = Vec::new();
    for (t, state) in trace.states.iter().enumerate() {
        for (k, (id, p)) in state.iter().enumerate() {
            rows.push(TraceRow {
                t: state.t,
                sensor_id: id.0,
                x: p.x,
                y: p.y,
                err_i: trace.sensor_error(t, k),
                masked: trace.masks[t].is_masked(id) as u8,
            });
        }
    }
    rows
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<(), IoError> {
    let wrap = |source| IoError::Csv { context: "trace".into(), source };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER).map_err(wrap)?;
    for r in trace_rows(trace) {
        w.write_record([
            r.t.to_string(),
            r.sensor_id.to_string(),
            format_f64(r.x),
            format_f64(r.y),
            format_f64(r.err_i),
            r.masked.to_string(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::Write { path: PathBuf::from("trace"), source })
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, IoError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .collect::<Result<Vec<TraceRow>, _>>()
        .map_err(|source| IoError::Csv { context: "trace".into(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schedule: String,
    pub algorithm: String,
    pub gamma: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    pub final_error: f64,
}

impl RunSummary {
    pub fn new(schedule: impl Into<String>, trace: &RunTrace, gamma: f64, max_iters: usize, tol: f64) -> Self {
        Self {
            schedule: schedule.into(),
            algorithm: trace.algorithm.name().into(),
            gamma,
            max_iters,
            tol,
            iterations: trace.states.len() - 1,
            converged_at: trace.converged_at,
            final_error: trace.final_error(),
        }
    }
}
