//! Denial-of-service attack schedules.
//!
//! An attack is a sequence of active periods `[s_k, s_k + phi_k]` (closed,
//! in iteration instants). During a period a set of directed links `j -> i`
//! delivers nothing; the set may differ per instant of the period.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::network::{NodeId, Triangulation};

/// A directed link `(from, to)`: `to` stops receiving from `from`.
pub type Link = (NodeId, NodeId);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("instant {t} is beyond the schedule horizon {horizon}")]
    HorizonExceeded { t: usize, horizon: usize },
    #[error("invalid schedule parameters: {0}")]
    InvalidParameters(String),
    #[error(
        "period {index} starts at {start}, which leaves no attack-free instant after the \
         previous period [{prev_start}, {prev_end}]"
    )]
    NoDormantInstant { index: usize, start: usize, prev_start: usize, prev_end: usize },
    #[error("period {index} starting at {start} overlaps the previous period ending at {prev_end}")]
    OverlappingPeriods { index: usize, start: usize, prev_end: usize },
    #[error("period starting at {start} lists {got} per-instant link sets, expected {expected}")]
    InstantCount { start: usize, got: usize, expected: usize },
    #[error("link ({from}, {to}) is not an arc of the network (from must be in N_to)")]
    UnknownLink { from: NodeId, to: NodeId },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScheduleOptions {
    /// Accept periods that are not followed by an attack-free instant.
    pub allow_invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodLinks {
    /// The same links are attacked at every instant of the period.
    Uniform(BTreeSet<Link>),
    /// One link set per instant `s_k, s_k + 1, ..., s_k + phi_k`.
    PerInstant(Vec<BTreeSet<Link>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPeriod {
    pub start: usize,
    pub dwell: usize,
    pub links: PeriodLinks,
}

impl AttackPeriod {
    pub fn uniform(start: usize, dwell: usize, links: impl IntoIterator<Item = Link>) -> Self {
        Self { start, dwell, links: PeriodLinks::Uniform(links.into_iter().collect()) }
    }

    pub fn per_instant(start: usize, dwell: usize, links: Vec<BTreeSet<Link>>) -> Self {
        Self { start, dwell, links: PeriodLinks::PerInstant(links) }
    }

    /// Last attacked instant, `s_k + phi_k`.
    pub fn end(&self) -> usize {
        self.start + self.dwell
    }

    pub fn covers(&self, t: usize) -> bool {
        (self.start..=self.end()).contains(&t)
    }

    /// Links attacked at `t`, assuming `self.covers(t)`.
    pub fn links_at(&self, t: usize) -> &BTreeSet<Link> {
        match &self.links {
            PeriodLinks::Uniform(l) => l,
            PeriodLinks::PerInstant(v) => &v[t - self.start],
        }
    }

    fn all_links(&self) -> impl Iterator<Item = &Link> {
        let sets: Vec<&BTreeSet<Link>> = match &self.links {
            PeriodLinks::Uniform(l) => vec![l],
            PeriodLinks::PerInstant(v) => v.iter().collect(),
        };
        sets.into_iter().flatten()
    }
}

/// How a schedule was produced; kept for reporting and file output.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleGenerator {
    Explicit,
    Periodic { start: usize, stride: usize, dwell: usize },
    Random { seed: u64, stride: usize, dwell: usize, drop_probability: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSchedule {
    periods: Vec<AttackPeriod>,
    generator: ScheduleGenerator,
    horizon: usize,
}

impl AttackSchedule {
    /// No attacks up to `horizon`.
    pub fn empty(horizon: usize) -> Self {
        Self { periods: Vec::new(), generator: ScheduleGenerator::Explicit, horizon }
    }

    pub fn explicit(
        periods: Vec<AttackPeriod>,
        horizon: usize,
        options: ScheduleOptions,
    ) -> Result<Self, ScheduleError> {
        Self::build(periods, ScheduleGenerator::Explicit, horizon, options)
    }

    /// Periods at `start + k * stride` for every such instant below
    /// `horizon`, each with the given dwell and link pattern.
    pub fn periodic(
        start: usize,
        stride: usize,
        dwell: usize,
        links: PeriodLinks,
        horizon: usize,
        options: ScheduleOptions,
    ) -> Result<Self, ScheduleError> {
        if stride == 0 {
            return Err(ScheduleError::InvalidParameters("stride must be positive".into()));
        }
        let periods = (start..horizon)
            .step_by(stride)
            .map(|s| AttackPeriod { start: s, dwell, links: links.clone() })
            .collect();
        Self::build(periods, ScheduleGenerator::Periodic { start, stride, dwell }, horizon, options)
    }

    fn build(
        periods: Vec<AttackPeriod>,
        generator: ScheduleGenerator,
        horizon: usize,
        options: ScheduleOptions,
    ) -> Result<Self, ScheduleError> {
        for p in &periods {
            if let PeriodLinks::PerInstant(v) = &p.links {
                if v.len() != p.dwell + 1 {
                    return Err(ScheduleError::InstantCount {
                        start: p.start,
                        got: v.len(),
                        expected: p.dwell + 1,
                    });
                }
            }
        }
        for (index, w) in periods.windows(2).enumerate() {
            let (prev, next) = (&w[0], &w[1]);
            if next.start <= prev.end() {
                return Err(ScheduleError::OverlappingPeriods {
                    index: index + 1,
                    start: next.start,
                    prev_end: prev.end(),
                });
            }
            if next.start == prev.end() + 1 && !options.allow_invalid {
                return Err(ScheduleError::NoDormantInstant {
                    index: index + 1,
                    start: next.start,
                    prev_start: prev.start,
                    prev_end: prev.end(),
                });
            }
        }
        Ok(Self { periods, generator, horizon })
    }

    pub fn periods(&self) -> &[AttackPeriod] {
        &self.periods
    }

    pub fn generator(&self) -> &ScheduleGenerator {
        &self.generator
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The instants `s_k`.
    pub fn period_starts(&self) -> impl Iterator<Item = usize> + '_ {
        self.periods.iter().map(|p| p.start)
    }

    /// Same periods, marked explicit (used when dumping generated schedules).
    pub fn to_explicit(&self) -> Self {
        Self { periods: self.periods.clone(), generator: ScheduleGenerator::Explicit, horizon: self.horizon }
    }

    fn covering(&self, t: usize) -> Result<Option<&AttackPeriod>, ScheduleError> {
        if t >= self.horizon {
            return Err(ScheduleError::HorizonExceeded { t, horizon: self.horizon });
        }
        let idx = self.periods.partition_point(|p| p.start <= t);
        Ok(idx.checked_sub(1).map(|k| &self.periods[k]).filter(|p| p.covers(t)))
    }

    pub fn is_active(&self, t: usize) -> Result<bool, ScheduleError> {
        Ok(self.covering(t)?.is_some())
    }

    /// Rejects any attacked link `j -> i` with `j ∉ N_i`.
    pub fn validate_links(&self, triangulation: &Triangulation) -> Result<(), ScheduleError> {
        for p in &self.periods {
            for &(from, to) in p.all_links() {
                check_link(triangulation, from, to)?;
            }
        }
        Ok(())
    }

    pub fn denial_mask(
        &self,
        triangulation: &Triangulation,
        t: usize,
    ) -> Result<DenialMask, ScheduleError> {
        let mut mask = DenialMask::default();
        if let Some(period) = self.covering(t)? {
            for &(from, to) in period.links_at(t) {
                check_link(triangulation, from, to)?;
                mask.denied.entry(to).or_default().insert(from);
            }
        }
        Ok(mask)
    }
}

fn check_link(triangulation: &Triangulation, from: NodeId, to: NodeId) -> Result<(), ScheduleError> {
    match triangulation.get(&to) {
        Some(set) if set.contains(&from) => Ok(()),
        _ => Err(ScheduleError::UnknownLink { from, to }),
    }
}

/// All arcs `r -> i`, `r ∈ N_i`, ordered by `(i, r)`.
pub fn network_arcs(triangulation: &Triangulation) -> Vec<Link> {
    let mut arcs: Vec<Link> = triangulation
        .iter()
        .flat_map(|(&to, set)| set.iter().map(move |&from| (from, to)))
        .collect();
    arcs.sort_by_key(|&(from, to)| (to, from));
    arcs
}

/// Seeded stress schedule: active periods at `k * stride` with the given
/// dwell, each arc attacked for a whole period with probability
/// `drop_probability`, drawn independently per period.
pub fn random_schedule(
    seed: u64,
    triangulation: &Triangulation,
    horizon: usize,
    stride: usize,
    dwell: usize,
    drop_probability: f64,
) -> Result<AttackSchedule, ScheduleError> {
    random_schedule_with(seed, triangulation, horizon, stride, dwell, drop_probability, ScheduleOptions::default())
}

pub fn random_schedule_with(
    seed: u64,
    triangulation: &Triangulation,
    horizon: usize,
    stride: usize,
    dwell: usize,
    drop_probability: f64,
    options: ScheduleOptions,
) -> Result<AttackSchedule, ScheduleError> {
    let min_stride = if options.allow_invalid { dwell + 1 } else { dwell + 2 };
    if stride < min_stride {
        return Err(ScheduleError::InvalidParameters(format!(
            "stride {stride} must be at least dwell + {} = {min_stride}",
            min_stride - dwell
        )));
    }
    if !(0.0..=1.0).contains(&drop_probability) {
        return Err(ScheduleError::InvalidParameters(format!(
            "drop probability {drop_probability} must lie in [0, 1]"
        )));
    }
    let arcs = network_arcs(triangulation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let periods = (0..horizon)
        .step_by(stride)
        .map(|start| {
            // one draw per arc even at p = 0 or 1 keeps the stream aligned
            let links = arcs.iter().copied().filter(|_| rng.gen::<f64>() < drop_probability);
            AttackPeriod::uniform(start, dwell, links)
        })
        .collect();
    AttackSchedule::build(
        periods,
        ScheduleGenerator::Random { seed, stride, dwell, drop_probability },
        horizon,
        options,
    )
}

/// Denied in-neighbors per sensor at one instant; sensors with nothing
/// denied are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DenialMask {
    denied: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl DenialMask {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deny(&mut self, from: NodeId, to: NodeId) {
        self.denied.entry(to).or_default().insert(from);
    }

    pub fn is_empty(&self) -> bool {
        self.denied.is_empty()
    }

    pub fn denied(&self, sensor: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.denied.get(&sensor)
    }

    pub fn is_denied(&self, sensor: NodeId, from: NodeId) -> bool {
        self.denied.get(&sensor).is_some_and(|s| s.contains(&from))
    }

    /// True if any in-link of `sensor` is denied.
    pub fn is_masked(&self, sensor: NodeId) -> bool {
        self.denied.contains_key(&sensor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &BTreeSet<NodeId>)> {
        self.denied.iter().map(|(&k, v)| (k, v))
    }
}
