//! Iteration engines.
//!
//! Both engines share the consensus update
//! `p_i <- p_i + gamma * Σ a_ir (p_r - p_i)`. Under attack, DILOC drops the
//! denied terms from the sum, while AS-DILOC keeps `p_i` unchanged whenever
//! any in-link of `i` is denied. The matrix form
//! `p(t+1) = gamma F(t) p_a + Q(t) p(t)` with `Q(t) = I - gamma (N(t) - H(t))`
//! is implemented separately so the two paths can be checked against each
//! other.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::attack::{AttackSchedule, DenialMask, ScheduleError};
use crate::geometry::{distance, Point2};
use crate::network::{
    build_system_matrices, NetworkError, NetworkScenario, NodeId, SensorRow, SystemMatrices,
    Triangulation, ANCHOR_COUNT,
};

/// Estimates beyond this magnitude abort a run.
pub const DIVERGENCE_BOUND: f64 = 1e12;
/// Allowed scalar/matrix path disagreement per step.
pub const DUAL_PATH_TOL: f64 = 1e-12;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocalizationError {
    #[error("gamma = {gamma} is outside the admissible range for {algorithm}")]
    InvalidGamma { gamma: f64, algorithm: Algorithm },
    #[error("(I - H) X = F p_a cannot be solved: some sensor is not anchored")]
    SingularSystem,
    #[error("estimate state has {got} sensors, expected {expected}")]
    StateSize { got: usize, expected: usize },
    #[error("estimates left the finite range at iteration {0}")]
    NonFinite(usize),
    #[error("scalar and matrix updates differ by {diff:e} at iteration {t}")]
    DualPathMismatch { t: usize, diff: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Diloc,
    AsDiloc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Diloc => "diloc",
            Algorithm::AsDiloc => "asdiloc",
        }
    }

    pub fn check_gamma(self, gamma: f64) -> Result<(), LocalizationError> {
        let ok = match self {
            Algorithm::Diloc => gamma > 0.0 && gamma <= 1.0,
            Algorithm::AsDiloc => gamma > 0.0 && gamma < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LocalizationError::InvalidGamma { gamma, algorithm: self })
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diloc" => Ok(Algorithm::Diloc),
            "asdiloc" => Ok(Algorithm::AsDiloc),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

/// Sensor estimates at iteration `t`, indexed by sensor index.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateState {
    pub t: usize,
    estimates: Vec<Point2>,
}

impl EstimateState {
    pub fn new(t: usize, estimates: Vec<Point2>) -> Self {
        Self { t, estimates }
    }

    /// Every sensor at the anchors' centroid.
    pub fn at_anchor_centroid(anchors: &[Point2; ANCHOR_COUNT], sensor_count: usize) -> Self {
        let c = (1.0 / 3.0) * (anchors[0] + anchors[1] + anchors[2]);
        Self::new(0, vec![c; sensor_count])
    }

    /// Centroid start with the scenario's per-sensor overrides applied.
    pub fn initial_for(scenario: &NetworkScenario) -> Self {
        let mut s = Self::at_anchor_centroid(&scenario.anchor_positions(), scenario.sensor_count());
        for (&id, &p) in scenario.initial_estimates() {
            if let Some(k) = id.sensor_index() {
                s.estimates[k] = p;
            }
        }
        s
    }

    pub fn estimates(&self) -> &[Point2] {
        &self.estimates
    }

    pub fn estimate(&self, sensor: NodeId) -> Option<Point2> {
        sensor.sensor_index().and_then(|k| self.estimates.get(k)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, Point2)> + '_ {
        self.estimates.iter().enumerate().map(|(k, &p)| (NodeId::from_sensor_index(k), p))
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.estimates.len(), 2, |r, c| {
            if c == 0 {
                self.estimates[r].x
            } else {
                self.estimates[r].y
            }
        })
    }

    fn from_matrix(t: usize, m: &DMatrix<f64>) -> Self {
        Self::new(t, (0..m.nrows()).map(|r| Point2::new(m[(r, 0)], m[(r, 1)])).collect())
    }

    /// Largest per-sensor distance to `reference`.
    pub fn max_error(&self, reference: &[Point2]) -> f64 {
        self.estimates.iter().zip(reference).map(|(&p, &q)| distance(p, q)).fold(0.0, f64::max)
    }

    /// `max_k max(|dx|, |dy|)` between two states.
    pub fn max_abs_diff(&self, other: &EstimateState) -> f64 {
        self.estimates
            .iter()
            .zip(&other.estimates)
            .map(|(p, q)| (p.x - q.x).abs().max((p.y - q.y).abs()))
            .fold(0.0, f64::max)
    }

    fn magnitude_ok(&self) -> bool {
        self.estimates
            .iter()
            .all(|p| p.is_finite() && p.x.abs() <= DIVERGENCE_BOUND && p.y.abs() <= DIVERGENCE_BOUND)
    }
}

fn anchors_matrix(anchors: &[Point2; ANCHOR_COUNT]) -> DMatrix<f64> {
    DMatrix::from_fn(ANCHOR_COUNT, 2, |r, c| if c == 0 { anchors[r].x } else { anchors[r].y })
}

/// Solves `(I - H) X = F p_a` by LU decomposition.
pub fn exact_solution(
    matrices: &SystemMatrices,
    anchors: &[Point2; ANCHOR_COUNT],
) -> Result<Vec<Point2>, LocalizationError> {
    if matrices.anchor_hops().iter().any(Option::is_none) {
        return Err(LocalizationError::SingularSystem);
    }
    let m = matrices.sensor_count();
    let lhs = DMatrix::identity(m, m) - &matrices.h;
    let rhs = &matrices.f * anchors_matrix(anchors);
    let x = lhs.lu().solve(&rhs).ok_or(LocalizationError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LocalizationError::SingularSystem);
    }
    Ok(EstimateState::from_matrix(0, &x).estimates)
}

fn check_state(state: &EstimateState, matrices: &SystemMatrices) -> Result<(), LocalizationError> {
    if state.len() != matrices.sensor_count() {
        return Err(LocalizationError::StateSize {
            got: state.len(),
            expected: matrices.sensor_count(),
        });
    }
    Ok(())
}

/// `p_i + gamma * Σ_{r ∉ skip} a_ir (p_r - p_i)`.
fn consensus_update(
    row: &SensorRow,
    state: &EstimateState,
    anchors: &[Point2; ANCHOR_COUNT],
    gamma: f64,
    skip: Option<&BTreeSet<NodeId>>,
) -> Point2 {
    let own = state.estimates[row.id.sensor_index().expect("sensor row")];
    let mut pull = Point2::default();
    for &(r, w) in &row.neighbors {
        if skip.is_some_and(|s| s.contains(&r)) {
            continue;
        }
        let neighbor = match r.sensor_index() {
            Some(k) => state.estimates[k],
            None => anchors[r.0 as usize - 1],
        };
        pull = pull + w * (neighbor - own);
    }
    own + gamma * pull
}

/// DILOC under attack: denied neighbors are left out of the sum.
pub fn diloc_step(
    state: &EstimateState,
    matrices: &SystemMatrices,
    anchors: &[Point2; ANCHOR_COUNT],
    gamma: f64,
    mask: &DenialMask,
) -> Result<EstimateState, LocalizationError> {
    Algorithm::Diloc.check_gamma(gamma)?;
    check_state(state, matrices)?;
    let next = matrices
        .rows()
        .iter()
        .map(|row| consensus_update(row, state, anchors, gamma, mask.denied(row.id)))
        .collect();
    Ok(EstimateState::new(state.t + 1, next))
}

/// AS-DILOC: a sensor with any denied in-link keeps its estimate.
pub fn asdiloc_step(
    state: &EstimateState,
    matrices: &SystemMatrices,
    anchors: &[Point2; ANCHOR_COUNT],
    gamma: f64,
    mask: &DenialMask,
) -> Result<EstimateState, LocalizationError> {
    Algorithm::AsDiloc.check_gamma(gamma)?;
    check_state(state, matrices)?;
    let next = matrices
        .rows()
        .iter()
        .enumerate()
        .map(|(k, row)| {
            if mask.is_masked(row.id) {
                state.estimates[k]
            } else {
                consensus_update(row, state, anchors, gamma, None)
            }
        })
        .collect();
    Ok(EstimateState::new(state.t + 1, next))
}

pub fn step(
    algorithm: Algorithm,
    state: &EstimateState,
    matrices: &SystemMatrices,
    anchors: &[Point2; ANCHOR_COUNT],
    gamma: f64,
    mask: &DenialMask,
) -> Result<EstimateState, LocalizationError> {
    match algorithm {
        Algorithm::Diloc => diloc_step(state, matrices, anchors, gamma, mask),
        Algorithm::AsDiloc => asdiloc_step(state, matrices, anchors, gamma, mask),
    }
}

/// `F(t)`, `H(t)`, `N(t)` (diagonal, stored as a vector) and `Q(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrices {
    pub f_t: DMatrix<f64>,
    pub h_t: DMatrix<f64>,
    pub n_t: DVector<f64>,
    pub q_t: DMatrix<f64>,
}

impl MaskedMatrices {
    fn from_parts(f_t: DMatrix<f64>, h_t: DMatrix<f64>, gamma: f64) -> Self {
        let m = h_t.nrows();
        let n_t = DVector::from_fn(m, |i, _| f_t.row(i).sum() + h_t.row(i).sum());
        let q_t = DMatrix::identity(m, m) - gamma * (DMatrix::from_diagonal(&n_t) - &h_t);
        Self { f_t, h_t, n_t, q_t }
    }

    /// `gamma F(t) p_a + Q(t) p(t)`.
    pub fn apply(
        &self,
        state: &EstimateState,
        anchors: &[Point2; ANCHOR_COUNT],
        gamma: f64,
    ) -> EstimateState {
        let next = gamma * (&self.f_t * anchors_matrix(anchors)) + &self.q_t * state.to_matrix();
        EstimateState::from_matrix(state.t + 1, &next)
    }
}

/// AS-DILOC rule: rows of `[F H]` are zeroed for sensors with any denied
/// in-link and kept otherwise.
pub fn masked_matrices(matrices: &SystemMatrices, mask: &DenialMask, gamma: f64) -> MaskedMatrices {
    let mut f_t = matrices.f.clone();
    let mut h_t = matrices.h.clone();
    for (k, row) in matrices.rows().iter().enumerate() {
        if mask.is_masked(row.id) {
            f_t.row_mut(k).fill(0.0);
            h_t.row_mut(k).fill(0.0);
        }
    }
    MaskedMatrices::from_parts(f_t, h_t, gamma)
}

/// DILOC rule: only the entries of denied links are zeroed.
pub fn diloc_masked_matrices(
    matrices: &SystemMatrices,
    mask: &DenialMask,
    gamma: f64,
) -> MaskedMatrices {
    let mut f_t = matrices.f.clone();
    let mut h_t = matrices.h.clone();
    for (from_denied, row) in mask.iter().filter_map(|(i, d)| Some(d).zip(i.sensor_index())) {
        for &from in from_denied {
            match from.sensor_index() {
                Some(col) => h_t[(row, col)] = 0.0,
                None => f_t[(row, from.0 as usize - 1)] = 0.0,
            }
        }
    }
    MaskedMatrices::from_parts(f_t, h_t, gamma)
}

/// Everything a run needs, derived once from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub matrices: SystemMatrices,
    pub anchors: [Point2; ANCHOR_COUNT],
    pub triangulation: Triangulation,
    pub exact: Vec<Point2>,
    pub initial: EstimateState,
}

impl Problem {
    pub fn from_scenario(scenario: &NetworkScenario) -> Result<Self, LocalizationError> {
        let matrices = build_system_matrices(scenario)?;
        let anchors = scenario.anchor_positions();
        let exact = exact_solution(&matrices, &anchors)?;
        Ok(Self {
            triangulation: matrices.triangulation(),
            initial: EstimateState::initial_for(scenario),
            matrices,
            anchors,
            exact,
        })
    }

    pub fn with_initial(mut self, initial: EstimateState) -> Result<Self, LocalizationError> {
        check_state(&initial, &self.matrices)?;
        self.initial = EstimateState { t: 0, ..initial };
        Ok(self)
    }

    pub fn sensor_count(&self) -> usize {
        self.matrices.sensor_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    /// Max distance to the exact solution below `tol`.
    ExactError,
    /// `‖p(t) - p(t-1)‖∞ < tol` after a step in which no link was denied
    /// (frozen AS-DILOC steps would otherwise look converged).
    SuccessiveDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub stopping: StoppingRule,
    /// End the trace at the first converged instant.
    pub stop_on_convergence: bool,
    /// Check every step against the matrix form.
    pub dual_path_check: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, gamma: f64) -> Self {
        Self {
            algorithm,
            gamma,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            stopping: StoppingRule::ExactError,
            stop_on_convergence: true,
            dual_path_check: false,
        }
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn stopping(mut self, stopping: StoppingRule) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn stop_on_convergence(mut self, stop: bool) -> Self {
        self.stop_on_convergence = stop;
        self
    }

    pub fn dual_path_check(mut self, check: bool) -> Self {
        self.dual_path_check = check;
        self
    }
}

/// Per-instant record: `states[t]`, its max error and the mask applied at
/// `t` (the one producing `states[t + 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub states: Vec<EstimateState>,
    pub errors: Vec<f64>,
    pub masks: Vec<DenialMask>,
    pub converged_at: Option<usize>,
    pub exact: Vec<Point2>,
}

impl RunTrace {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_state(&self) -> &EstimateState {
        self.states.last().expect("trace holds the initial state")
    }

    pub fn sensor_error(&self, t: usize, sensor_index: usize) -> f64 {
        distance(self.states[t].estimates[sensor_index], self.exact[sensor_index])
    }
}

pub fn run(
    problem: &Problem,
    schedule: &AttackSchedule,
    config: &RunConfig,
) -> Result<RunTrace, LocalizationError> {
    config.algorithm.check_gamma(config.gamma)?;
    schedule.validate_links(&problem.triangulation)?;
    if schedule.horizon() < config.max_iters {
        return Err(ScheduleError::HorizonExceeded {
            t: config.max_iters - 1,
            horizon: schedule.horizon(),
        }
        .into());
    }
    let mut trace = RunTrace {
        algorithm: config.algorithm,
        states: Vec::new(),
        errors: Vec::new(),
        masks: Vec::new(),
        converged_at: None,
        exact: problem.exact.clone(),
    };
    let mut state = EstimateState { t: 0, ..problem.initial.clone() };
    check_state(&state, &problem.matrices)?;
    // (‖p(t) - p(t-1)‖∞, whether the step into t was attack-free)
    let mut last_step: Option<(f64, bool)> = None;
    for t in 0..=config.max_iters {
        let err = state.max_error(&problem.exact);
        let mask = if t < schedule.horizon() {
            schedule.denial_mask(&problem.triangulation, t)?
        } else {
            DenialMask::new()
        };
        let converged = match config.stopping {
            StoppingRule::ExactError => err < config.tol,
            StoppingRule::SuccessiveDifference => {
                last_step.is_some_and(|(diff, clean)| clean && diff < config.tol)
            }
        };
        if converged && trace.converged_at.is_none() {
            trace.converged_at = Some(t);
        }
        if t == config.max_iters || (converged && config.stop_on_convergence) {
            trace.states.push(state);
            trace.errors.push(err);
            trace.masks.push(mask);
            break;
        }
        let next = step(
            config.algorithm,
            &state,
            &problem.matrices,
            &problem.anchors,
            config.gamma,
            &mask,
        )?;
        if config.dual_path_check {
            let masked = match config.algorithm {
                Algorithm::AsDiloc => masked_matrices(&problem.matrices, &mask, config.gamma),
                Algorithm::Diloc => diloc_masked_matrices(&problem.matrices, &mask, config.gamma),
            };
            let diff = masked.apply(&state, &problem.anchors, config.gamma).max_abs_diff(&next);
            if diff.is_nan() || diff > DUAL_PATH_TOL {
                return Err(LocalizationError::DualPathMismatch { t, diff });
            }
        }
        if !next.magnitude_ok() {
            return Err(LocalizationError::NonFinite(t + 1));
        }
        last_step = Some((next.max_abs_diff(&state), mask.is_empty()));
        trace.states.push(std::mem::replace(&mut state, next));
        trace.errors.push(err);
        trace.masks.push(mask);
    }
    Ok(trace)
}
