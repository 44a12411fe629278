//! Numerical checks of AS-DILOC convergence.
//!
//! The iteration is embedded in the row-stochastic augmented matrix
//! `M(t) = [[1, 0], [gamma F(t) 1, Q(t)]]`, node `0` standing for the anchor
//! set. Reachability over windows of instants is the composition of the
//! positivity patterns of `M(t)`; contraction is measured by ∞-norms of left
//! products of `Q(t)`.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attack::{AttackSchedule, ScheduleError};
use crate::localization::{masked_matrices, MaskedMatrices};
use crate::network::{SystemMatrices, Triangulation};

pub const VANISHING_TOL: f64 = 1e-8;
pub const GAMMA_LIMIT_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const IDENTITY_SAMPLES: usize = 10;
/// Products below this norm are reported as exactly zero.
const UNDERFLOW_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("relation composition needs at least one matrix")]
    EmptyWindow,
    #[error("window {m} needs period {needed}, but the schedule has {available}")]
    WindowOutOfRange { m: usize, needed: usize, available: usize },
    #[error("window length P must be positive")]
    ZeroWindowLength,
    #[error("(I - H) is singular")]
    SingularSystem,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// ∞-norm: largest absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn floored(norm: f64) -> f64 {
    if norm < UNDERFLOW_FLOOR {
        0.0
    } else {
        norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMatrix(pub DMatrix<f64>);

impl AugmentedMatrix {
    pub fn from_masked(masked: &MaskedMatrices, gamma: f64) -> Self {
        let m = masked.q_t.nrows();
        let mut a = DMatrix::zeros(m + 1, m + 1);
        a[(0, 0)] = 1.0;
        for i in 0..m {
            a[(i + 1, 0)] = gamma * masked.f_t.row(i).sum();
        }
        a.view_mut((1, 1), (m, m)).copy_from(&masked.q_t);
        Self(a)
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        self.0.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Boolean relation on nodes `0..size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityRelation {
    size: usize,
    pairs: Vec<bool>,
}

impl ReachabilityRelation {
    pub fn identity(size: usize) -> Self {
        let mut r = Self { size, pairs: vec![false; size * size] };
        for k in 0..size {
            r.pairs[k * size + k] = true;
        }
        r
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs[a * self.size + b]
    }

    /// `E[M]`: `(a, b)` iff `M[b][a] > 0`, i.e. `b` takes information from
    /// `a`. Positive diagonal entries give self-loops.
    pub fn edges_of(m: &AugmentedMatrix) -> Self {
        let size = m.size();
        let pairs = (0..size * size).map(|k| m.0[(k % size, k / size)] > 0.0).collect();
        Self { size, pairs }
    }

    /// `self ∘ other`: `(b, d)` iff some `c` has `(b, c) ∈ self` and
    /// `(c, d) ∈ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let n = self.size;
        let mut pairs = vec![false; n * n];
        for b in 0..n {
            for c in (0..n).filter(|&c| self.contains(b, c)) {
                for d in 0..n {
                    pairs[b * n + d] |= other.contains(c, d);
                }
            }
        }
        Self { size: n, pairs }
    }

    /// `(0, i)` for every sensor node `i`.
    pub fn anchors_reach_all(&self) -> bool {
        (1..self.size).all(|i| self.contains(0, i))
    }

    pub fn unreached(&self) -> Vec<usize> {
        (1..self.size).filter(|&i| !self.contains(0, i)).collect()
    }
}

/// `E[M(first)] ∘ ... ∘ E[M(last)]`, in window order.
pub fn compose_relations(window: &[AugmentedMatrix]) -> Result<ReachabilityRelation, AnalysisError> {
    let (first, rest) = window.split_first().ok_or(AnalysisError::EmptyWindow)?;
    Ok(rest
        .iter()
        .fold(ReachabilityRelation::edges_of(first), |acc, m| acc.compose(&ReachabilityRelation::edges_of(m))))
}

/// `min{gamma a_ir, 1 - gamma Σ_r a_ir}` over the nonzero weights of every
/// sensor row.
pub fn sigma_bound(matrices: &SystemMatrices, gamma: f64) -> f64 {
    matrices
        .rows()
        .iter()
        .flat_map(|row| {
            let total: f64 = row.neighbors.iter().map(|&(_, w)| w).sum();
            row.neighbors
                .iter()
                .filter(|&&(_, w)| w > 0.0)
                .map(move |&(_, w)| gamma * w)
                .chain(std::iter::once(1.0 - gamma * total))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Per-instant matrices of one schedule applied to one network.
pub struct Dynamics<'a> {
    matrices: &'a SystemMatrices,
    schedule: &'a AttackSchedule,
    triangulation: Triangulation,
    gamma: f64,
}

impl<'a> Dynamics<'a> {
    pub fn new(matrices: &'a SystemMatrices, schedule: &'a AttackSchedule, gamma: f64) -> Self {
        Self { matrices, schedule, triangulation: matrices.triangulation(), gamma }
    }

    pub fn masked(&self, t: usize) -> Result<MaskedMatrices, AnalysisError> {
        let mask = self.schedule.denial_mask(&self.triangulation, t)?;
        Ok(masked_matrices(self.matrices, &mask, self.gamma))
    }

    pub fn augmented(&self, t: usize) -> Result<AugmentedMatrix, AnalysisError> {
        Ok(AugmentedMatrix::from_masked(&self.masked(t)?, self.gamma))
    }

    /// `Q(end - 1) ... Q(start)`.
    pub fn q_product(&self, start: usize, end: usize) -> Result<DMatrix<f64>, AnalysisError> {
        let m = self.matrices.sensor_count();
        let mut prod = DMatrix::identity(m, m);
        for t in start..end {
            prod = &self.masked(t)?.q_t * prod;
        }
        Ok(prod)
    }

    pub fn reachability(&self, start: usize, end: usize) -> Result<ReachabilityRelation, AnalysisError> {
        let window = (start..end).map(|t| self.augmented(t)).collect::<Result<Vec<_>, _>>()?;
        compose_relations(&window)
    }
}

/// Windows `[s_k, s_{k+P})` for every `k` with `s_{k+P}` defined.
pub fn period_windows(schedule: &AttackSchedule, p: usize) -> Vec<(usize, usize, usize)> {
    let starts: Vec<usize> = schedule.period_starts().collect();
    (0..starts.len().saturating_sub(p)).map(|k| (k, starts[k], starts[k + p])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowReport {
    pub m: usize,
    pub start: usize,
    pub end: usize,
    /// Instants in the window.
    pub delta: usize,
    pub norm: f64,
    /// `1 - sigma^delta`.
    pub bound: f64,
}

impl WindowReport {
    pub fn holds(&self) -> bool {
        self.norm < 1.0 && self.norm <= self.bound + 1e-12
    }
}

/// ∞-norm of `Π Q(t)` over `[s_{mP}, s_{(m+1)P})`.
pub fn window_product_norm(
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    m: usize,
    p: usize,
) -> Result<WindowReport, AnalysisError> {
    if p == 0 {
        return Err(AnalysisError::ZeroWindowLength);
    }
    let starts: Vec<usize> = schedule.period_starts().collect();
    let needed = (m + 1) * p;
    if needed >= starts.len() {
        return Err(AnalysisError::WindowOutOfRange { m, needed, available: starts.len() });
    }
    let (start, end) = (starts[m * p], starts[needed]);
    let dynamics = Dynamics::new(matrices, schedule, gamma);
    let norm = floored(inf_norm(&dynamics.q_product(start, end)?));
    let delta = end - start;
    let bound = 1.0 - sigma_bound(matrices, gamma).powi(delta as i32);
    Ok(WindowReport { m, start, end, delta, norm, bound })
}

/// Every complete window `m = 0, 1, ...` the schedule defines.
pub fn all_window_norms(
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    p: usize,
) -> Result<Vec<WindowReport>, AnalysisError> {
    if p == 0 {
        return Err(AnalysisError::ZeroWindowLength);
    }
    let count = schedule.periods().len().saturating_sub(1) / p;
    (0..count).map(|m| window_product_norm(schedule, matrices, gamma, m, p)).collect()
}

/// `‖Q(T-1) ... Q(0)‖∞`; `1` for `T = 0`.
pub fn product_vanishing_check(
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    horizon: usize,
) -> Result<f64, AnalysisError> {
    let prod = Dynamics::new(matrices, schedule, gamma).q_product(0, horizon)?;
    Ok(floored(inf_norm(&prod)))
}

/// `(I - H)^{-1} F`, the sensors' barycentric coordinates in terms of the
/// anchors.
pub fn anchor_coordinates(matrices: &SystemMatrices) -> Result<DMatrix<f64>, AnalysisError> {
    let m = matrices.sensor_count();
    (DMatrix::identity(m, m) - &matrices.h)
        .lu()
        .solve(&matrices.f)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or(AnalysisError::SingularSystem)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaLimitReport {
    /// `‖Γ(T) - (I - H)^{-1} F‖∞`.
    pub residual: f64,
    /// `‖Q(T-1) ... Q(0)‖∞ · ‖(I - H)^{-1} F‖∞`, which bounds `residual`.
    pub telescoped_bound: f64,
    /// `(t, ‖(I - Q(t)) X - gamma F(t)‖∞)` at sampled instants.
    pub identity_residuals: Vec<(usize, f64)>,
}

impl GammaLimitReport {
    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residuals.iter().map(|&(_, r)| r).fold(0.0, f64::max)
    }
}

/// Accumulates `Γ(t) = Q(t) Γ(t-1) + gamma F(t)` over `T` instants, so that
/// `p(T) = Π Q · p(0) + Γ p_a`, and compares it with the exact anchor
/// coordinates. Also checks `(I - Q(t)) (I - H)^{-1} F = gamma F(t)` at
/// `IDENTITY_SAMPLES` seeded instants.
pub fn gamma_limit_check(
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    horizon: usize,
    seed: u64,
) -> Result<GammaLimitReport, AnalysisError> {
    let exact = anchor_coordinates(matrices)?;
    let dynamics = Dynamics::new(matrices, schedule, gamma);
    let m = matrices.sensor_count();
    let mut acc = DMatrix::zeros(m, exact.ncols());
    let mut prod = DMatrix::identity(m, m);
    for t in 0..horizon {
        let masked = dynamics.masked(t)?;
        acc = &masked.q_t * acc + gamma * &masked.f_t;
        prod = &masked.q_t * prod;
    }
    let residual = floored(inf_norm(&(acc - &exact)));
    let telescoped_bound = floored(inf_norm(&prod)) * inf_norm(&exact);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut identity_residuals = Vec::with_capacity(IDENTITY_SAMPLES);
    if horizon > 0 {
        for _ in 0..IDENTITY_SAMPLES {
            let t = rng.gen_range(0..horizon);
            let masked = dynamics.masked(t)?;
            let lhs = (DMatrix::identity(m, m) - &masked.q_t) * &exact;
            identity_residuals.push((t, inf_norm(&(lhs - gamma * &masked.f_t))));
        }
    }
    Ok(GammaLimitReport { residual, telescoped_bound, identity_residuals })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityCheck {
    pub k: usize,
    pub start: usize,
    pub end: usize,
    pub unreached: Vec<usize>,
}

impl ReachabilityCheck {
    pub fn holds(&self) -> bool {
        self.unreached.is_empty()
    }
}

/// Composed reachability over every window `[s_k, s_{k+P})`.
pub fn reachability_checks(
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    p: usize,
) -> Result<Vec<ReachabilityCheck>, AnalysisError> {
    let dynamics = Dynamics::new(matrices, schedule, gamma);
    period_windows(schedule, p)
        .into_iter()
        .map(|(k, start, end)| {
            let rel = dynamics.reachability(start, end)?;
            Ok(ReachabilityCheck { k, start, end, unreached: rel.unreached() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Skip the window-norm assertion (schedules without dormant instants).
    pub exempt_window_norms: bool,
}

/// Result of the full battery on one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub label: String,
    pub gamma: f64,
    pub sigma: f64,
    pub p: usize,
    pub delta_hat: usize,
    pub horizon: usize,
    pub reachability: Vec<ReachabilityCheck>,
    pub windows: Vec<WindowReport>,
    pub vanishing: f64,
    pub gamma_limit: GammaLimitReport,
    pub options: VerifyOptions,
}

impl VerificationReport {
    /// Description of the first failing check, if any.
    pub fn first_failure(&self) -> Option<String> {
        if let Some(r) = self.reachability.iter().find(|r| !r.holds()) {
            return Some(format!(
                "{}: reachability window k={} [{}, {}) misses nodes {:?}",
                self.label, r.k, r.start, r.end, r.unreached
            ));
        }
        if !self.options.exempt_window_norms {
            if let Some(w) = self.windows.iter().find(|w| !w.holds()) {
                return Some(format!(
                    "{}: window m={} [{}, {}) has product norm {:e} (bound {:e})",
                    self.label, w.m, w.start, w.end, w.norm, w.bound
                ));
            }
        }
        if self.vanishing.is_nan() || self.vanishing >= VANISHING_TOL {
            return Some(format!(
                "{}: product norm {:e} at T={} is not below {VANISHING_TOL:e}",
                self.label, self.vanishing, self.horizon
            ));
        }
        if self.gamma_limit.residual.is_nan() || self.gamma_limit.residual >= GAMMA_LIMIT_TOL {
            return Some(format!(
                "{}: gamma limit residual {:e} at T={} is not below {GAMMA_LIMIT_TOL:e}",
                self.label, self.gamma_limit.residual, self.horizon
            ));
        }
        let id = self.gamma_limit.max_identity_residual();
        if id.is_nan() || id >= IDENTITY_TOL {
            return Some(format!(
                "{}: identity residual {id:e} is not below {IDENTITY_TOL:e}",
                self.label
            ));
        }
        None
    }

    pub fn passed(&self) -> bool {
        self.first_failure().is_none()
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# schedule {}", self.label)?;
        writeln!(f, "gamma,{:.17e}", self.gamma)?;
        writeln!(f, "sigma,{:.17e}", self.sigma)?;
        writeln!(f, "P,{}", self.p)?;
        writeln!(f, "delta_hat,{}", self.delta_hat)?;
        writeln!(f, "horizon,{}", self.horizon)?;
        writeln!(f, "reachability_k,start,end,pass")?;
        for r in &self.reachability {
            writeln!(f, "{},{},{},{}", r.k, r.start, r.end, if r.holds() { "pass" } else { "FAIL" })?;
        }
        writeln!(f, "window_m,start,end,delta,norm,bound,pass")?;
        for w in &self.windows {
            writeln!(
                f,
                "{},{},{},{},{:.17e},{:.17e},{}",
                w.m,
                w.start,
                w.end,
                w.delta,
                w.norm,
                w.bound,
                if w.holds() { "pass" } else { "FAIL" }
            )?;
        }
        writeln!(f, "product_norm,{:.17e}", self.vanishing)?;
        writeln!(f, "gamma_limit_residual,{:.17e}", self.gamma_limit.residual)?;
        writeln!(f, "gamma_limit_telescoped_bound,{:.17e}", self.gamma_limit.telescoped_bound)?;
        writeln!(f, "identity_t,residual")?;
        for (t, r) in &self.gamma_limit.identity_residuals {
            writeln!(f, "{t},{r:.17e}")?;
        }
        match self.first_failure() {
            None => writeln!(f, "result,pass"),
            Some(msg) => writeln!(f, "result,FAIL,{msg}"),
        }
    }
}

/// Runs every check for one schedule: sigma, reachability and norms per
/// window, product vanishing, gamma limit and the identity samples.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    label: impl Into<String>,
    schedule: &AttackSchedule,
    matrices: &SystemMatrices,
    gamma: f64,
    p: usize,
    horizon: usize,
    seed: u64,
    options: VerifyOptions,
) -> Result<VerificationReport, AnalysisError> {
    let reachability = reachability_checks(schedule, matrices, gamma, p)?;
    let windows = all_window_norms(schedule, matrices, gamma, p)?;
    let delta_hat = windows.iter().map(|w| w.delta).max().unwrap_or(0);
    Ok(VerificationReport {
        label: label.into(),
        gamma,
        sigma: sigma_bound(matrices, gamma),
        p,
        delta_hat,
        horizon,
        reachability,
        windows,
        vanishing: product_vanishing_check(schedule, matrices, gamma, horizon)?,
        gamma_limit: gamma_limit_check(schedule, matrices, gamma, horizon, seed)?,
        options,
    })
}
