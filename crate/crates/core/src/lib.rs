//! Distributed barycentric sensor localization (DILOC) and its
//! abandonment-strategy variant (AS-DILOC) under denial-of-service link
//! attacks, with numerical checks of the convergence theory.

pub mod analysis;
pub mod attack;
pub mod corpus;
pub mod geometry;
pub mod io;
pub mod localization;
pub mod network;

pub use attack::{AttackPeriod, AttackSchedule, DenialMask, PeriodLinks, ScheduleOptions};
pub use geometry::{BarycentricWeights, Point2};
pub use localization::{Algorithm, EstimateState, Problem, RunConfig, RunTrace};
pub use network::{NetworkScenario, NodeId, SystemMatrices};
