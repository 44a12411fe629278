//! Bundled scenario and schedule files.
//!
//! `example1` is the seven-node network (anchors 1-3 at `(1, √3)`, `(0, 0)`,
//! `(2, 0)`; sensors 4-7 with prescribed triangulation sets). `strategy1`
//! and `strategy2` are the two periodic attacks with `s_k = 3k` and dwell 1.

use crate::attack::{AttackSchedule, ScheduleOptions};
use crate::io::{parse_scenario, ScheduleFile};
use crate::network::NetworkScenario;

pub const EXAMPLE1_JSON: &str = include_str!("../scenarios/example1.json");
pub const STRATEGY1_JSON: &str = include_str!("../scenarios/strategy1.json");
pub const STRATEGY2_JSON: &str = include_str!("../scenarios/strategy2.json");

pub fn example1() -> NetworkScenario {
    parse_scenario(EXAMPLE1_JSON, Default::default(), "example1.json").expect("bundled scenario is valid")
}

fn bundled_schedule(text: &str, name: &str, horizon: usize) -> AttackSchedule {
    ScheduleFile::parse(text, name)
        .and_then(|f| f.resolve(example1().triangulation(), horizon, ScheduleOptions::default(), name))
        .expect("bundled schedule is valid")
}

/// Links into sensor 4 at `3k`, into sensor 7 at `3k + 1`.
pub fn strategy1(horizon: usize) -> AttackSchedule {
    bundled_schedule(STRATEGY1_JSON, "strategy1.json", horizon)
}

/// Partial attacks on sensors 4, 5, 7 at `3k` and 6, 7 at `3k + 1`.
pub fn strategy2(horizon: usize) -> AttackSchedule {
    bundled_schedule(STRATEGY2_JSON, "strategy2.json", horizon)
}
