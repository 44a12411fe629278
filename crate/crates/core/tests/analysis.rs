use asdiloc::analysis::{
    compose_relations, gamma_limit_check, inf_norm, product_vanishing_check, reachability_checks, sigma_bound,
    verify, window_product_norm, AugmentedMatrix, Dynamics, ReachabilityRelation, VerifyOptions,
};
use asdiloc::attack::{network_arcs, random_schedule, AttackPeriod, AttackSchedule, ScheduleOptions};
use asdiloc::corpus;
use asdiloc::localization::{run, Algorithm, EstimateState, Problem, RunConfig};
use asdiloc::network::{anchor_to_sensor_distance_bound, build_system_matrices, SystemMatrices};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example1_matrices() -> SystemMatrices {
    build_system_matrices(&corpus::example1()).unwrap()
}

/// Every node sequence `0 = v_0, v_1, ..., v_L = i` with `M_t[v_{t+1}][v_t] > 0`.
fn path_exists(window: &[AugmentedMatrix], from: usize, to: usize) -> bool {
    fn walk(window: &[AugmentedMatrix], at: usize, to: usize) -> bool {
        match window.split_first() {
            None => at == to,
            Some((m, rest)) => (0..m.size()).any(|next| m.0[(next, at)] > 0.0 && walk(rest, next, to)),
        }
    }
    walk(window, from, to)
}

fn window(d: &Dynamics, start: usize, end: usize) -> Vec<AugmentedMatrix> {
    (start..end).map(|t| d.augmented(t).unwrap()).collect()
}

#[test]
fn sigma_for_example_one() {
    let m = example1_matrices();
    let min_weight = m
        .rows()
        .iter()
        .flat_map(|r| r.neighbors.iter().map(|&(_, w)| w))
        .filter(|&w| w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let sigma = sigma_bound(&m, 0.5);
    assert_eq!(sigma, (0.5 * min_weight).min(0.5));
    assert!(sigma <= 1.0 / 6.0);
    assert!(sigma_bound(&m, 1.0 - 1e-9) < 1e-8);
}

#[test]
fn attack_free_window_reaches_everyone() {
    let m = example1_matrices();
    let s = AttackSchedule::empty(100);
    let d = Dynamics::new(&m, &s, 0.5);
    let p = anchor_to_sensor_distance_bound(&corpus::example1()).unwrap();
    let w = window(&d, 0, p);
    let rel = compose_relations(&w).unwrap();
    assert!(rel.anchors_reach_all());
    for i in 1..=4 {
        assert!(path_exists(&w, 0, i));
    }
    // one instant is not enough: sensor 7 only hears sensors
    let rel = compose_relations(&window(&d, 0, 1)).unwrap();
    assert_eq!(rel.unreached(), vec![4]);
}

#[test]
fn fully_denied_window_is_identity() {
    let m = example1_matrices();
    let arcs = network_arcs(&m.triangulation());
    let lax = ScheduleOptions { allow_invalid: true };
    let s = AttackSchedule::explicit(vec![AttackPeriod::uniform(0, 9, arcs)], 20, lax).unwrap();
    let d = Dynamics::new(&m, &s, 0.5);
    let rel = compose_relations(&window(&d, 0, 10)).unwrap();
    assert_eq!(rel, ReachabilityRelation::identity(5));
    assert!(d.q_product(0, 10).unwrap() == DMatrix::identity(4, 4));
    let w = window_product_norm(&s, &m, 0.5, 0, 1);
    assert!(w.is_err(), "a single period has no complete window");
    assert_eq!(inf_norm(&d.q_product(0, 10).unwrap()), 1.0);
}

#[test]
fn empty_window_is_rejected() {
    assert!(compose_relations(&[]).is_err());
}

#[test]
fn zero_horizon_product_is_identity() {
    let m = example1_matrices();
    assert_eq!(product_vanishing_check(&corpus::strategy2(10), &m, 0.5, 0).unwrap(), 1.0);
}

#[test]
fn bundled_strategies_pass_every_check() {
    let m = example1_matrices();
    for (name, s) in [("strategy1", corpus::strategy1(10_000)), ("strategy2", corpus::strategy2(10_000))] {
        let report = verify(name, &s, &m, 0.5, 2, 10_000, 5, VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{}", report);
        assert!(report.windows.iter().all(|w| w.norm < 1.0));
        assert!(report.vanishing < 1e-8);
        assert!(report.gamma_limit.residual < 1e-8);
        assert_eq!(report.gamma_limit.identity_residuals.len(), 10);
        assert!(report.gamma_limit.max_identity_residual() < 1e-10);
        // the product has underflowed by T, so only round-off remains
        assert!(report.gamma_limit.residual <= report.gamma_limit.telescoped_bound + 1e-13);
    }
}

#[test]
fn strategy_two_windows_reach_everyone() {
    let m = example1_matrices();
    let s = corpus::strategy2(300);
    let checks = reachability_checks(&s, &m, 0.5, 2).unwrap();
    assert!(!checks.is_empty());
    let d = Dynamics::new(&m, &s, 0.5);
    for c in checks {
        assert!(c.holds(), "window {c:?}");
        let w = window(&d, c.start, c.end);
        for i in 1..=4 {
            assert!(path_exists(&w, 0, i));
        }
    }
}

#[test]
fn unit_gamma_attack_free_limit() {
    let m = example1_matrices();
    let r = gamma_limit_check(&AttackSchedule::empty(2_000), &m, 1.0, 2_000, 1).unwrap();
    assert!(r.residual < 1e-12);
}

#[test]
fn augmented_and_q_matrices_are_well_formed() {
    let m = example1_matrices();
    for seed in 0..20 {
        let s = random_schedule(seed, &m.triangulation(), 120, 3, 1, 0.5).unwrap();
        let d = Dynamics::new(&m, &s, 0.5);
        for t in 0..120 {
            let aug = d.augmented(t).unwrap();
            assert!(aug.max_row_sum_deviation() < 1e-12);
            assert_eq!(aug.0[(0, 0)], 1.0);
            assert!((1..aug.size()).all(|c| aug.0[(0, c)] == 0.0));
            let q = d.masked(t).unwrap().q_t;
            assert!(q.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((0..q.nrows()).all(|r| q.row(r).sum() <= 1.0 + 1e-12));
        }
    }
}

#[test]
fn relation_matches_product_positivity() {
    let m = example1_matrices();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..200 {
        let p = rng.gen_range(0.0..1.0);
        let s = random_schedule(case, &m.triangulation(), 60, 3, 1, p).unwrap();
        let d = Dynamics::new(&m, &s, 0.5);
        let start = rng.gen_range(0..40);
        let end = start + rng.gen_range(1..15);
        let w = window(&d, start, end);
        let rel = compose_relations(&w).unwrap();
        let prod = w.iter().fold(DMatrix::identity(5, 5), |acc, a| &a.0 * acc);
        for i in 0..5 {
            assert_eq!(rel.contains(0, i), prod[(i, 0)] > 0.0, "case {case}, node {i}");
        }
    }
}

#[test]
fn random_schedule_windows_contract() {
    let m = example1_matrices();
    for seed in 0..20 {
        let s = random_schedule(seed, &m.triangulation(), 3_000, 3, 1, 0.9).unwrap();
        let report = verify(format!("random-{seed}"), &s, &m, 0.5, 2, 3_000, seed, VerifyOptions::default()).unwrap();
        assert!(report.windows.iter().all(|w| w.holds()), "{report}");
        assert!(report.reachability.iter().all(|r| r.holds()));
    }
}

#[test]
fn error_is_bounded_by_product_norm() {
    let problem = Problem::from_scenario(&corpus::example1()).unwrap();
    let init = EstimateState::new(0, vec![problem.anchors[0]; 4]);
    let problem = problem.with_initial(init.clone()).unwrap();
    let e0 = init
        .estimates()
        .iter()
        .zip(&problem.exact)
        .map(|(p, x)| (p.x - x.x).abs().max((p.y - x.y).abs()))
        .fold(0.0, f64::max);
    for seed in 0..10 {
        let s = random_schedule(seed, &problem.triangulation, 200, 3, 1, 0.5).unwrap();
        let cfg = RunConfig::new(Algorithm::AsDiloc, 0.5).max_iters(200).stop_on_convergence(false);
        let trace = run(&problem, &s, &cfg).unwrap();
        for t in [10, 50, 100, 200] {
            let norm = product_vanishing_check(&s, &problem.matrices, 0.5, t).unwrap();
            assert!(trace.errors[t] <= 3.0 * norm * e0, "t={t}: {} vs {}", trace.errors[t], norm * e0);
        }
    }
}
