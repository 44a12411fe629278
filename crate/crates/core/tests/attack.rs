use asdiloc::attack::{random_schedule, AttackSchedule};
use asdiloc::corpus;
use asdiloc::io::{read_trace_csv, trace_rows, write_trace_csv, ScheduleFile};
use asdiloc::localization::{run, Algorithm, Problem, RunConfig};
use proptest::prelude::*;

fn covered(s: &AttackSchedule, t: usize) -> bool {
    s.periods().iter().any(|p| p.start <= t && t <= p.start + p.dwell)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, rng_seed: proptest::test_runner::RngSeed::Fixed(21), ..ProptestConfig::default() })]

    #[test]
    fn masks_follow_active_periods(seed in any::<u64>(), dwell in 0usize..4, gap in 2usize..5, p in 0.0..=1.0f64) {
        let tri = corpus::example1().triangulation().clone();
        let s = random_schedule(seed, &tri, 60, dwell + gap, dwell, p).unwrap();
        for t in 0..60 {
            let mask = s.denial_mask(&tri, t).unwrap();
            if !covered(&s, t) {
                prop_assert!(mask.is_empty(), "t={} outside every period", t);
            }
            prop_assert_eq!(s.is_active(t).unwrap(), covered(&s, t));
            for (sensor, denied) in mask.iter() {
                let set = tri[&sensor];
                prop_assert!(denied.iter().all(|d| set.contains(d)));
            }
        }
        // p = 1 denies every arc throughout each period
        if p == 1.0 {
            for t in (0..60).filter(|&t| covered(&s, t)) {
                prop_assert_eq!(s.denial_mask(&tri, t).unwrap().iter().count(), 4);
            }
        }
    }

    #[test]
    fn random_schedules_are_reproducible(seed in any::<u64>(), p in 0.0..=1.0f64) {
        let tri = corpus::example1().triangulation().clone();
        let a = random_schedule(seed, &tri, 100, 3, 1, p).unwrap();
        let b = random_schedule(seed, &tri, 100, 3, 1, p).unwrap();
        prop_assert_eq!(
            ScheduleFile::explicit_from(&a).to_json(),
            ScheduleFile::explicit_from(&b).to_json()
        );
    }
}

#[test]
fn bundled_strategy_masks() {
    let tri = corpus::example1().triangulation().clone();
    let s1 = corpus::strategy1(30);
    let s2 = corpus::strategy2(30);
    for k in 0..10 {
        let t = 3 * k;
        let m = s1.denial_mask(&tri, t).unwrap();
        assert_eq!(m.iter().map(|(i, d)| (i.0, d.len())).collect::<Vec<_>>(), vec![(4, 3)]);
        let m = s1.denial_mask(&tri, t + 1).unwrap();
        assert_eq!(m.iter().map(|(i, d)| (i.0, d.len())).collect::<Vec<_>>(), vec![(7, 3)]);
        assert!(s1.denial_mask(&tri, t + 2).unwrap().is_empty());
        let m = s2.denial_mask(&tri, t).unwrap();
        assert_eq!(m.iter().map(|(i, d)| (i.0, d.len())).collect::<Vec<_>>(), vec![(4, 1), (5, 1), (7, 1)]);
        let m = s2.denial_mask(&tri, t + 1).unwrap();
        assert_eq!(m.iter().map(|(i, d)| (i.0, d.len())).collect::<Vec<_>>(), vec![(6, 1), (7, 2)]);
        assert!(s2.denial_mask(&tri, t + 2).unwrap().is_empty());
    }
}

#[test]
fn trace_csv_round_trips_exactly() {
    let p = Problem::from_scenario(&corpus::example1()).unwrap();
    let s = corpus::strategy2(400);
    let trace = run(&p, &s, &RunConfig::new(Algorithm::Diloc, 0.5).max_iters(400)).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf).unwrap();
    let parsed = read_trace_csv(buf.as_slice()).unwrap();
    let expected = trace_rows(&trace);
    assert_eq!(parsed.len(), expected.len());
    for (a, b) in parsed.iter().zip(&expected) {
        assert_eq!((a.t, a.sensor_id, a.masked), (b.t, b.sensor_id, b.masked));
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());
        assert_eq!(a.err_i.to_bits(), b.err_i.to_bits());
    }
}
