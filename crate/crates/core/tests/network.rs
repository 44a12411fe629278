use asdiloc::geometry::{distance, is_in_convex_hull, NeighborDistances};
use asdiloc::localization::exact_solution;
use asdiloc::network::{anchor_to_sensor_distance_bound, build_system_matrices, NetworkScenario, NodeId};
use asdiloc::{corpus, io::ScenarioFile};

fn random_scenarios() -> impl Iterator<Item = NetworkScenario> {
    // node counts 4..=30, i.e. 1..=27 sensors
    (0..50u64).map(|seed| {
        let sensors = 1 + (seed as usize * 7) % 27;
        NetworkScenario::random(seed, sensors, 0.5).unwrap()
    })
}

#[test]
fn exact_solution_recovers_ground_truth() {
    for s in random_scenarios() {
        let m = build_system_matrices(&s).unwrap();
        let x = exact_solution(&m, &s.anchor_positions()).unwrap();
        for (node, got) in s.sensors().iter().zip(&x) {
            assert!(
                distance(node.position, *got) < 1e-8,
                "sensor {:?} of a {}-node network: {:?} vs {:?}",
                node.id,
                s.node_count(),
                got,
                node.position
            );
        }
    }
}

#[test]
fn node_counts_cover_the_requested_range() {
    let counts: Vec<usize> = random_scenarios().map(|s| s.node_count()).collect();
    assert_eq!(counts.iter().min(), Some(&4));
    assert_eq!(counts.iter().max(), Some(&30));
}

#[test]
fn discovered_sets_contain_their_sensor() {
    for s in random_scenarios() {
        for (sensor, set) in s.triangulation() {
            let p = s.position(*sensor).unwrap();
            let pts = set.map(|id| s.position(id).unwrap());
            assert!(is_in_convex_hull(&NeighborDistances::from_points(p, pts)).unwrap());
            assert!(!set.contains(sensor));
        }
    }
}

#[test]
fn matrices_are_deterministic_from_bytes() {
    let text = serde_json::to_string(&ScenarioFile::from_scenario(&NetworkScenario::random(3, 12, 0.5).unwrap())).unwrap();
    let a = asdiloc::io::parse_scenario(&text, Default::default(), "a").unwrap();
    let b = asdiloc::io::parse_scenario(&text, Default::default(), "b").unwrap();
    let (ma, mb) = (build_system_matrices(&a).unwrap(), build_system_matrices(&b).unwrap());
    assert_eq!(ma.f.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), mb.f.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(ma.h.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), mb.h.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn example_one_structure() {
    let s = corpus::example1();
    assert_eq!(s.node_count(), 7);
    assert_eq!(anchor_to_sensor_distance_bound(&s).unwrap(), 2);
    let m = build_system_matrices(&s).unwrap();
    let row = m.row(NodeId(7)).unwrap();
    for (id, w) in row.neighbors {
        assert!([4, 5, 6].contains(&id.0));
        assert!((w - 1.0 / 3.0).abs() < 1e-12, "a_7{} = {w}", id.0);
    }
    for k in 0..4 {
        let total = m.f.row(k).sum() + m.h.row(k).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let x = exact_solution(&m, &s.anchor_positions()).unwrap();
    for (node, got) in s.sensors().iter().zip(&x) {
        assert!(distance(node.position, *got) < 1e-12);
    }
}
