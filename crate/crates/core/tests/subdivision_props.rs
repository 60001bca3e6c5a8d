use std::collections::BTreeSet;

use boxcov::cds::FnMap;
use boxcov::maps::ToyMap;
use boxcov::subdivision::{relative_attractor_with, subdivision_step};
use boxcov::{relative_attractor, BoxKey, BoxTree, Error, Rect, SubdivisionConfig, TestPoints};
use proptest::prelude::*;

fn keyset(tree: &BoxTree) -> BTreeSet<BoxKey> {
    tree.keys().copied().collect()
}

fn henon_domain() -> BoxTree {
    BoxTree::with_root_occupied(Rect::new(vec![0.0, 0.0], vec![1.5, 1.5]).unwrap())
}

#[test]
fn henon_volumes_never_grow() {
    let cfg = SubdivisionConfig {
        steps: 14,
        test_points: TestPoints::MonteCarlo(30),
        seed: 5,
        ..SubdivisionConfig::default()
    };
    let mut volumes = vec![henon_domain().volume()];
    let mut previous = henon_domain();
    relative_attractor_with(&henon_domain(), &ToyMap::HENON, &cfg, &mut |tree, stats| {
        volumes.push(tree.volume());
        assert_eq!(stats.boxes, tree.len());
        // Every kept box descends from a box of the previous covering.
        for key in tree.keys() {
            assert!(previous.contains_key(&key.parent().unwrap()));
        }
        previous = tree.clone();
    })
    .unwrap();
    for w in volumes.windows(2) {
        assert!(w[1] <= w[0], "{volumes:?}");
    }
}

#[test]
fn henon_covering_contains_the_fixed_point() {
    let cfg = SubdivisionConfig {
        steps: 16,
        test_points: TestPoints::MonteCarlo(40),
        seed: 1,
        ..SubdivisionConfig::default()
    };
    let tree = relative_attractor(&henon_domain(), &ToyMap::HENON, &cfg).unwrap();
    let x = ToyMap::henon_fixed_point(1.4, 0.3);
    let fixed = ToyMap::HENON.apply(&[x, x]);
    assert!((fixed[0] - x).abs() < 1e-14 && (fixed[1] - x).abs() < 1e-14);
    assert!(tree.occupied_key_at(&[x, x], 16).is_some());
}

#[test]
fn saddle_collapses_onto_the_unstable_axis() {
    let q = Rect::cube(vec![0.0, 0.0], 1.0).unwrap();
    let cfg = SubdivisionConfig {
        steps: 16,
        test_points: TestPoints::Grid(4),
        ..SubdivisionConfig::default()
    };
    let tree = relative_attractor(&BoxTree::with_root_occupied(q.clone()), &ToyMap::Saddle, &cfg).unwrap();
    // Level 16 boxes have radii 2^-8; the axis is covered by two rows.
    let r = 1.0 / 256.0;
    assert_eq!(tree.len(), 2 * 256);
    assert!((tree.volume() - 2.0 * 2.0 * 2.0 * r).abs() < 1e-12);
    for rect in tree.rects() {
        assert!(rect.lower(1) >= -2.0 * r - 1e-15 && rect.upper(1) <= 2.0 * r + 1e-15);
    }
    for i in 0..256 {
        let x = -1.0 + (2 * i + 1) as f64 * r;
        assert!(tree.occupied_key_at(&[x, 0.0], 16).is_some());
    }
}

#[test]
fn identity_keeps_every_box() {
    let q = Rect::cube(vec![0.0; 3], 1.0).unwrap();
    let cfg = SubdivisionConfig {
        steps: 6,
        test_points: TestPoints::Grid(1),
        ..SubdivisionConfig::default()
    };
    let tree = relative_attractor(
        &BoxTree::with_root_occupied(q.clone()),
        &ToyMap::Identity { dim: 3 },
        &cfg,
    )
    .unwrap();
    assert_eq!(tree.len(), 64);
    assert!((tree.volume() - q.volume()).abs() < 1e-12);
}

#[test]
fn escaping_map_empties_the_covering() {
    let escape = FnMap::new(2, |x: &[f64]| vec![x[0] + 10.0, x[1]]);
    let cfg = SubdivisionConfig {
        steps: 2,
        ..SubdivisionConfig::default()
    };
    let q = Rect::cube(vec![0.0, 0.0], 1.0).unwrap();
    let err = relative_attractor(&BoxTree::with_root_occupied(q), &escape, &cfg).unwrap_err();
    assert!(matches!(err, Error::EmptyCovering(_)));
}

#[test]
fn results_do_not_depend_on_the_pool_size() {
    let cfg = SubdivisionConfig {
        steps: 12,
        test_points: TestPoints::MonteCarlo(20),
        seed: 77,
        ..SubdivisionConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| relative_attractor(&henon_domain(), &ToyMap::HENON, &cfg).unwrap())
    };
    let a = run(1);
    let b = run(3);
    assert_eq!(keyset(&a), keyset(&b));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Grid(3n) contains the midpoints of Grid(n), so it can only select more.
    #[test]
    fn more_test_points_select_a_superset(n in 1usize..4, steps in 1u32..9, a in 1.2f64..1.4) {
        let map = ToyMap::Henon { a, b: 0.3 };
        let coarse = SubdivisionConfig { steps, test_points: TestPoints::Grid(n), ..SubdivisionConfig::default() };
        let fine = SubdivisionConfig { test_points: TestPoints::Grid(3 * n), ..coarse.clone() };
        let small = relative_attractor(&henon_domain(), &map, &coarse);
        let big = relative_attractor(&henon_domain(), &map, &fine).unwrap();
        if let Ok(small) = small {
            prop_assert!(keyset(&small).is_subset(&keyset(&big)));
        }
    }

    #[test]
    fn one_step_selects_among_children(seed in any::<u64>()) {
        let tree = henon_domain();
        let cfg = SubdivisionConfig { test_points: TestPoints::MonteCarlo(10), seed, ..SubdivisionConfig::default() };
        let (next, stats) = subdivision_step(&tree, &ToyMap::HENON, &cfg, 0).unwrap();
        prop_assert_eq!(stats.level, 1);
        prop_assert_eq!(stats.evaluations, 20);
        prop_assert!(next.len() <= 2);
        prop_assert!(next.keys().all(|k| k.level() == 1));
    }
}
