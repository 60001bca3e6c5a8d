use std::sync::Arc;

use boxcov::cds::{
    sample_points, stream_seed, time_grid, ExtensionMap, FlowMap, ObservationMap, PodExtension, PodObservation,
    TailPolicy,
};
use boxcov::mackeyglass::{DelayObservation, MgParams, SplineExtension};
use boxcov::pod::{compute_basis, SnapshotMatrix, SpatialGrid};
use boxcov::{BoxKey, BoxPayload, CoreDynamicalSystem, ModelError, ObservedMap, Rect, StoredSample};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_basis(n: usize, modes: usize, seed: u64) -> Arc<boxcov::pod::PodBasis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DMatrix::from_fn(n, 3 * modes, |_, _| rng.random_range(-1.0..1.0));
    let snap = SnapshotMatrix::new(SpatialGrid::periodic(n, 2.0 * std::f64::consts::PI), data).unwrap();
    Arc::new(compute_basis(&snap, modes).unwrap())
}

#[test]
fn pod_round_trip_on_many_points() {
    let basis = random_basis(64, 13, 3);
    let k = 5;
    let r = PodObservation::new(basis.clone(), k).unwrap();
    let e = PodExtension::new(basis.clone(), k, TailPolicy::Statistical).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..k).map(|_| rng.random_range(-8.0..8.0)).collect();
        let t: Vec<f64> = (0..e.tail_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let state = e.extend(&x, Some(&t)).unwrap();
        let back = r.observe(&state).unwrap();
        let tail = r.observe_tail(&state).unwrap();
        for (a, b) in back.iter().zip(&x).chain(tail.iter().zip(&t)) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-12, "worst deviation {worst:e}");
}

#[test]
fn delay_round_trip_on_many_points() {
    for k in [2, 3, 4, 7] {
        let params = MgParams {
            k,
            ..MgParams::default()
        };
        let r = DelayObservation::new(&params).unwrap();
        let e = SplineExtension::new(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
            let back = r.observe(&e.extend(&x, None).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() <= 1e-12, "k={k}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn spline_reproduces_cubics() {
    // A not-a-knot spline is exact on cubic polynomials.
    let params = MgParams {
        k: 7,
        ..MgParams::default()
    };
    let flow = boxcov::mackeyglass::MgFlow::new(params).unwrap();
    let e = SplineExtension::new(&params).unwrap();
    let f = |t: f64| 0.3 - 0.5 * t + 0.2 * t * t + 0.7 * t * t * t;
    let nodes: Vec<f64> = (0..7).map(|j| f(-2.0 + j as f64 * 2.0 / 6.0)).collect();
    let history = e.extend(&nodes, None).unwrap();
    for (h, t) in history.iter().zip(flow.history_times()) {
        assert!((h - f(t)).abs() <= 1e-12, "t={t}: {h} vs {}", f(t));
    }
}

#[test]
fn mismatched_tail_policy_is_rejected() {
    let basis = random_basis(32, 8, 1);
    let zero = PodExtension::new(basis.clone(), 3, TailPolicy::Zero).unwrap();
    assert!(zero.extend(&[0.0; 3], Some(&[0.0; 5])).is_err());
    let stat = PodExtension::new(basis.clone(), 3, TailPolicy::Statistical).unwrap();
    assert!(stat.extend(&[0.0; 3], None).is_err());
    assert!(PodObservation::new(basis, 9).is_err());
}

/// `u_i' = -c_i u_i`, integrated exactly.
struct Decay(Vec<f64>);

impl FlowMap for Decay {
    fn state_len(&self) -> usize {
        self.0.len()
    }

    fn integrate(&self, state: &[f64], times: &[f64], visit: &mut dyn FnMut(usize, &[f64])) -> Result<(), ModelError> {
        for (i, t) in times.iter().enumerate() {
            let u: Vec<f64> = state.iter().zip(&self.0).map(|(u, c)| u * (-c * t).exp()).collect();
            visit(i, &u);
        }
        Ok(())
    }
}

struct Head(usize);

impl ObservationMap for Head {
    fn dim(&self) -> usize {
        self.0
    }

    fn observe(&self, state: &[f64]) -> boxcov::Result<Vec<f64>> {
        Ok(state[..self.0].to_vec())
    }
}

struct Pad(usize, usize);

impl ExtensionMap for Pad {
    fn dim(&self) -> usize {
        self.0
    }

    fn extend(&self, head: &[f64], _tail: Option<&[f64]>) -> boxcov::Result<Vec<f64>> {
        let mut u = head.to_vec();
        u.resize(self.1, 0.0);
        Ok(u)
    }
}

#[test]
fn composed_map_matches_closed_form() {
    let rates = vec![0.5, -0.2, 1.0, 3.0];
    let cds = CoreDynamicalSystem::new(Decay(rates.clone()), Head(2), Pad(2, 4), 1.5, 6).unwrap();
    let x = [0.7, -1.1];
    let eval = cds.evaluate(&x, &[], true).unwrap();
    for i in 0..2 {
        let expect = x[i] * (-rates[i] * 1.5).exp();
        assert!((eval.image[i] - expect).abs() <= 1e-14);
    }
    let times = time_grid(1.5, 6);
    assert_eq!(eval.path.len(), 5);
    for (sample, t) in eval.path.iter().zip(&times) {
        assert!((sample.head[0] - x[0] * (-rates[0] * t).exp()).abs() <= 1e-14);
    }
    let plain = cds.evaluate(&x, &[], false).unwrap();
    assert_eq!(plain.image, eval.image);
    assert!(plain.path.is_empty());
}

#[test]
fn dimension_mismatch_is_rejected() {
    assert!(CoreDynamicalSystem::new(Decay(vec![1.0; 3]), Head(2), Pad(3, 3), 1.0, 1).is_err());
    assert!(CoreDynamicalSystem::new(Decay(vec![1.0; 3]), Head(2), Pad(2, 3), 0.0, 1).is_err());
}

#[test]
fn time_grid_ends_at_horizon() {
    let g = time_grid(200.0, 7);
    assert_eq!(g.len(), 7);
    assert_eq!(*g.last().unwrap(), 200.0);
    assert!(g.windows(2).all(|w| w[0] < w[1]));
}

fn payload(tails: &[[f64; 2]]) -> BoxPayload {
    BoxPayload {
        samples: tails
            .iter()
            .map(|t| StoredSample {
                head: vec![0.1, 0.1],
                tail: t.to_vec(),
            })
            .collect(),
        ..BoxPayload::default()
    }
}

#[test]
fn stored_samples_come_first_then_statistical_tails() {
    let rect = Rect::cube(vec![0.0, 0.0], 1.0).unwrap();
    let p = payload(&[[1.0, -2.0], [3.0, -2.0], [2.0, -2.0]]);
    let s = sample_points(&rect, &p, 2000, 2, 2, 9);
    assert_eq!(s.stored, 3);
    assert_eq!(s.zero_tail_fallbacks, 0);
    assert_eq!(s.points[0].tail, vec![1.0, -2.0]);
    assert_eq!(s.points[2].tail, vec![2.0, -2.0]);
    let fresh = &s.points[3..];
    assert!(fresh.iter().all(|p| rect.contains(&p.head)));
    // Zero-variance coordinate stays at its mean.
    assert!(fresh.iter().all(|p| p.tail[1] == -2.0));
    let mean = fresh.iter().map(|p| p.tail[0]).sum::<f64>() / fresh.len() as f64;
    let var = fresh.iter().map(|p| (p.tail[0] - mean).powi(2)).sum::<f64>() / fresh.len() as f64;
    assert!((mean - 2.0).abs() < 0.08, "mean {mean}");
    assert!((var - 2.0 / 3.0).abs() < 0.08, "var {var}");
}

#[test]
fn sparse_boxes_fall_back_to_zero_tails() {
    let rect = Rect::cube(vec![0.0, 0.0], 1.0).unwrap();
    let s = sample_points(&rect, &payload(&[[1.0, 1.0]]), 10, 2, 2, 9);
    assert_eq!(s.zero_tail_fallbacks, 9);
    assert!(s.points[1..].iter().all(|p| p.tail == vec![0.0, 0.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_deterministic(seed in any::<u64>(), path in 0u128..1024, step in 0u64..50) {
        let key = BoxKey::from_path(10, path).unwrap();
        let rect = Rect::cube(vec![0.0, 0.0], 1.0).unwrap();
        let p = payload(&[[1.0, 0.0], [0.5, 0.2]]);
        let s1 = stream_seed(seed, &key, step);
        prop_assert_eq!(s1, stream_seed(seed, &key, step));
        prop_assert_ne!(s1, stream_seed(seed, &key, step + 1));
        let a = sample_points(&rect, &p, 20, 2, 2, s1);
        let b = sample_points(&rect, &p, 20, 2, 2, s1);
        prop_assert_eq!(a, b);
    }
}
