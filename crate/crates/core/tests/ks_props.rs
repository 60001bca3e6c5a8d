use boxcov::ks::{ks_grid, KsParams, KsSolver};
use boxcov::FlowMap;
use proptest::prelude::*;

fn smooth_state(n: usize, coeffs: &[(f64, f64)]) -> Vec<f64> {
    ks_grid(n)
        .iter()
        .map(|y| {
            coeffs
                .iter()
                .enumerate()
                .map(|(q, (a, b))| a * ((q + 1) as f64 * y).cos() + b * ((q + 1) as f64 * y).sin())
                .sum()
        })
        .collect()
}

fn final_state(solver: &KsSolver, u0: &[f64], t: f64) -> Vec<f64> {
    solver.trajectory(u0, &[t]).unwrap().pop().unwrap()
}

// Amplitude of sin(q y) by trapezoidal quadrature, exact for trigonometric
// polynomials below the Nyquist mode.
fn sine_amplitude(u: &[f64], q: usize) -> f64 {
    let ys = ks_grid(u.len());
    2.0 / u.len() as f64 * u.iter().zip(&ys).map(|(v, y)| v * (q as f64 * y).sin()).sum::<f64>()
}

fn coeff_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-0.5f64..0.5, -0.5f64..0.5), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn equivariant_under_grid_shifts(coeffs in coeff_strategy(), shift in 1usize..128) {
        let solver = KsSolver::new(KsParams::default()).unwrap();
        let n = 128;
        let u0 = smooth_state(n, &coeffs);
        let shifted: Vec<f64> = (0..n).map(|j| u0[(j + shift) % n]).collect();
        let a = final_state(&solver, &u0, 1.0);
        let b = final_state(&solver, &shifted, 1.0);
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            prop_assert!((b[j] - a[(j + shift) % n]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn equivariant_under_reflection(coeffs in coeff_strategy()) {
        let solver = KsSolver::new(KsParams::default()).unwrap();
        let n = 128;
        let u0 = smooth_state(n, &coeffs);
        let reflect = |u: &[f64]| -> Vec<f64> { (0..n).map(|j| u[(n - j) % n]).collect() };
        let a = final_state(&solver, &u0, 1.0);
        let b = final_state(&solver, &reflect(&u0), 1.0);
        let ra = reflect(&a);
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            prop_assert!((b[j] - ra[j]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn mean_is_conserved(coeffs in coeff_strategy(), c in -2.0f64..2.0) {
        let solver = KsSolver::new(KsParams::default()).unwrap();
        let u0: Vec<f64> = smooth_state(128, &coeffs).iter().map(|v| v + c).collect();
        let u = final_state(&solver, &u0, 2.0);
        let mean = u.iter().sum::<f64>() / 128.0;
        prop_assert!((mean - c).abs() <= 1e-12);
    }
}

#[test]
fn zero_is_a_steady_state() {
    let solver = KsSolver::new(KsParams::with_mu(32.0)).unwrap();
    let u = final_state(&solver, &vec![0.0; 128], 5.0);
    assert!(u.iter().all(|v| *v == 0.0));
}

#[test]
fn tiny_modes_follow_the_linearization() {
    // At amplitude 1e-12 the quadratic term is ~1e-12 of the linear one.
    for mu in [15.0, 18.0] {
        let p = KsParams::with_mu(mu);
        let solver = KsSolver::new(p).unwrap();
        for q in [1usize, 2] {
            let u0: Vec<f64> = ks_grid(128).iter().map(|y| 1e-12 * (q as f64 * y).sin()).collect();
            let u = final_state(&solver, &u0, 0.5);
            let expect = 1e-12 * (p.growth_rate(q as f64) * 0.5).exp();
            let rel = (sine_amplitude(&u, q) - expect).abs() / expect;
            assert!(rel <= 1e-6, "mu={mu} q={q}: rel {rel:e}");
        }
    }
}

#[test]
fn decaying_mode_decays_at_the_linear_rate() {
    // mu = 15, q = 3: rate -4*81 + 135 = -189.
    let p = KsParams::default();
    let solver = KsSolver::new(p).unwrap();
    let u0: Vec<f64> = ks_grid(128).iter().map(|y| 1e-3 * (3.0 * y).sin()).collect();
    let u = final_state(&solver, &u0, 0.05);
    let expect = 1e-3 * (p.growth_rate(3.0) * 0.05).exp();
    let rel = (sine_amplitude(&u, 3) - expect).abs() / expect;
    assert!(rel <= 1e-4, "rel {rel:e}");
}

#[test]
fn output_times_are_visited_in_order() {
    let solver = KsSolver::new(KsParams::default()).unwrap();
    let u0 = smooth_state(128, &[(0.1, 0.2)]);
    let times = [0.0, 0.5, 0.5, 1.0];
    let out = solver.trajectory(&u0, &times).unwrap();
    assert_eq!(out.len(), 4);
    assert_eq!(out[0], u0);
    assert_eq!(out[1], out[2]);
    assert_eq!(out[3], final_state(&solver, &u0, 1.0));
    assert!(solver.trajectory(&u0, &[1.0, 0.5]).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(KsSolver::new(KsParams {
        n: 100,
        ..KsParams::default()
    })
    .is_err());
    assert!(KsSolver::new(KsParams {
        h: 0.0,
        ..KsParams::default()
    })
    .is_err());
    assert!(KsSolver::new(KsParams {
        mu: -1.0,
        ..KsParams::default()
    })
    .is_err());
}

#[test]
fn blow_up_is_reported_as_a_model_error() {
    let solver = KsSolver::new(KsParams {
        mu: 32.0,
        h: 0.05,
        ..KsParams::default()
    })
    .unwrap();
    let u0 = smooth_state(128, &[(1.0, 0.5), (0.3, 0.0)]);
    let err = solver.trajectory(&u0, &[50.0]).unwrap_err();
    assert!(err.time > 0.0 && err.time <= 50.0);
}
