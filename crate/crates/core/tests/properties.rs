mod oracle;

use std::f64::consts::PI;

use proptest::prelude::*;
use spacs_core::dataset::{default_phase_grid, sample_dataset, QuadratureDataset};
use spacs_core::estimator::{estimate, EstimatorOptions, Family};
use spacs_core::fidelity::theoretical_traces;
use spacs_core::fock::{apply_loss, spacs_state, sub_fidelity_exact, trace_functionals};
use spacs_core::overlap::IntegrationConfig;
use spacs_core::{Tomogram, TomogramModel};

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tomogram_is_nonnegative(a in 0.0..3.0f64, phi in 0.0..2.0 * PI, eta in 0.01..1.0f64,
                               x in -8.0..8.0f64, theta in 0.0..2.0 * PI) {
        let m = TomogramModel::spacs(a, phi, eta).unwrap();
        prop_assert!(m.density(x, theta) >= 0.0);
    }

    #[test]
    fn fock_tomogram_matches_independent_oracle(a in 0.0..2.0f64, phi in 0.0..2.0 * PI, eta in 0.05..1.0f64,
                                                x in -5.0..5.0f64, theta in 0.0..2.0 * PI) {
        let m = TomogramModel::spacs(a, phi, eta).unwrap();
        let rho = oracle::spacs(a, phi, eta);
        prop_assert!((m.density(x, theta) - oracle::tomogram(&rho, x, theta)).abs() < 1e-10);
    }

    #[test]
    fn loss_matches_independent_oracle(a in 0.0..2.0f64, phi in 0.0..2.0 * PI, eta in 0.05..1.0f64) {
        let ours = apply_loss(&spacs_state(num_complex::Complex64::from_polar(a, phi), 40).unwrap(), eta).unwrap();
        let reference = oracle::lossy(&oracle::projector(&oracle::spacs_amplitudes(a, phi, 41)), eta);
        let diff = (ours.as_matrix() - reference).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-12);
    }

    #[test]
    fn sub_fidelity_never_exceeds_one(a1 in 0.0..2.0f64, e1 in 0.1..1.0f64, a2 in 0.0..2.0f64, e2 in 0.1..1.0f64,
                                      phi in 0.0..2.0 * PI) {
        let r1 = apply_loss(&spacs_state(num_complex::Complex64::new(a1, 0.0), 45).unwrap(), e1).unwrap();
        let r2 = apply_loss(&spacs_state(num_complex::Complex64::from_polar(a2, phi), 45).unwrap(), e2).unwrap();
        let f = trace_functionals(&r1, &r2).unwrap();
        prop_assert!(f.overlap <= 1.0 + 1e-12);
        prop_assert!(sub_fidelity_exact(&r1, &r2).unwrap() <= 1.0 + 1e-9);
    }
}

#[test]
fn fourth_power_trace_below_squared_purity_on_grid() {
    for i in 0..20 {
        for j in 0..20 {
            let a = 3.0 * i as f64 / 19.0;
            let eta = 0.01 + 0.99 * j as f64 / 19.0;
            let t = theoretical_traces(a, eta);
            assert!(t.four_th <= t.purity_th * t.purity_th + 1e-15, "a={a} eta={eta}");
            assert!(t.purity_th <= 1.0 + 1e-15 && t.purity_th >= 0.5 - 1e-15);
        }
    }
}

#[test]
fn purity_grows_with_amplitude() {
    for eta in [0.1, 0.3, 0.58, 0.9] {
        let mut last = 0.0;
        for k in 0..=40 {
            let p = theoretical_traces(0.1 * k as f64, eta).purity_th;
            assert!(p >= last - 1e-15);
            last = p;
        }
    }
}

fn fit(data: &QuadratureDataset) -> (f64, f64, f64) {
    let r = estimate(data, Family::Spacs, &IntegrationConfig::default(), &EstimatorOptions::default()).unwrap();
    let p = r.spacs_params();
    (p.abs_alpha, p.phi, p.eta)
}

fn synthetic(seed: u64) -> QuadratureDataset {
    let model = TomogramModel::spacs(0.81, 3.14, 0.58).unwrap();
    sample_dataset(&model, &default_phase_grid(21), 5321, seed).unwrap()
}

#[test]
fn estimator_is_deterministic() {
    let data = synthetic(21);
    assert_eq!(fit(&data), fit(&data));
}

#[test]
fn estimator_follows_a_phase_shift() {
    let data = synthetic(22);
    let (a, phi, eta) = fit(&data);
    let delta = 0.7;
    let (a2, phi2, eta2) = fit(&data.with_shifted_phases(delta).unwrap());
    assert!((a - a2).abs() < 1e-3, "{a} vs {a2}");
    assert!((eta - eta2).abs() < 1e-3, "{eta} vs {eta2}");
    assert!(circular_distance(phi + delta, phi2) < 1e-3, "{phi} + {delta} vs {phi2}");
}

#[test]
fn estimator_follows_a_reflection() {
    let data = synthetic(23);
    let (a, phi, eta) = fit(&data);
    let (a2, phi2, eta2) = fit(&data.negated());
    assert!((a - a2).abs() < 1e-3, "{a} vs {a2}");
    assert!((eta - eta2).abs() < 1e-3, "{eta} vs {eta2}");
    assert!(circular_distance(phi + PI, phi2) < 1e-3, "{phi} + π vs {phi2}");
}

#[test]
fn estimator_is_consistent() {
    let model = TomogramModel::spacs(0.81, 3.14, 0.58).unwrap();
    let data = sample_dataset(&model, &default_phase_grid(21), 50_000, 24).unwrap();
    let (a, phi, eta) = fit(&data);
    assert!((a - 0.81).abs() < 0.03, "{a}");
    assert!((eta - 0.58).abs() < 0.03, "{eta}");
    assert!(circular_distance(phi, 3.14) < 0.1, "{phi}");
}
