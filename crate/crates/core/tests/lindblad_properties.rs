use std::f64::consts::TAU;

use proptest::prelude::*;
use spinlock::lindblad::{integrate_with, rhs, steady_state, IntegrationOptions, Recording, Stepper};
use spinlock::quantum::{bloch_from_rho, rho_from_bloch, BlochVector};
use spinlock::sync::{build_rotating_model, reference_rates, steady_bloch, DriveParams, RateSet};
use spinlock::units::two_pi_khz;

fn rates() -> impl Strategy<Value = RateSet> {
    (0.1f64..10.0, 0.1f64..10.0, 0.1f64..10.0)
        .prop_map(|(g, d, z)| RateSet::new(two_pi_khz(g), two_pi_khz(d), two_pi_khz(z)).unwrap())
}

fn bloch_ball() -> impl Strategy<Value = BlochVector> {
    (0.0f64..1.0, -1.0f64..1.0, 0.0f64..TAU).prop_map(|(r, z, phi)| {
        let (r, t) = (r.cbrt(), (1.0 - z * z).sqrt());
        BlochVector::new(r * t * phi.cos(), r * t * phi.sin(), r * z)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn analytic_and_numeric_steady_states_agree(
        r in rates(), eps in 0.0f64..30.0, delta in -30.0f64..30.0, phi in 0.0f64..TAU,
    ) {
        let g = r.gamma_g();
        let d = DriveParams::new(eps * g, delta * g, phi).unwrap();
        let model = build_rotating_model(&r, &d);
        let rho = steady_state(&model).unwrap();
        let numeric = bloch_from_rho(&rho).unwrap();
        prop_assert!(steady_bloch(&r, &d).unwrap().max_abs_diff(&numeric) < 1e-8);
        let scale = r.gamma_t().max(eps * g).max(delta.abs() * g);
        prop_assert!(rhs(&model, &rho, 0.0).unwrap().max_abs() / scale < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matrix_rk4_preserves_state_properties(
        r in rates(), eps in 0.0f64..30.0, delta in -30.0f64..30.0, m in bloch_ball(),
    ) {
        let g = r.gamma_g();
        let model = build_rotating_model(&r, &DriveParams::new(eps * g, delta * g, 0.7).unwrap());
        let rho0 = rho_from_bloch(m).unwrap();
        let opts = IntegrationOptions::new(1e-7).record_every(100).stepper(Stepper::Matrix);
        let traj = integrate_with(&model, &rho0, (0.0, 2e-3), &opts).unwrap();
        for rho in traj.states() {
            let tr = rho.matrix().trace();
            prop_assert!((tr.re - 1.0).abs() <= 1e-9 && tr.im.abs() <= 1e-9);
            prop_assert!(rho.matrix().hermiticity_error() <= 1e-12);
            prop_assert!(rho.min_eigenvalue() >= -1e-8);
        }
    }
}

#[test]
fn million_step_trajectory_stays_physical() {
    let r = reference_rates();
    let g = r.gamma_g();
    let model = build_rotating_model(&r, &DriveParams::new(12.0 * g, -4.0 * g, 1.1).unwrap());
    let rho0 = rho_from_bloch(BlochVector::new(0.6, -0.3, 0.7)).unwrap();
    let opts = IntegrationOptions::new(1e-8).record_every(5_000).stepper(Stepper::Matrix);
    let traj = integrate_with(&model, &rho0, (0.0, 1e-2), &opts).unwrap();
    assert_eq!(traj.len(), 201);
    for rho in traj.states() {
        assert!((rho.matrix().trace().re - 1.0).abs() <= 1e-9);
        assert!(rho.matrix().hermiticity_error() <= 1e-12);
        assert!(rho.min_eigenvalue() >= -1e-8);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let r = reference_rates();
    let g = r.gamma_g();
    let model = build_rotating_model(&r, &DriveParams::new(10.0 * g, 3.0 * g, 0.4).unwrap());
    let rho0 = rho_from_bloch(BlochVector::new(0.0, 0.0, 1.0)).unwrap();
    let t = 100e-6;
    let end = |dt: f64| {
        let opts = IntegrationOptions::new(dt).recording(Recording::BlochOnly).stepper(Stepper::Matrix);
        integrate_with(&model, &rho0, (0.0, t), &opts).unwrap().final_state().clone()
    };
    let dt = t / 50.0;
    let reference = end(dt / 64.0);
    let err = |dt: f64| end(dt).matrix().max_abs_diff(reference.matrix()).unwrap();
    let (e1, e2) = (err(dt), err(dt / 2.0));
    assert!(e1 / e2 >= 8.0, "error ratio {}", e1 / e2);
    assert!((e1 / e2).log2() > 3.7);
}

#[test]
fn long_integration_reaches_the_steady_state() {
    let r = reference_rates();
    let slowest = r.gamma_g().min(r.gamma_d()).min(r.gamma_z());
    for (eps, delta) in [(0.0, 0.0), (1.87, 0.0), (3.75, 2.0), (28.7, -5.0)] {
        let d = DriveParams::new(eps * r.gamma_g(), delta * r.gamma_g(), 0.5).unwrap();
        let model = build_rotating_model(&r, &d);
        let rho0 = rho_from_bloch(BlochVector::new(0.0, 0.0, 1.0)).unwrap();
        let opts = IntegrationOptions::new(1e-7).recording(Recording::BlochOnly);
        let traj = integrate_with(&model, &rho0, (0.0, 20.0 / slowest), &opts).unwrap();
        let numeric = bloch_from_rho(&steady_state(&model).unwrap()).unwrap();
        let end = bloch_from_rho(traj.final_state()).unwrap();
        assert!(end.sub(&numeric).norm() < 1e-6, "ε = {eps}: {}", end.sub(&numeric).norm());
    }
}
