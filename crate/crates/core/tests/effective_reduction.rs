use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use spinlock::effective::yb::{rabi_ladder, validate_reduction, YbParams};
use spinlock::quantum::DensityMatrix;

fn plus_state() -> DensityMatrix {
    let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    DensityMatrix::pure(&[a, a]).unwrap()
}

#[test]
fn reference_scheme_reduces_to_a_qubit() {
    let scheme = YbParams::default().scheme().unwrap();
    for rho in [plus_state(), DensityMatrix::basis(2, 1).unwrap(), DensityMatrix::basis(2, 0).unwrap()] {
        let r = validate_reduction(&scheme, &rho, 400e-6, 0.5e-6).unwrap();
        assert!(r.max_bloch_deviation <= 0.03);
        assert!(r.max_mz_deviation <= 0.03);
        assert!(r.final_qubit_population >= 0.95);
        assert!(r.warnings.is_empty());
        assert!((r.effective_rates.gamma_g() / TAU - 1.27e3).abs() < 5.0);
    }
}

#[test]
fn deviation_scales_with_beam_intensity() {
    let (devs, slope) =
        rabi_ladder(&YbParams::default(), &[1.0, 0.5, 0.25], &DensityMatrix::basis(2, 1).unwrap(), 400e-6, 0.5e-6).unwrap();
    assert!((slope - 2.0).abs() < 0.3, "slope {slope}, deviations {devs:?}");
    assert!(devs[1] < devs[0] && devs[2] < devs[1]);
}

#[test]
fn dark_beams_give_identical_dynamics() {
    let scheme = YbParams::default().with_rabi(0.0, 0.0).scheme().unwrap();
    let r = validate_reduction(&scheme, &plus_state(), 50e-6, 0.5e-6).unwrap();
    assert!(r.max_bloch_deviation < 1e-6, "{}", r.max_bloch_deviation);
    assert_eq!(r.effective_rates.gamma_t(), 0.0);
}
