use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::{Hamiltonian, OpenSystemModel};
use crate::error::{Error, Result};
use crate::quantum::{ComplexMatrix, DensityMatrix};

/// Relative gap required between the smallest and second-smallest singular
/// values of the Liouvillian.
pub const UNIQUENESS_TOL: f64 = 1e-8;

/// Liouvillian of a time-independent model acting on row-major `vec(ρ)`,
/// so that `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
pub fn liouvillian(model: &OpenSystemModel) -> Result<DMatrix<C64>> {
    let h = match model.hamiltonian() {
        Hamiltonian::Constant(h) => h.to_nalgebra(),
        _ => return Err(Error::TimeDependentModel),
    };
    let n = model.dim();
    let id = DMatrix::<C64>::identity(n, n);
    let minus_i = C64::new(0.0, -1.0);
    let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * minus_i;
    for term in model.terms() {
        if term.rate == 0.0 {
            continue;
        }
        let a = term.jump.to_nalgebra();
        let ada = a.adjoint() * &a;
        let d = a.kronecker(&a.conjugate())
            - ada.kronecker(&id) * C64::new(0.5, 0.0)
            - id.kronecker(&ada.transpose()) * C64::new(0.5, 0.0);
        l += d * C64::new(term.rate, 0.0);
    }
    Ok(l)
}

/// Unique stationary state from a least-squares solve of `L vec(ρ) = 0`
/// stacked with `Tr ρ = 1`.
pub fn steady_state(model: &OpenSystemModel) -> Result<DensityMatrix> {
    let l = liouvillian(model)?;
    let n = model.dim();
    let n2 = n * n;
    let scale = l.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
    if scale == 0.0 {
        if n == 1 {
            return DensityMatrix::basis(1, 0);
        }
        return Err(Error::NonUniqueSteadyState { ratio: 0.0 });
    }
    let l = l / C64::new(scale, 0.0);

    let mut sv: Vec<f64> = l.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    if n2 >= 2 {
        let ratio = sv[1] / sv[n2 - 1];
        if !(ratio > UNIQUENESS_TOL) {
            return Err(Error::NonUniqueSteadyState { ratio });
        }
    }

    let mut a = DMatrix::<C64>::zeros(n2 + 1, n2);
    a.view_mut((0, 0), (n2, n2)).copy_from(&l);
    for i in 0..n {
        a[(n2, i * n + i)] = C64::new(1.0, 0.0);
    }
    let mut b = DVector::<C64>::zeros(n2 + 1);
    b[n2] = C64::new(1.0, 0.0);
    let svd = a.clone().svd(true, true);
    let solve = |rhs: &DVector<C64>| {
        svd.solve(rhs, 1e-14).map_err(|e| Error::DegenerateModel(format!("steady-state solve failed: {e}")))
    };
    // One step of iterative refinement; the plain solve leaves residuals near 1e-9.
    let mut x = solve(&b)?;
    let r = &b - &a * &x;
    x += solve(&r)?;

    let rho = ComplexMatrix::from_row_major(x.iter().copied().collect())?.hermitian_part();
    let tr = rho.trace().re;
    DensityMatrix::new(rho.scale_real(1.0 / tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{rhs, LindbladTerm};
    use crate::quantum::{bloch_from_rho, pauli, sigma_phi, Pauli};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn khz(f: f64) -> f64 {
        TAU * 1e3 * f
    }

    fn model(delta: f64, eps: f64, phi: f64, gg: f64, gd: f64, gz: f64) -> OpenSystemModel {
        let h = &pauli(Pauli::Z).scale_real(0.5 * delta) + &sigma_phi(phi).scale_real(0.5 * eps);
        OpenSystemModel::time_independent(
            h,
            vec![
                LindbladTerm::new(pauli(Pauli::Plus), gg / 2.0).unwrap(),
                LindbladTerm::new(pauli(Pauli::Minus), gd / 2.0).unwrap(),
                LindbladTerm::new(pauli(Pauli::Z), gz / 2.0).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn liouvillian_matches_rhs() {
        let m = model(khz(2.0), khz(3.0), 0.7, khz(1.0), khz(2.0), khz(0.5));
        let l = liouvillian(&m).unwrap();
        let rho = crate::quantum::rho_from_bloch(crate::quantum::BlochVector::new(0.2, -0.3, 0.4)).unwrap();
        let v = DVector::from_row_slice(rho.matrix().as_slice());
        let lv = &l * v;
        let direct = rhs(&m, &rho, 0.0).unwrap();
        for (a, b) in lv.iter().zip(direct.as_slice()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn undriven_steady_state_is_limit_cycle() {
        let (gg, gd) = (khz(1.27), khz(7.33));
        let rho = steady_state(&model(0.0, 0.0, 0.0, gg, gd, khz(4.42))).unwrap();
        let m = bloch_from_rho(&rho).unwrap();
        assert!(m.max_abs_diff(&crate::quantum::BlochVector::new(0.0, 0.0, (gg - gd) / (gg + gd))) < 1e-10);
    }

    #[test]
    fn balanced_rates_give_mixed_state() {
        let rho = steady_state(&model(0.0, khz(3.0), FRAC_PI_2, khz(2.0), khz(2.0), khz(1.0))).unwrap();
        assert!(bloch_from_rho(&rho).unwrap().norm() < 1e-10);
    }

    #[test]
    fn residual_vanishes() {
        let m = model(khz(1.0), khz(2.37), FRAC_PI_2, khz(1.27), khz(7.33), khz(4.42));
        let rho = steady_state(&m).unwrap();
        assert!(rhs(&m, &rho, 0.0).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn degenerate_models_are_rejected() {
        let coherent_only = model(khz(1.0), 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(steady_state(&coherent_only), Err(Error::NonUniqueSteadyState { .. })));
        let dephasing_only = model(0.0, 0.0, 0.0, 0.0, 0.0, khz(1.0));
        assert!(matches!(steady_state(&dephasing_only), Err(Error::NonUniqueSteadyState { .. })));
        let empty = model(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(steady_state(&empty), Err(Error::NonUniqueSteadyState { .. })));
    }

    #[test]
    fn time_dependent_model_is_rejected() {
        let m = OpenSystemModel::new(
            Hamiltonian::Harmonic {
                base: pauli(Pauli::Z),
                coupling: pauli(Pauli::X),
                omega: 1.0,
                phase: 0.0,
                start: 0.0,
            },
            vec![],
        )
        .unwrap();
        assert!(matches!(steady_state(&m), Err(Error::TimeDependentModel)));
    }
}
