//! Lindblad master equations: right-hand sides, fixed-step integration and
//! direct steady-state solves.
//!
//! Every term contributes `rate · D[A]ρ` with `D[A]ρ = AρA† − {A†A, ρ}/2`, so a
//! model written as `(Γ/2) D[A]` stores `rate = Γ/2`.

mod integrate;
mod steady;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::quantum::{BlochVector, ComplexMatrix, DensityMatrix};

pub use integrate::{integrate, integrate_with, IntegrationOptions, Recording, Stepper, Trajectory};
pub use steady::{liouvillian, steady_state};

/// Hermiticity tolerance applied to Hamiltonians, relative to their scale.
pub const HAMILTONIAN_HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    pub jump: ComplexMatrix,
    pub rate: f64,
}

impl LindbladTerm {
    pub fn new(jump: ComplexMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::param("rate", format!("must be finite and non-negative, got {rate}")));
        }
        Ok(Self { jump, rate })
    }
}

pub type HamiltonianFn = Arc<dyn Fn(f64) -> ComplexMatrix + Send + Sync>;

#[derive(Clone)]
pub enum Hamiltonian {
    Constant(ComplexMatrix),
    /// `base + coupling · cos(omega · t + phase)` for `t ≥ start`, `base` before.
    Harmonic { base: ComplexMatrix, coupling: ComplexMatrix, omega: f64, phase: f64, start: f64 },
    Callback { dim: usize, f: HamiltonianFn },
}

impl Hamiltonian {
    pub fn dim(&self) -> usize {
        match self {
            Hamiltonian::Constant(h) => h.dim(),
            Hamiltonian::Harmonic { base, .. } => base.dim(),
            Hamiltonian::Callback { dim, .. } => *dim,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self, Hamiltonian::Constant(_))
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        match self {
            Hamiltonian::Constant(h) => h.clone(),
            Hamiltonian::Harmonic { base, coupling, .. } => {
                let c = self.drive_factor(t);
                if c == 0.0 {
                    base.clone()
                } else {
                    base + &(coupling * c)
                }
            }
            Hamiltonian::Callback { f, .. } => f(t),
        }
    }

    /// `cos(ωt + φ)` once switched on, zero before. Constant and callback
    /// Hamiltonians report zero.
    pub(crate) fn drive_factor(&self, t: f64) -> f64 {
        match self {
            Hamiltonian::Harmonic { omega, phase, start, .. } if t >= *start => (omega * t + phase).cos(),
            _ => 0.0,
        }
    }
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hamiltonian::Constant(h) => f.debug_tuple("Constant").field(h).finish(),
            Hamiltonian::Harmonic { base, coupling, omega, phase, start } => f
                .debug_struct("Harmonic")
                .field("base", base)
                .field("coupling", coupling)
                .field("omega", omega)
                .field("phase", phase)
                .field("start", start)
                .finish(),
            Hamiltonian::Callback { dim, .. } => f.debug_struct("Callback").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OpenSystemModel {
    hamiltonian: Hamiltonian,
    terms: Vec<LindbladTerm>,
}

impl OpenSystemModel {
    pub fn new(hamiltonian: Hamiltonian, terms: Vec<LindbladTerm>) -> Result<Self> {
        let dim = hamiltonian.dim();
        if dim == 0 {
            return Err(Error::param("hamiltonian", "dimension must be positive"));
        }
        let fixed: Vec<&ComplexMatrix> = match &hamiltonian {
            Hamiltonian::Constant(h) => vec![h],
            Hamiltonian::Harmonic { base, coupling, omega, phase, start } => {
                if coupling.dim() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: coupling.dim() });
                }
                if !(omega.is_finite() && phase.is_finite() && start.is_finite()) {
                    return Err(Error::param("hamiltonian", "drive parameters must be finite"));
                }
                vec![base, coupling]
            }
            Hamiltonian::Callback { .. } => vec![],
        };
        for h in fixed {
            check_hermitian(h, 0.0)?;
        }
        for term in &terms {
            if term.jump.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: term.jump.dim() });
            }
        }
        Ok(Self { hamiltonian, terms })
    }

    pub fn time_independent(h: ComplexMatrix, terms: Vec<LindbladTerm>) -> Result<Self> {
        Self::new(Hamiltonian::Constant(h), terms)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn terms(&self) -> &[LindbladTerm] {
        &self.terms
    }

    pub fn is_time_independent(&self) -> bool {
        self.hamiltonian.is_time_independent()
    }

    /// `Σ rate · A†A`.
    pub(crate) fn decay_generator(&self) -> ComplexMatrix {
        let mut acc = ComplexMatrix::zeros(self.dim());
        for term in &self.terms {
            let ada = &term.jump.dagger() * &term.jump;
            acc += &ada.scale_real(term.rate);
        }
        acc
    }

    /// Hamiltonian at `t`, checked for Hermiticity when it comes from a callback.
    pub(crate) fn hamiltonian_at(&self, t: f64) -> Result<ComplexMatrix> {
        let h = self.hamiltonian.at(t);
        if let Hamiltonian::Callback { dim, .. } = &self.hamiltonian {
            if h.dim() != *dim {
                return Err(Error::DimensionMismatch { expected: *dim, found: h.dim() });
            }
            check_hermitian(&h, t)?;
        }
        Ok(h)
    }
}

fn check_hermitian(h: &ComplexMatrix, t: f64) -> Result<()> {
    let deviation = h.hermiticity_error();
    if deviation > HAMILTONIAN_HERMITICITY_TOL * h.max_abs().max(1.0) {
        return Err(Error::NonHermitian { time: t, deviation });
    }
    Ok(())
}

/// `AρA† − {A†A, ρ}/2`.
pub fn dissipator(a: &ComplexMatrix, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    dissipator_matrix(a, rho.matrix())
}

pub(crate) fn dissipator_matrix(a: &ComplexMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let ad = a.dagger();
    let jump = a.try_mul(rho)?.try_mul(&ad)?;
    let ada = ad.try_mul(a)?;
    let anti = ada.anticommutator(rho)?;
    Ok(&jump - &anti.scale_real(0.5))
}

/// `dρ/dt = −i[H(t), ρ] + Σ rate · D[A]ρ`.
pub fn rhs(model: &OpenSystemModel, rho: &DensityMatrix, t: f64) -> Result<ComplexMatrix> {
    rhs_matrix(model, rho.matrix(), t)
}

pub(crate) fn rhs_matrix(model: &OpenSystemModel, rho: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho.dim() });
    }
    let h = model.hamiltonian_at(t)?;
    let mut out = h.commutator(rho)?.scale(C64::new(0.0, -1.0));
    for term in &model.terms {
        out += &dissipator_matrix(&term.jump, rho)?.scale_real(term.rate);
    }
    Ok(out)
}

/// Largest characteristic frequency of the model in Hz: the Hamiltonian
/// spectral radius, the decay rates and the drive frequency, all divided by 2π.
pub fn max_frequency(model: &OpenSystemModel) -> f64 {
    let radius = |m: &ComplexMatrix| {
        m.hermitian_eigenvalues().iter().fold(0.0f64, |acc, e| acc.max(e.abs()))
    };
    let (mut omega, drive) = match &model.hamiltonian {
        Hamiltonian::Constant(h) => (radius(h), 0.0),
        Hamiltonian::Harmonic { base, coupling, omega, .. } => (radius(base) + radius(coupling), omega.abs()),
        Hamiltonian::Callback { f, .. } => (radius(&f(0.0)), 0.0),
    };
    omega = omega.max(drive);
    for term in &model.terms {
        let strength = radius(&(&term.jump.dagger() * &term.jump));
        omega = omega.max(term.rate * strength);
    }
    omega / std::f64::consts::TAU
}

/// Step size resolving the fastest model frequency with 50 samples per period.
/// Returns infinity for a model with no dynamics at all.
pub fn suggest_dt(model: &OpenSystemModel) -> f64 {
    let f = max_frequency(model);
    if f > 0.0 {
        1.0 / (50.0 * f)
    } else {
        f64::INFINITY
    }
}

/// Bloch vector of a 2×2 block without renormalization.
pub(crate) fn bloch_of(m: &ComplexMatrix) -> BlochVector {
    crate::quantum::state::bloch_from_matrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{pauli, rho_from_bloch, Pauli};
    use proptest::prelude::*;

    fn qubit_rates(gg: f64, gd: f64, gz: f64) -> Vec<LindbladTerm> {
        vec![
            LindbladTerm::new(pauli(Pauli::Plus), gg / 2.0).unwrap(),
            LindbladTerm::new(pauli(Pauli::Minus), gd / 2.0).unwrap(),
            LindbladTerm::new(pauli(Pauli::Z), gz / 2.0).unwrap(),
        ]
    }

    #[test]
    fn decay_of_excited_state() {
        let rho = DensityMatrix::basis(2, 1).unwrap();
        let d = dissipator(&pauli(Pauli::Minus), &rho).unwrap();
        let want = &ComplexMatrix::projector(2, 0, 0) - &ComplexMatrix::projector(2, 1, 1);
        assert!(d.max_abs_diff(&want).unwrap() < 1e-15);
    }

    #[test]
    fn dephasing_of_mixed_state_vanishes() {
        let d = dissipator(&pauli(Pauli::Z), &DensityMatrix::maximally_mixed(2)).unwrap();
        assert!(d.max_abs() < 1e-15);
    }

    #[test]
    fn dissipator_dimension_mismatch() {
        let rho = DensityMatrix::maximally_mixed(3);
        assert!(matches!(dissipator(&pauli(Pauli::Z), &rho), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_model_has_zero_rhs() {
        let model = OpenSystemModel::time_independent(ComplexMatrix::zeros(2), vec![]).unwrap();
        let rho = rho_from_bloch(BlochVector::new(0.1, 0.2, 0.3)).unwrap();
        assert!(rhs(&model, &rho, 0.0).unwrap().max_abs() == 0.0);
        assert!(suggest_dt(&model).is_infinite());
    }

    #[test]
    fn gain_from_ground_state() {
        let gg = 2.0 * std::f64::consts::PI * 1270.0;
        let model = OpenSystemModel::time_independent(ComplexMatrix::zeros(2), qubit_rates(gg, 0.0, 0.0)).unwrap();
        let rho = DensityMatrix::basis(2, 0).unwrap();
        let d = rhs(&model, &rho, 0.0).unwrap();
        assert!((d[(1, 1)].re - gg / 2.0).abs() < 1e-9);
    }

    #[test]
    fn callback_non_hermitian_is_reported_with_time() {
        let f: HamiltonianFn = Arc::new(|t| {
            let mut h = ComplexMatrix::zeros(2);
            if t > 1.0 {
                h[(0, 1)] = C64::new(1.0, 0.0);
            }
            h
        });
        let model = OpenSystemModel::new(Hamiltonian::Callback { dim: 2, f }, vec![]).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        assert!(rhs(&model, &rho, 0.5).is_ok());
        match rhs(&model, &rho, 2.0) {
            Err(Error::NonHermitian { time, .. }) => assert_eq!(time, 2.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn model_rejects_bad_inputs() {
        assert!(LindbladTerm::new(pauli(Pauli::Z), -1.0).is_err());
        let bad = LindbladTerm::new(ComplexMatrix::identity(3), 1.0).unwrap();
        assert!(OpenSystemModel::time_independent(ComplexMatrix::zeros(2), vec![bad]).is_err());
        let mut h = ComplexMatrix::zeros(2);
        h[(0, 1)] = C64::new(0.0, 1.0);
        assert!(matches!(
            OpenSystemModel::time_independent(h, vec![]),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn suggest_dt_tracks_fastest_scale() {
        let h = pauli(Pauli::Z).scale_real(0.5 * 100.0);
        let model = OpenSystemModel::time_independent(h, qubit_rates(1.0, 2.0, 3.0)).unwrap();
        let dt = suggest_dt(&model);
        assert!((dt - std::f64::consts::TAU / (50.0 * 50.0)).abs() < 1e-12);
    }

    fn random_matrix(vals: &[f64], dim: usize) -> ComplexMatrix {
        ComplexMatrix::from_row_major(
            (0..dim * dim).map(|k| C64::new(vals[2 * k], vals[2 * k + 1])).collect(),
        )
        .unwrap()
    }

    fn random_state(vals: &[f64], dim: usize) -> DensityMatrix {
        let g = random_matrix(vals, dim);
        let p = &g * &g.dagger();
        let tr = p.trace().re;
        DensityMatrix::new(p.scale_real(1.0 / tr).hermitian_part()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn dissipator_is_traceless(
            dim in 2usize..=4,
            a in proptest::collection::vec(-1.0f64..1.0, 32),
            r in proptest::collection::vec(-1.0f64..1.0, 32),
        ) {
            let a = random_matrix(&a, dim);
            let rho = random_state(&r, dim);
            let d = dissipator(&a, &rho).unwrap();
            prop_assert!(d.trace().norm() < 1e-12);
            prop_assert!(d.hermiticity_error() < 1e-12);
        }

        #[test]
        fn rhs_is_hermitian_and_traceless(
            h in proptest::collection::vec(-1.0f64..1.0, 8),
            a in proptest::collection::vec(-1.0f64..1.0, 8),
            m in proptest::collection::vec(-0.57f64..0.57, 3),
            rate in 0.0f64..5.0,
        ) {
            let h = random_matrix(&h, 2).hermitian_part();
            let term = LindbladTerm::new(random_matrix(&a, 2), rate).unwrap();
            let model = OpenSystemModel::time_independent(h, vec![term]).unwrap();
            let rho = rho_from_bloch(BlochVector::new(m[0], m[1], m[2])).unwrap();
            let d = rhs(&model, &rho, 0.0).unwrap();
            prop_assert!(d.trace().norm() < 1e-12);
            prop_assert!(d.hermiticity_error() < 1e-12);
        }
    }
}
