use std::f64::consts::{PI, TAU};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
pub const BLOCH_NORM_TOL: f64 = 1e-10;

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let herm = matrix.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = matrix.hermitian_eigenvalues()[0];
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self(matrix))
    }

    /// Skips validation; the engine uses this for freshly integrated states
    /// whose invariants it checks separately.
    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self(matrix)
    }

    /// Pure state `|ψ⟩⟨ψ|` from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite amplitude vector".into()));
        }
        let psi: Vec<C64> = amplitudes.iter().map(|a| a / norm).collect();
        Ok(Self(ComplexMatrix::outer(&psi, &psi)?))
    }

    /// Computational basis state `|k⟩⟨k|`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::param("k", format!("level {k} outside dimension {dim}")));
        }
        Ok(Self(ComplexMatrix::projector(dim, k, k)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[(k, k)].re
    }

    pub fn purity(&self) -> f64 {
        self.0.inner(&self.0).expect("same dimension").re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.hermitian_eigenvalues()[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let d = self.sub(other);
        d.x.abs().max(d.y.abs()).max(d.z.abs())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Radial projection onto the unit ball.
    pub fn clip_to_ball(self) -> Self {
        let n = self.norm();
        if n > 1.0 {
            Self::new(self.x / n, self.y / n, self.z / n)
        } else {
            self
        }
    }
}

/// Direction `n = (cos φ sin θ, sin φ sin θ, cos θ)` labelling the spin-coherent
/// state `|θ,φ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinCoherentDirection {
    theta: f64,
    phi: f64,
}

impl SpinCoherentDirection {
    /// Normalizes `θ` into `[0, π]` (reflecting through the pole and shifting
    /// `φ` by `π` when needed) and `φ` into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Self {
        let mut theta = theta.rem_euclid(TAU);
        let mut phi = phi;
        if theta > PI {
            theta = TAU - theta;
            phi += PI;
        }
        Self { theta, phi: wrap_two_pi(phi) }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn unit_vector(&self) -> BlochVector {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        BlochVector::new(cp * st, sp * st, ct)
    }

    /// Amplitudes of `e^{-iφσ_z/2} e^{-iθσ_y/2} |1⟩` in the `(|0⟩, |1⟩)` basis.
    pub fn ket(&self) -> [C64; 2] {
        let (s, c) = (0.5 * self.theta).sin_cos();
        [C64::from_polar(s, 0.5 * self.phi), C64::from_polar(c, -0.5 * self.phi)]
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    if w >= TAU { 0.0 } else { w }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let w = wrap_two_pi(angle);
    if w > PI { w - TAU } else { w }
}

pub fn bloch_from_rho(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rho.dim() });
    }
    Ok(bloch_from_matrix(rho.matrix()))
}

pub(crate) fn bloch_from_matrix(m: &ComplexMatrix) -> BlochVector {
    let r01 = m[(0, 1)];
    let r10 = m[(1, 0)];
    let mx = (r01 + r10).re;
    let my = (C64::new(0.0, -1.0) * (r01 - r10)).re;
    let mz = (m[(1, 1)] - m[(0, 0)]).re;
    BlochVector::new(mx, my, mz)
}

pub fn rho_from_bloch(m: BlochVector) -> Result<DensityMatrix> {
    let norm = m.norm();
    if !norm.is_finite() || norm > 1.0 + BLOCH_NORM_TOL {
        return Err(Error::InvalidState(format!("Bloch vector norm {norm} exceeds 1")));
    }
    Ok(DensityMatrix::new_unchecked(matrix_from_bloch(m)))
}

pub(crate) fn matrix_from_bloch(m: BlochVector) -> ComplexMatrix {
    let half = 0.5;
    ComplexMatrix::from_rows([
        [C64::new(half * (1.0 - m.z), 0.0), C64::new(half * m.x, half * m.y)],
        [C64::new(half * m.x, -half * m.y), C64::new(half * (1.0 + m.z), 0.0)],
    ])
}

pub fn coherent_state(dir: SpinCoherentDirection) -> DensityMatrix {
    let ket = dir.ket();
    DensityMatrix::new_unchecked(ComplexMatrix::outer(&ket, &ket).expect("two amplitudes"))
}
