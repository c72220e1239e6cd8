use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::matrix::ComplexMatrix;
use crate::error::Error;

/// Basis ordering is `(|0⟩, |1⟩)` = (ground, excited) and `σ_z|1⟩ = +|1⟩`, so
/// `σ_z = diag(-1, +1)`. With that ordering `σ_y` carries `+i` in the upper
/// right corner, which keeps `[σ_x, σ_y] = 2iσ_z` and `σ_+ = |1⟩⟨0|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pauli {
    X,
    Y,
    Z,
    Plus,
    Minus,
}

pub fn pauli(which: Pauli) -> ComplexMatrix {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match which {
        Pauli::X => ComplexMatrix::from_rows([[o, one], [one, o]]),
        Pauli::Y => ComplexMatrix::from_rows([[o, i], [-i, o]]),
        Pauli::Z => ComplexMatrix::from_rows([[-one, o], [o, one]]),
        Pauli::Plus => ComplexMatrix::from_rows([[o, o], [one, o]]),
        Pauli::Minus => ComplexMatrix::from_rows([[o, one], [o, o]]),
    }
}

/// `σ_φ = σ_x cos φ + σ_y sin φ`.
pub fn sigma_phi(phi: f64) -> ComplexMatrix {
    &(&pauli(Pauli::X) * phi.cos()) + &(&pauli(Pauli::Y) * phi.sin())
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" | "sx" | "sigma_x" => Ok(Pauli::X),
            "y" | "sy" | "sigma_y" => Ok(Pauli::Y),
            "z" | "sz" | "sigma_z" => Ok(Pauli::Z),
            "+" | "plus" | "sigma_plus" => Ok(Pauli::Plus),
            "-" | "minus" | "sigma_minus" => Ok(Pauli::Minus),
            other => Err(Error::UnknownSelector(other.to_string())),
        }
    }
}
