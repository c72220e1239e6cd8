//! Small dense complex linear algebra and qubit state representations.

pub mod matrix;
pub mod pauli;
pub mod state;

pub use matrix::ComplexMatrix;
pub use pauli::{pauli, sigma_phi, Pauli};
pub use state::{
    bloch_from_rho, coherent_state, rho_from_bloch, wrap_pi, wrap_two_pi, BlochVector, DensityMatrix,
    SpinCoherentDirection,
};
