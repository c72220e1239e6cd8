//! Numerical toolkit for a single dissipative qubit synchronized to a classical drive.
//!
//! All rates and frequencies are angular frequencies in rad/s and all times are in
//! seconds. Use [`units`] to convert from the `2π × kHz` notation.

pub mod effective;
pub mod error;
pub mod estimation;
pub mod labframe;
pub mod lindblad;
pub mod output;
pub mod phase_space;
pub mod quantum;
pub mod sync;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
