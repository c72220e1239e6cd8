//! Conversions between laboratory notation and internal SI angular units.

use std::f64::consts::TAU;

/// `2π × f` for `f` in kHz, returned in rad/s.
pub fn two_pi_khz(f: f64) -> f64 {
    TAU * f * 1e3
}

pub fn two_pi_mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

pub fn two_pi_hz(f: f64) -> f64 {
    TAU * f
}

/// Inverse of [`two_pi_khz`].
pub fn to_two_pi_khz(omega: f64) -> f64 {
    omega / (TAU * 1e3)
}

pub fn micros(t: f64) -> f64 {
    t * 1e-6
}

pub fn to_micros(t: f64) -> f64 {
    t * 1e6
}
