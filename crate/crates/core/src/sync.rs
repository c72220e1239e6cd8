//! The rotating-frame synchronization model and its closed-form stationary
//! properties.
//!
//! With `H = Δσ_z/2 + (ε/2)σ_φ` and dissipators `(Γ_g/2)D[σ_+]`,
//! `(Γ_d/2)D[σ_−]`, `(Γ_z/2)D[σ_z]`, the transverse components decay at
//! `Γ_t/4` and `m_z` relaxes at `(Γ_g + Γ_d)/2`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{LindbladTerm, OpenSystemModel};
use crate::quantum::{pauli, sigma_phi, wrap_pi, wrap_two_pi, BlochVector, Pauli};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    gamma_g: f64,
    gamma_d: f64,
    gamma_z: f64,
}

impl RateSet {
    pub fn new(gamma_g: f64, gamma_d: f64, gamma_z: f64) -> Result<Self> {
        for (name, v) in [("gamma_g", gamma_g), ("gamma_d", gamma_d), ("gamma_z", gamma_z)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self { gamma_g, gamma_d, gamma_z })
    }

    pub fn gamma_g(&self) -> f64 {
        self.gamma_g
    }

    pub fn gamma_d(&self) -> f64 {
        self.gamma_d
    }

    pub fn gamma_z(&self) -> f64 {
        self.gamma_z
    }

    /// `Γ_g + Γ_d + 4Γ_z`
    pub fn gamma_t(&self) -> f64 {
        self.gamma_g + self.gamma_d + 4.0 * self.gamma_z
    }

    /// Multiplies every rate by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(k * self.gamma_g, k * self.gamma_d, k * self.gamma_z)
    }

    fn relaxation_sum(&self) -> Result<f64> {
        let s = self.gamma_g + self.gamma_d;
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::UndefinedLimitCycle)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    epsilon: f64,
    delta: f64,
    varphi: f64,
}

impl DriveParams {
    /// `delta = ω_q − ω`; `varphi` is wrapped into `(−π, π]`.
    pub fn new(epsilon: f64, delta: f64, varphi: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and non-negative, got {epsilon}")));
        }
        if !delta.is_finite() || !varphi.is_finite() {
            return Err(Error::param("drive", "detuning and phase must be finite"));
        }
        Ok(Self { epsilon, delta, varphi: wrap_pi(varphi) })
    }

    pub fn undriven() -> Self {
        Self { epsilon: 0.0, delta: 0.0, varphi: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn varphi(&self) -> f64 {
        self.varphi
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(epsilon, self.delta, self.varphi)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.epsilon, delta, self.varphi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncAnalytics {
    pub steady_bloch: BlochVector,
    /// Peak-to-peak amplitude of `S(φ)`; the maximum of `S` is half of it.
    pub contrast: f64,
    pub phase_shift: f64,
    /// `argmax_φ S(φ)` in `[0, 2π)`.
    pub sync_phase: f64,
}

/// Drive-free stationary state `(0, 0, (Γ_g − Γ_d)/(Γ_g + Γ_d))`.
pub fn limit_cycle(rates: &RateSet) -> Result<BlochVector> {
    let s = rates.relaxation_sum()?;
    Ok(BlochVector::new(0.0, 0.0, (rates.gamma_g - rates.gamma_d) / s))
}

/// Polar angle of the latitude circle on which the limit cycle lives.
pub fn limit_cycle_theta0(rates: &RateSet) -> Result<f64> {
    Ok(limit_cycle(rates)?.z.clamp(-1.0, 1.0).acos())
}

fn denominator(rates: &RateSet, drive: &DriveParams) -> Result<f64> {
    let (gt, s) = (rates.gamma_t(), rates.gamma_g + rates.gamma_d);
    let d = (16.0 * drive.delta.powi(2) + gt * gt) * s + 8.0 * gt * drive.epsilon.powi(2);
    if d > 0.0 {
        Ok(d)
    } else {
        Err(Error::DegenerateModel("gain and damping rates are both zero".into()))
    }
}

/// Exact stationary Bloch vector of the rotating-frame model.
pub fn steady_bloch(rates: &RateSet, drive: &DriveParams) -> Result<BlochVector> {
    let d = denominator(rates, drive)?;
    let (gt, diff) = (rates.gamma_t(), rates.gamma_g - rates.gamma_d);
    let (eps, delta) = (drive.epsilon, drive.delta);
    let (sp, cp) = drive.varphi.sin_cos();
    Ok(BlochVector::new(
        4.0 * eps * diff * (4.0 * delta * cp + gt * sp) / d,
        4.0 * eps * diff * (4.0 * delta * sp - gt * cp) / d,
        (16.0 * delta * delta + gt * gt) * diff / d,
    ))
}

/// `𝒞 = ε|Γ_g − Γ_d| sqrt(16Δ² + Γ_t²) / D`.
pub fn contrast(rates: &RateSet, drive: &DriveParams) -> Result<f64> {
    let d = denominator(rates, drive)?;
    let x = 16.0 * drive.delta.powi(2) + rates.gamma_t().powi(2);
    Ok(drive.epsilon * (rates.gamma_g - rates.gamma_d).abs() * x.sqrt() / d)
}

/// `φ_d = arctan(4Δ/Γ_t)`.
pub fn phase_shift(rates: &RateSet, drive: &DriveParams) -> Result<f64> {
    let gt = rates.gamma_t();
    if gt <= 0.0 {
        return Err(Error::DegenerateModel("all rates are zero".into()));
    }
    Ok((4.0 * drive.delta / gt).atan())
}

/// `φ_s = φ + φ_d − π/2` for `Γ_g > Γ_d` and `φ + φ_d + π/2` for `Γ_g < Γ_d`,
/// wrapped into `[0, 2π)`.
pub fn sync_phase(rates: &RateSet, drive: &DriveParams) -> Result<f64> {
    let diff = rates.gamma_g - rates.gamma_d;
    if diff == 0.0 {
        return Err(Error::NoPhasePreference);
    }
    let offset = if diff > 0.0 { -FRAC_PI_2 } else { FRAC_PI_2 };
    Ok(wrap_two_pi(drive.varphi + phase_shift(rates, drive)? + offset))
}

pub fn sync_analytics(rates: &RateSet, drive: &DriveParams) -> Result<SyncAnalytics> {
    Ok(SyncAnalytics {
        steady_bloch: steady_bloch(rates, drive)?,
        contrast: contrast(rates, drive)?,
        phase_shift: phase_shift(rates, drive)?,
        sync_phase: sync_phase(rates, drive)?,
    })
}

/// `Max_φ S(φ) = 𝒞/2`.
pub fn max_s(rates: &RateSet, drive: &DriveParams) -> Result<f64> {
    Ok(0.5 * contrast(rates, drive)?)
}

/// Contrast divided by `|Γ_g − Γ_d|`; same shape in `(Δ, ε)`, nonzero even
/// when the rates balance.
fn contrast_shape(rates: &RateSet, epsilon: f64, delta: f64) -> f64 {
    let gt = rates.gamma_t();
    let x = 16.0 * delta * delta + gt * gt;
    epsilon * x.sqrt() / (x * (rates.gamma_g + rates.gamma_d) + 8.0 * gt * epsilon * epsilon)
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..400 {
        if (b - a).abs() <= rel_tol * 0.5 * (a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Drive strength maximizing the resonant contrast, by golden-section search
/// on the closed form.
pub fn critical_epsilon(rates: &RateSet) -> Result<f64> {
    rates.relaxation_sum()?;
    let f = |eps: f64| contrast_shape(rates, eps, 0.0);
    let mut hi = rates.gamma_t().max(rates.gamma_g + rates.gamma_d);
    while f(2.0 * hi) > f(hi) {
        hi *= 2.0;
    }
    Ok(golden_max(f, 0.0, 2.0 * hi, 1e-10))
}

/// Full width `2Δ½` of the contrast profile in detuning, where `Δ½` is the
/// detuning at which the contrast has fallen to half its resonant value.
pub fn bandwidth_3db(rates: &RateSet, epsilon: f64) -> Result<f64> {
    Ok(2.0 * half_width(rates, epsilon)?)
}

/// `Δ½` by bisection on the closed-form contrast.
pub fn half_width(rates: &RateSet, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::ZeroContrast(format!("drive strength {epsilon} gives no contrast")));
    }
    let s = rates.relaxation_sum()?;
    if rates.gamma_g == rates.gamma_d {
        return Err(Error::ZeroContrast("balanced gain and damping".into()));
    }
    let gt = rates.gamma_t();
    if gt <= 0.0 {
        return Err(Error::DegenerateModel("all rates are zero".into()));
    }
    let f = |delta: f64| contrast_shape(rates, epsilon, delta);
    let target = 0.5 * f(0.0);
    // Above the critical drive the contrast first grows with detuning, peaking
    // where 16Δ² + Γ_t² = 8Γ_t ε²/(Γ_g + Γ_d).
    let x_peak = 8.0 * gt * epsilon * epsilon / s;
    let mut lo = if x_peak > gt * gt { 0.25 * (x_peak - gt * gt).sqrt() } else { 0.0 };
    let mut hi = lo.max(gt);
    while f(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `m_z(ε) − m_z(0)` of the stationary state at detuning `delta`.
pub fn deformation(rates: &RateSet, epsilon: f64, delta: f64) -> Result<f64> {
    let driven = steady_bloch(rates, &DriveParams::new(epsilon, delta, 0.0)?)?;
    let free = steady_bloch(rates, &DriveParams::new(0.0, delta, 0.0)?)?;
    Ok(driven.z - free.z)
}

/// Frequency of the damped `m_x`/`m_z` oscillation on resonance:
/// `sqrt(ε² − ((Γ_t/4 − (Γ_g+Γ_d)/2)/2)²)`, or `None` when overdamped.
pub fn forced_oscillation_frequency(rates: &RateSet, epsilon: f64) -> Option<f64> {
    let a = rates.gamma_t() / 4.0;
    let b = 0.5 * (rates.gamma_g + rates.gamma_d);
    let disc = epsilon * epsilon - (0.5 * (a - b)).powi(2);
    (disc > 0.0).then(|| disc.sqrt())
}

/// Mean decay rate `(Γ_t/4 + (Γ_g+Γ_d)/2)/2` of that oscillation.
pub fn forced_oscillation_damping(rates: &RateSet) -> f64 {
    0.5 * (rates.gamma_t() / 4.0 + 0.5 * (rates.gamma_g + rates.gamma_d))
}

/// Rotating-frame master equation for the given rates and drive.
pub fn build_rotating_model(rates: &RateSet, drive: &DriveParams) -> OpenSystemModel {
    let h = &pauli(Pauli::Z).scale_real(0.5 * drive.delta) + &sigma_phi(drive.varphi).scale_real(0.5 * drive.epsilon);
    let terms = vec![
        LindbladTerm { jump: pauli(Pauli::Plus), rate: 0.5 * rates.gamma_g },
        LindbladTerm { jump: pauli(Pauli::Minus), rate: 0.5 * rates.gamma_d },
        LindbladTerm { jump: pauli(Pauli::Z), rate: 0.5 * rates.gamma_z },
    ];
    OpenSystemModel::time_independent(h, terms).expect("qubit operators with validated rates")
}

/// Values used throughout the tests and presets: the rates measured in the
/// experiment, in rad/s.
pub fn reference_rates() -> RateSet {
    RateSet::new(
        crate::units::two_pi_khz(1.27),
        crate::units::two_pi_khz(7.33),
        crate::units::two_pi_khz(4.42),
    )
    .expect("positive constants")
}
