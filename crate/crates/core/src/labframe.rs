//! Lab-frame (Schrödinger picture) simulation with the explicit drive
//! `H = (ω_q/2)σ_z + ε σ_x cos(ωt + φ)`, and spectral analysis of the result.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{integrate_with, Hamiltonian, IntegrationOptions, LindbladTerm, OpenSystemModel, Recording, Stepper, Trajectory};
use crate::output::sig17;
use crate::quantum::{pauli, BlochVector, DensityMatrix, Pauli};
use crate::sync::RateSet;

/// Minimum samples per carrier period accepted for `sample_dt`.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;
/// Integration steps per carrier period.
pub const STEPS_PER_PERIOD: f64 = 200.0;
/// Amplitude below which a window is considered to carry no tone.
pub const CARRIER_FLOOR: f64 = 1e-6;
/// Fewest samples a spectral or phase window may hold.
pub const MIN_WINDOW_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabDrive {
    pub epsilon: f64,
    /// Absolute drive frequency `ω` in rad/s.
    pub omega: f64,
    pub varphi: f64,
}

impl LabDrive {
    /// Drive at `ω = ω_q − Δ`.
    pub fn from_detuning(epsilon: f64, omega_q: f64, delta: f64, varphi: f64) -> Self {
        Self { epsilon, omega: omega_q - delta, varphi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabFrameConfig {
    pub omega_q: f64,
    pub drive: LabDrive,
    pub rates: RateSet,
    pub sample_dt: f64,
    pub duration: f64,
    /// Drive switch-on time; the qubit evolves freely before it.
    #[serde(default)]
    pub drive_start: f64,
}

impl LabFrameConfig {
    pub fn new(omega_q: f64, drive: LabDrive, rates: RateSet, sample_dt: f64, duration: f64) -> Result<Self> {
        let c = Self { omega_q, drive, rates, sample_dt, duration, drive_start: 0.0 };
        c.validate()?;
        Ok(c)
    }

    pub fn with_drive_start(mut self, t: f64) -> Result<Self> {
        self.drive_start = t;
        self.validate()?;
        Ok(self)
    }

    /// Fastest carrier, `max(ω_q, ω)`.
    pub fn carrier(&self) -> f64 {
        self.omega_q.abs().max(self.drive.omega.abs())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_q > 0.0 && self.omega_q.is_finite()) {
            return Err(Error::param("omega_q", format!("must be positive, got {}", self.omega_q)));
        }
        if !(self.drive.epsilon >= 0.0 && self.drive.epsilon.is_finite() && self.drive.omega.is_finite()) {
            return Err(Error::param("drive", "epsilon must be non-negative and omega finite"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::param("duration", format!("must be positive, got {}", self.duration)));
        }
        let limit = TAU / (MIN_SAMPLES_PER_PERIOD * self.carrier());
        if !(self.sample_dt > 0.0 && self.sample_dt <= limit * (1.0 + 1e-12)) {
            return Err(Error::param(
                "sample_dt",
                format!("must lie in (0, {limit:.4e}] s for at least {MIN_SAMPLES_PER_PERIOD} samples per period, got {:e}", self.sample_dt),
            ));
        }
        if !(self.drive_start >= 0.0 && self.drive_start.is_finite()) {
            return Err(Error::param("drive_start", format!("must be non-negative, got {}", self.drive_start)));
        }
        Ok(())
    }

    pub fn model(&self) -> OpenSystemModel {
        let h = Hamiltonian::Harmonic {
            base: pauli(Pauli::Z).scale_real(0.5 * self.omega_q),
            coupling: pauli(Pauli::X).scale_real(self.drive.epsilon),
            omega: self.drive.omega,
            phase: self.drive.varphi,
            start: self.drive_start,
        };
        let terms = vec![
            LindbladTerm { jump: pauli(Pauli::Plus), rate: 0.5 * self.rates.gamma_g() },
            LindbladTerm { jump: pauli(Pauli::Minus), rate: 0.5 * self.rates.gamma_d() },
            LindbladTerm { jump: pauli(Pauli::Z), rate: 0.5 * self.rates.gamma_z() },
        ];
        OpenSystemModel::new(h, terms).expect("qubit operators with validated rates")
    }
}

/// Integrates the lab-frame master equation and records Bloch vectors every
/// `sample_dt`.
pub fn simulate_lab(config: &LabFrameConfig, rho0: &DensityMatrix) -> Result<Trajectory> {
    config.validate()?;
    let stride = (config.sample_dt * config.carrier() * STEPS_PER_PERIOD / TAU).ceil().max(1.0) as usize;
    let n_samples = (config.duration / config.sample_dt).round().max(1.0);
    let opts = IntegrationOptions::new(config.sample_dt / stride as f64)
        .record_every(stride)
        .recording(Recording::BlochOnly)
        .stepper(Stepper::Bloch);
    integrate_with(&config.model(), rho0, (0.0, n_samples * config.sample_dt), &opts)
}

/// Runs independent configurations in parallel, one thread each.
pub fn simulate_lab_batch(configs: &[LabFrameConfig], rho0: &DensityMatrix) -> Vec<Result<Trajectory>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || simulate_lab(c, rho0))).collect();
        handles.into_iter().map(|h| h.join().expect("lab-frame worker panicked")).collect()
    })
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,mx,my,mz")?;
    for (t, m) in traj.times().iter().zip(traj.bloch()) {
        writeln!(w, "{},{},{},{}", sig17(*t), sig17(m.x), sig17(m.y), sig17(m.z))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Non-negative frequencies in rad/s, spaced by `2π / T` for a window of
    /// `N` samples and `T = N·dt`.
    pub frequencies: Vec<f64>,
    /// `|X_k| / N` (after tapering, when one is applied).
    pub magnitudes: Vec<f64>,
    /// Local maxima as `(interpolated frequency, magnitude)`, largest first.
    pub peak_list: Vec<(f64, f64)>,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(f64::NAN)
    }

    /// Largest peak, `None` for an all-zero signal.
    pub fn dominant_peak(&self) -> Option<(f64, f64)> {
        self.peak_list.first().copied()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "freq_hz,magnitude")?;
        for (f, m) in self.frequencies.iter().zip(&self.magnitudes) {
            writeln!(w, "{},{}", sig17(f / TAU), sig17(*m))?;
        }
        Ok(())
    }
}

/// Samples with `start ≤ t < end`, after checking the grid is uniform.
fn window_slice<'a>(times: &'a [f64], values: &'a [f64], window: (f64, f64)) -> Result<(&'a [f64], &'a [f64], f64)> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), found: values.len() });
    }
    let (start, end) = window;
    if !(end > start) {
        return Err(Error::InvalidWindow(format!("empty window ({start}, {end})")));
    }
    let lo = times.partition_point(|&t| t < start);
    let hi = times.partition_point(|&t| t < end);
    let n = hi.saturating_sub(lo);
    if n < MIN_WINDOW_SAMPLES {
        return Err(Error::InvalidWindow(format!("window ({start}, {end}) holds {n} samples, need {MIN_WINDOW_SAMPLES}")));
    }
    let (t, v) = (&times[lo..hi], &values[lo..hi]);
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    let worst = t.windows(2).map(|p| (p[1] - p[0] - dt).abs()).fold(0.0, f64::max);
    if worst > 1e-6 * dt {
        return Err(Error::InvalidWindow(format!("non-uniform sampling (step deviation {worst:e} s)")));
    }
    Ok((t, v, dt))
}

/// Magnitude spectrum of one component over a time window.
pub fn spectrum(times: &[f64], values: &[f64], window: (f64, f64), taper: Taper) -> Result<Spectrum> {
    let (_, v, dt) = window_slice(times, values, window)?;
    let n = v.len();
    let mut buf: Vec<C64> = v
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let w = match taper {
                Taper::Rectangular => 1.0,
                Taper::Hann => 0.5 - 0.5 * (TAU * k as f64 / n as f64).cos(),
            };
            C64::new(w * x, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2 + 1;
    let df = TAU / (n as f64 * dt);
    let frequencies: Vec<f64> = (0..half).map(|k| k as f64 * df).collect();
    let magnitudes: Vec<f64> = buf[..half].iter().map(|z| z.norm() / n as f64).collect();
    let peak_list = find_peaks(&magnitudes, df, taper);
    Ok(Spectrum { frequencies, magnitudes, peak_list })
}

/// Local maxima above `1e-9` of the global maximum with sub-bin refinement.
///
/// A rectangular window uses the two-bin magnitude ratio, exact for a single
/// tone. A Hann window uses a parabola through the log magnitudes of the
/// three bins around the maximum.
fn find_peaks(mags: &[f64], df: f64, taper: Taper) -> Vec<(f64, f64)> {
    let top = mags.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return vec![];
    }
    let n = mags.len();
    let mut peaks = Vec::new();
    for k in 0..n {
        let left = if k > 0 { mags[k - 1] } else { 0.0 };
        let right = if k + 1 < n { mags[k + 1] } else { 0.0 };
        if mags[k] < 1e-9 * top || mags[k] < left || mags[k] <= right {
            continue;
        }
        let (shift, value) = refine(left, mags[k], right, taper);
        peaks.push(((k as f64 + shift) * df, value));
    }
    peaks.sort_by(|x, y| y.1.total_cmp(&x.1));
    peaks
}

/// Offset in bins and corrected height of a peak from its neighbours.
fn refine(left: f64, centre: f64, right: f64, taper: Taper) -> (f64, f64) {
    // Neighbours at rounding level carry no information.
    let floor = 1e-9 * centre;
    match taper {
        Taper::Rectangular => {
            let (side, sign) = if right >= left { (right, 1.0) } else { (left, -1.0) };
            if side <= floor {
                return (0.0, centre);
            }
            let delta = side / (centre + side);
            let x = std::f64::consts::PI * delta;
            (sign * delta, centre * x / x.sin())
        }
        Taper::Hann => {
            if left <= floor || right <= floor {
                return (0.0, centre);
            }
            let (a, b, c) = (left.ln(), centre.ln(), right.ln());
            let denom = a - 2.0 * b + c;
            if denom >= 0.0 {
                return (0.0, centre);
            }
            let shift = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
            (shift, (b - 0.25 * (a - c) * shift).exp())
        }
    }
}

/// `(a, b, c)` minimizing `Σ (x − a cos ωt − b sin ωt − c)²`.
fn fit_tone(t: &[f64], v: &[f64], omega: f64) -> Result<(f64, f64, f64)> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (&ti, &x) in t.iter().zip(v) {
        let (s, c) = (omega * ti).sin_cos();
        let row = nalgebra::Vector3::new(c, s, 1.0);
        ata += row * row.transpose();
        atb += row * x;
    }
    let sol = ata
        .try_inverse()
        .map(|inv| inv * atb)
        .ok_or_else(|| Error::InvalidWindow("window too short to separate the tone from a constant".into()))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// Phase `ψ` of `A cos(ωt + ψ)` in the window, with `t` measured from the
/// trajectory origin. Fitted by linear least squares on `cos ωt`, `sin ωt` and
/// a constant, which reduces to the single-bin projection for windows holding
/// whole periods. Result in `(−π, π]`.
pub fn extract_phase(times: &[f64], values: &[f64], omega: f64, window: (f64, f64)) -> Result<f64> {
    let (t, v, _) = window_slice(times, values, window)?;
    let (a, b, _) = fit_tone(t, v, omega)?;
    let amplitude = a.hypot(b);
    if !(amplitude >= CARRIER_FLOOR) {
        return Err(Error::NoCarrier { amplitude });
    }
    Ok(crate::quantum::wrap_pi((-b).atan2(a)))
}

/// Amplitude of the `ω` component over the window.
pub fn tone_amplitude(times: &[f64], values: &[f64], omega: f64, window: (f64, f64)) -> Result<f64> {
    let (t, v, _) = window_slice(times, values, window)?;
    let (a, b, _) = fit_tone(t, v, omega)?;
    Ok(a.hypot(b))
}

/// Rotating-frame transverse components recovered from the lab-frame `m_x`
/// series, using `m_x = m_x' cos ωt − m_y' sin ωt`. The returned `z` is the
/// window mean of `m_z`.
pub fn demodulate(traj: &Trajectory, omega: f64, window: (f64, f64)) -> Result<BlochVector> {
    let mx = traj.component(0);
    let mz = traj.component(2);
    let (t, v, _) = window_slice(traj.times(), &mx, window)?;
    let (a, b, _) = fit_tone(t, v, omega)?;
    let (_, z, _) = window_slice(traj.times(), &mz, window)?;
    Ok(BlochVector::new(a, -b, z.iter().sum::<f64>() / z.len() as f64))
}
