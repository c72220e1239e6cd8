//! Husimi-Q function on the Bloch sphere and the synchronization measure
//! `S(φ) = ∫ Q(θ, φ) sin θ dθ − 1/2π`.
//!
//! Both quantities exist in two forms: a direct evaluation through the
//! spin-coherent projector and the closed Bloch-vector expression. They are
//! cross-checked in the tests.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::output::sig17;
use crate::quantum::{bloch_from_rho, wrap_two_pi, BlochVector, DensityMatrix, SpinCoherentDirection};

pub const DEFAULT_THETA_NODES: usize = 64;
pub const DEFAULT_PHI_NODES: usize = 128;
/// θ nodes used by the quadrature form of `S(φ)`.
pub const S_QUADRATURE_NODES: usize = 257;

/// `Q(θ, φ) = ⟨θ,φ|ρ|θ,φ⟩ / 2π`.
pub fn q_function(rho: &DensityMatrix, dir: SpinCoherentDirection) -> Result<f64> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rho.dim() });
    }
    let ket = dir.ket();
    Ok(rho.matrix().expectation(&ket, &ket)?.re / TAU)
}

/// `Q = (1 + m·n)/4π`.
pub fn q_function_bloch(m: &BlochVector, dir: SpinCoherentDirection) -> f64 {
    (1.0 + m.dot(&dir.unit_vector())) / (2.0 * TAU)
}

/// `S(φ) = (m_x cos φ + m_y sin φ)/8`.
pub fn s_function(rho: &DensityMatrix, phi: f64) -> Result<f64> {
    Ok(s_function_bloch(&bloch_from_rho(rho)?, phi))
}

pub fn s_function_bloch(m: &BlochVector, phi: f64) -> f64 {
    (m.x * phi.cos() + m.y * phi.sin()) / 8.0
}

/// `S(φ)` by Simpson quadrature of the Q-function over θ.
pub fn s_function_quadrature(rho: &DensityMatrix, phi: f64) -> Result<f64> {
    let n = S_QUADRATURE_NODES;
    let h = PI / (n - 1) as f64;
    let w = simpson_weights(n, h);
    let mut acc = 0.0;
    for (k, wk) in w.iter().enumerate() {
        let theta = k as f64 * h;
        acc += wk * q_function(rho, SpinCoherentDirection::new(theta, phi))? * theta.sin();
    }
    Ok(acc - 1.0 / TAU)
}

/// Composite Simpson weights for `n` equally spaced nodes with spacing `h`.
/// An odd number of intervals closes with Simpson's 3/8 rule on the last three.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => return w,
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            return w;
        }
        _ => {}
    }
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let s = simpson_end;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

/// Q-function sampled on `θ ∈ [0, π]` (endpoints included) × `φ ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub theta_nodes: Vec<f64>,
    pub phi_nodes: Vec<f64>,
    /// Row-major in θ: `values[i * n_phi + j] = Q(θ_i, φ_j)`.
    pub values: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn n_theta(&self) -> usize {
        self.theta_nodes.len()
    }

    pub fn n_phi(&self) -> usize {
        self.phi_nodes.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_phi() + j]
    }

    /// `∫∫ Q sin θ dθ dφ` with Simpson in θ and the periodic rectangle rule in φ.
    pub fn normalization(&self) -> f64 {
        let h = PI / (self.n_theta() - 1) as f64;
        let w = simpson_weights(self.n_theta(), h);
        let dphi = TAU / self.n_phi() as f64;
        let mut acc = 0.0;
        for (i, (theta, wi)) in self.theta_nodes.iter().zip(&w).enumerate() {
            let row: f64 = self.values[i * self.n_phi()..(i + 1) * self.n_phi()].iter().sum();
            acc += wi * theta.sin() * row * dphi;
        }
        acc
    }

    /// `theta,phi,q` rows, θ-major, blank line between θ blocks so the file
    /// loads directly as a gnuplot surface.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta,phi,q")?;
        for (i, theta) in self.theta_nodes.iter().enumerate() {
            if i > 0 {
                writeln!(w)?;
            }
            for (j, phi) in self.phi_nodes.iter().enumerate() {
                writeln!(w, "{},{},{}", sig17(*theta), sig17(*phi), sig17(self.value(i, j)))?;
            }
        }
        Ok(())
    }
}

pub fn q_grid(rho: &DensityMatrix, n_theta: usize, n_phi: usize) -> Result<PhaseSpaceGrid> {
    if n_theta < 3 || n_phi < 2 {
        return Err(Error::param("grid", format!("need at least 3×2 nodes, got {n_theta}×{n_phi}")));
    }
    let theta_nodes: Vec<f64> = (0..n_theta).map(|i| PI * i as f64 / (n_theta - 1) as f64).collect();
    let phi_nodes: Vec<f64> = (0..n_phi).map(|j| TAU * j as f64 / n_phi as f64).collect();
    let mut values = Vec::with_capacity(n_theta * n_phi);
    for &theta in &theta_nodes {
        for &phi in &phi_nodes {
            values.push(q_function(rho, SpinCoherentDirection::new(theta, phi))?.max(0.0));
        }
    }
    Ok(PhaseSpaceGrid { theta_nodes, phi_nodes, values })
}

pub fn default_q_grid(rho: &DensityMatrix) -> Result<PhaseSpaceGrid> {
    q_grid(rho, DEFAULT_THETA_NODES, DEFAULT_PHI_NODES)
}

/// Samples of `S(φ)` and, once fitted, its first-harmonic parameters.
///
/// `fitted_contrast` is the peak-to-peak amplitude of `S`, so the maximum of
/// `S` is half of it. `fitted_phase` is the maximizing `φ`, absent when the
/// fitted amplitude is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SProfile {
    pub phi_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_contrast: Option<f64>,
    pub fitted_phase: Option<f64>,
    pub residual_rms: Option<f64>,
}

impl SProfile {
    pub fn from_samples(phi_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if phi_nodes.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: phi_nodes.len(), found: values.len() });
        }
        Ok(Self { phi_nodes, values, fitted_contrast: None, fitted_phase: None, residual_rms: None })
    }

    /// `phi,s` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "phi,s")?;
        for (phi, s) in self.phi_nodes.iter().zip(&self.values) {
            writeln!(w, "{},{}", sig17(*phi), sig17(*s))?;
        }
        Ok(())
    }
}

/// Closed-form `S(φ)` on `n` uniform nodes in `[0, 2π)`.
pub fn s_profile(rho: &DensityMatrix, n: usize) -> Result<SProfile> {
    let m = bloch_from_rho(rho)?;
    let phi: Vec<f64> = (0..n).map(|j| TAU * j as f64 / n as f64).collect();
    let values = phi.iter().map(|&p| s_function_bloch(&m, p)).collect();
    SProfile::from_samples(phi, values)
}

/// Least-squares fit of `a cos φ + b sin φ`.
pub fn fit_s_profile(profile: &SProfile) -> Result<SProfile> {
    let n = profile.phi_nodes.len();
    if n < 8 {
        return Err(Error::param("profile", format!("need at least 8 samples, got {n}")));
    }
    if profile.values.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: profile.values.len() });
    }
    let (lo, hi) = profile
        .phi_nodes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    let span = hi - lo;
    let coverage = span + span / (n - 1) as f64;
    if coverage < TAU * (1.0 - 1e-9) {
        return Err(Error::param("profile", format!("samples span {span} rad, less than one period")));
    }
    let (mut cc, mut cs, mut ss, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&p, &y) in profile.phi_nodes.iter().zip(&profile.values) {
        let (s, c) = p.sin_cos();
        cc += c * c;
        cs += c * s;
        ss += s * s;
        yc += y * c;
        ys += y * s;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-12 * (cc * ss).max(1e-300) {
        return Err(Error::param("profile", "sample angles do not determine a first harmonic"));
    }
    let a = (yc * ss - ys * cs) / det;
    let b = (ys * cc - yc * cs) / det;
    let rss: f64 = profile
        .phi_nodes
        .iter()
        .zip(&profile.values)
        .map(|(&p, &y)| (y - a * p.cos() - b * p.sin()).powi(2))
        .sum();
    let amplitude = a.hypot(b);
    Ok(SProfile {
        phi_nodes: profile.phi_nodes.clone(),
        values: profile.values.clone(),
        fitted_contrast: Some(2.0 * amplitude),
        fitted_phase: (amplitude > 0.0).then(|| wrap_two_pi(b.atan2(a))),
        residual_rms: Some((rss / n as f64).sqrt()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::steady_state;
    use crate::quantum::rho_from_bloch;
    use crate::sync::{build_rotating_model, contrast, limit_cycle, reference_rates, DriveParams};
    use crate::units::two_pi_khz;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::FRAC_PI_2;

    fn synchronized() -> DensityMatrix {
        let drive = DriveParams::new(two_pi_khz(2.37), 0.0, FRAC_PI_2).unwrap();
        steady_state(&build_rotating_model(&reference_rates(), &drive)).unwrap()
    }

    #[test]
    fn q_of_simple_states() {
        let mixed = DensityMatrix::maximally_mixed(2);
        let excited = DensityMatrix::basis(2, 1).unwrap();
        for (theta, phi) in [(0.0, 0.0), (0.7, 2.0), (PI, 5.0)] {
            let dir = SpinCoherentDirection::new(theta, phi);
            assert!((q_function(&mixed, dir).unwrap() - 1.0 / (2.0 * TAU)).abs() < 1e-15);
            let want = (1.0 + f64::cos(theta)) / (2.0 * TAU);
            assert!((q_function(&excited, dir).unwrap() - want).abs() < 1e-15);
        }
        let top = q_function(&excited, SpinCoherentDirection::new(0.0, 0.0)).unwrap();
        assert!((top - 1.0 / TAU).abs() < 1e-15);
    }

    #[test]
    fn limit_cycle_q_is_phase_uniform() {
        let lc = limit_cycle(&reference_rates()).unwrap();
        let rho = rho_from_bloch(lc).unwrap();
        for theta in [0.2, 1.0, 2.5] {
            let q0 = q_function(&rho, SpinCoherentDirection::new(theta, 0.0)).unwrap();
            for phi in [0.5, 2.0, 4.0] {
                let q = q_function(&rho, SpinCoherentDirection::new(theta, phi)).unwrap();
                assert!((q - q0).abs() < 1e-15);
            }
            assert!((q0 - (1.0 + lc.z * f64::cos(theta)) / (2.0 * TAU)).abs() < 1e-15);
        }
        for phi in [0.0, 1.0, 3.0] {
            assert!(s_function(&rho, phi).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn synchronized_s_peaks_at_pi() {
        let rho = synchronized();
        let drive = DriveParams::new(two_pi_khz(2.37), 0.0, FRAC_PI_2).unwrap();
        let c = contrast(&reference_rates(), &drive).unwrap();
        assert!((s_function(&rho, PI).unwrap() - c / 2.0).abs() < 1e-10);
        assert!((c / 2.0 - 0.0265).abs() < 3e-4);
        let fit = fit_s_profile(&s_profile(&rho, 16).unwrap()).unwrap();
        assert!((fit.fitted_phase.unwrap() - PI).abs() < 1e-8);
        assert!((fit.fitted_contrast.unwrap() - c).abs() < 1e-10);
    }

    #[test]
    fn plus_state_s_maximum() {
        let rho = rho_from_bloch(BlochVector::new(1.0, 0.0, 0.0)).unwrap();
        assert!((s_function(&rho, 0.0).unwrap() - 0.125).abs() < 1e-15);
        assert!((s_function_quadrature(&rho, 0.0).unwrap() - 0.125).abs() < 1e-8);
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        for n in [3usize, 4, 5, 8, 64, 257] {
            let h = 2.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let integral: f64 = w.iter().enumerate().map(|(k, wk)| wk * (k as f64 * h).powi(3)).sum();
            assert!((integral - 4.0).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn default_grid_is_normalized() {
        for m in [BlochVector::new(0.0, 0.0, -0.705), BlochVector::new(0.6, -0.5, 0.3), BlochVector::default()] {
            let grid = default_q_grid(&rho_from_bloch(m).unwrap()).unwrap();
            assert_eq!((grid.n_theta(), grid.n_phi()), (64, 128));
            assert!((grid.normalization() - 1.0).abs() < 1e-6);
            assert!(grid.values.iter().all(|&q| q >= 0.0));
        }
    }

    #[test]
    fn fit_recovers_shifted_cosine() {
        let phi: Vec<f64> = (0..16).map(|j| TAU * j as f64 / 16.0).collect();
        let values = phi.iter().map(|p| 0.025 * (p - PI).cos()).collect();
        let fit = fit_s_profile(&SProfile::from_samples(phi, values).unwrap()).unwrap();
        assert!((fit.fitted_contrast.unwrap() - 0.05).abs() < 1e-15);
        assert!((fit.fitted_phase.unwrap() - PI).abs() < 1e-12);
        assert!(fit.residual_rms.unwrap() < 1e-15);
    }

    #[test]
    fn fit_of_zero_profile_flags_phase() {
        let phi: Vec<f64> = (0..8).map(|j| TAU * j as f64 / 8.0).collect();
        let fit = fit_s_profile(&SProfile::from_samples(phi, vec![0.0; 8]).unwrap()).unwrap();
        assert_eq!(fit.fitted_contrast, Some(0.0));
        assert_eq!(fit.fitted_phase, None);
    }

    #[test]
    fn fit_rejects_short_or_partial_profiles() {
        let phi: Vec<f64> = (0..7).map(|j| TAU * j as f64 / 7.0).collect();
        assert!(fit_s_profile(&SProfile::from_samples(phi, vec![0.0; 7]).unwrap()).is_err());
        let phi: Vec<f64> = (0..10).map(|j| 0.3 * j as f64).collect();
        assert!(fit_s_profile(&SProfile::from_samples(phi, vec![0.0; 10]).unwrap()).is_err());
    }

    #[test]
    fn fit_tolerates_small_noise() {
        let rho = synchronized();
        let clean = s_profile(&rho, 16).unwrap();
        let c0 = fit_s_profile(&clean).unwrap().fitted_contrast.unwrap();
        let noise = Normal::new(0.0, 1e-4).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let values = clean.values.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let noisy = SProfile::from_samples(clean.phi_nodes.clone(), values).unwrap();
            let c = fit_s_profile(&noisy).unwrap().fitted_contrast.unwrap();
            assert!((c - c0).abs() < 0.05 * c0);
        }
    }

    #[test]
    fn csv_layout() {
        let grid = q_grid(&DensityMatrix::maximally_mixed(2), 3, 2).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "theta,phi,q");
        assert_eq!(lines.len(), 1 + 6 + 2);
        assert_eq!(lines[1].split(',').count(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn both_q_forms_agree(
            mx in -0.57f64..0.57, my in -0.57f64..0.57, mz in -0.57f64..0.57,
            theta in 0.0f64..PI, phi in 0.0f64..TAU,
        ) {
            let m = BlochVector::new(mx, my, mz);
            let rho = rho_from_bloch(m).unwrap();
            let dir = SpinCoherentDirection::new(theta, phi);
            prop_assert!((q_function(&rho, dir).unwrap() - q_function_bloch(&m, dir)).abs() < 1e-12);
        }

        #[test]
        fn s_quadrature_matches_closed_form(
            mx in -0.57f64..0.57, my in -0.57f64..0.57, mz in -0.57f64..0.57, phi in 0.0f64..TAU,
        ) {
            let rho = rho_from_bloch(BlochVector::new(mx, my, mz)).unwrap();
            let q = s_function_quadrature(&rho, phi).unwrap();
            prop_assert!((q - s_function(&rho, phi).unwrap()).abs() < 1e-8);
        }

        #[test]
        fn s_is_first_harmonic(mx in -0.57f64..0.57, my in -0.57f64..0.57, mz in -0.57f64..0.57) {
            let rho = rho_from_bloch(BlochVector::new(mx, my, mz)).unwrap();
            let profile = s_profile(&rho, 32).unwrap();
            let mean: f64 = profile.values.iter().sum::<f64>() * TAU / 32.0;
            prop_assert!(mean.abs() < 1e-8);
            let fit = fit_s_profile(&profile).unwrap();
            prop_assert!(fit.residual_rms.unwrap() <= 1e-12);
        }
    }
}
