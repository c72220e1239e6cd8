//! Eight-level ¹⁷¹Yb⁺ model of the gain/damping scheme and its reduction to
//! an effective qubit.
//!
//! Levels: `|0⟩ = S(0,0)`, `|1⟩ = S(1,0)`, `S(1,∓1)`, `P(0,0)`, `P(1,0)`,
//! `P(1,∓1)`. Optical energies and optical laser frequencies are stored with
//! one common offset removed, so only differences of a few GHz appear.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{effective_lindblads, effective_model, qubit_rates, Coupling, EffectiveOptions, PartitionedModel};
use crate::error::{Error, Result};
use crate::lindblad::{integrate_with, suggest_dt, IntegrationOptions, LindbladTerm, OpenSystemModel};
use crate::quantum::{BlochVector, ComplexMatrix, DensityMatrix};
use crate::sync::{reference_rates, RateSet};

pub const Q0: usize = 0;
pub const Q1: usize = 1;
pub const S1_MINUS: usize = 2;
pub const S1_PLUS: usize = 3;
pub const P00: usize = 4;
pub const P10: usize = 5;
pub const P1_MINUS: usize = 6;
pub const P1_PLUS: usize = 7;
pub const N_LEVELS: usize = 8;

pub const LEVEL_NAMES: [&str; N_LEVELS] = ["S00", "S10", "S1-1", "S1+1", "P00", "P10", "P1-1", "P1+1"];

/// Weak beams above this fraction of the repump strength get a warning.
pub const REGIME_RATIO: f64 = 0.2;

/// Step refinement over `suggest_dt` used by [`validate_reduction`].
pub const STEP_REFINEMENT: f64 = 10.0;

/// Spontaneous decays `(from, to)`, each with rate `γ/3`.
pub const DECAYS: [(usize, usize); 12] = [
    (P00, S1_MINUS),
    (P00, Q1),
    (P00, S1_PLUS),
    (P10, Q0),
    (P10, S1_MINUS),
    (P10, S1_PLUS),
    (P1_MINUS, Q0),
    (P1_MINUS, Q1),
    (P1_MINUS, S1_MINUS),
    (P1_PLUS, Q0),
    (P1_PLUS, Q1),
    (P1_PLUS, S1_PLUS),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beams {
    pub gain: f64,
    pub damping: f64,
    pub repump0: f64,
    pub repump1: f64,
}

/// Physical parameters from which a level scheme is built. All values in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YbParams {
    /// Clock-transition frequency `|0⟩ → |1⟩`.
    pub omega_q: f64,
    /// Zeeman shift of `P(1,±1)`; both weak beams sit at the `P(1,0)` energy.
    pub delta_p: f64,
    /// Zeeman shift of `S(1,±1)`.
    pub delta_s: f64,
    /// Hyperfine splitting of the P manifold.
    pub p_hyperfine: f64,
    /// Offset of the weak-beam difference frequency from `omega_q`, split evenly
    /// between the two beams.
    pub raman_detuning: f64,
    pub gamma: f64,
    /// Rabi frequencies.
    pub rabi: Beams,
}

impl Default for YbParams {
    /// Weak beams calibrated to the reference gain and damping rates.
    fn default() -> Self {
        let gamma = TAU * 19.6e6;
        let delta_p = TAU * 4.4e6;
        let r = reference_rates();
        let (g, d) = calibrate_rabi(r.gamma_g(), r.gamma_d(), gamma, delta_p).expect("reference rates are valid");
        Self {
            omega_q: TAU * 12.642_812_118e9,
            delta_p,
            delta_s: delta_p,
            p_hyperfine: TAU * 2.105e9,
            raman_detuning: TAU * 1e6,
            gamma,
            rabi: Beams { gain: g, damping: d, repump0: gamma, repump1: d },
        }
    }
}

impl YbParams {
    pub fn with_rabi(mut self, gain: f64, damping: f64) -> Self {
        self.rabi.gain = gain;
        self.rabi.damping = damping;
        self
    }

    pub fn scheme(&self) -> Result<YbLevelScheme> {
        for (name, v) in [
            ("omega_q", self.omega_q),
            ("delta_p", self.delta_p),
            ("delta_s", self.delta_s),
            ("p_hyperfine", self.p_hyperfine),
            ("raman_detuning", self.raman_detuning),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        let mut energies = [0.0; N_LEVELS];
        energies[Q1] = self.omega_q;
        energies[S1_MINUS] = self.omega_q - self.delta_s;
        energies[S1_PLUS] = self.omega_q + self.delta_s;
        energies[P00] = -self.p_hyperfine;
        energies[P10] = 0.0;
        energies[P1_MINUS] = -self.delta_p;
        energies[P1_PLUS] = self.delta_p;
        let half = 0.5 * self.raman_detuning;
        let frequencies = Beams {
            gain: half,
            damping: -self.omega_q - half,
            repump0: -self.p_hyperfine - self.omega_q,
            repump1: -self.omega_q,
        };
        YbLevelScheme::new(energies, self.rabi, frequencies, self.gamma)
    }
}

/// Level energies, beam strengths and beam frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YbLevelScheme {
    pub energies: [f64; N_LEVELS],
    pub rabi: Beams,
    pub frequencies: Beams,
    pub gamma: f64,
}

impl YbLevelScheme {
    pub fn new(energies: [f64; N_LEVELS], rabi: Beams, frequencies: Beams, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
        }
        for (name, v) in [
            ("rabi.gain", rabi.gain),
            ("rabi.damping", rabi.damping),
            ("rabi.repump0", rabi.repump0),
            ("rabi.repump1", rabi.repump1),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if energies.iter().chain([frequencies.gain, frequencies.damping, frequencies.repump0, frequencies.repump1].iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("energies", "all energies and frequencies must be finite"));
        }
        Ok(Self { energies, rabi, frequencies, gamma })
    }

    /// Half the Zeeman splitting of `P(1,±1)`.
    pub fn delta_p(&self) -> f64 {
        0.5 * (self.energies[P1_PLUS] - self.energies[P1_MINUS])
    }

    /// Laser-driven transitions `(label, lower, upper, rabi, frequency)`.
    pub fn couplings(&self) -> Vec<(&'static str, usize, usize, f64, f64)> {
        let (r, f) = (self.rabi, self.frequencies);
        vec![
            ("gain", Q0, P1_MINUS, r.gain, f.gain),
            ("gain", Q0, P1_PLUS, r.gain, f.gain),
            ("damping", Q1, P1_MINUS, r.damping, f.damping),
            ("damping", Q1, P1_PLUS, r.damping, f.damping),
            ("repump0", S1_MINUS, P00, r.repump0, f.repump0),
            ("repump0", S1_PLUS, P00, r.repump0, f.repump0),
            ("repump1", S1_MINUS, P10, r.repump1, f.repump1),
            ("repump1", S1_PLUS, P10, r.repump1, f.repump1),
        ]
    }

    /// Beams that should be weak compared with the main repump but are not.
    pub fn regime_warnings(&self) -> Vec<String> {
        let limit = REGIME_RATIO * self.rabi.repump0;
        [("gain", self.rabi.gain), ("damping", self.rabi.damping), ("repump1", self.rabi.repump1)]
            .into_iter()
            .filter(|(_, v)| *v > limit)
            .map(|(name, v)| {
                format!("{name} Rabi frequency {v:.4e} exceeds {REGIME_RATIO} x repump0 ({limit:.4e}); elimination may be inaccurate")
            })
            .collect()
    }

    /// Per-level frame frequencies `λ_k` making every coupling static:
    /// `λ_upper − λ_lower = ω_beam`. The first level of each connected group
    /// keeps its bare energy.
    pub fn frame(&self) -> Result<[f64; N_LEVELS]> {
        let edges = self.couplings();
        let mut lambda = [f64::NAN; N_LEVELS];
        for root in 0..N_LEVELS {
            if !lambda[root].is_nan() {
                continue;
            }
            lambda[root] = self.energies[root];
            let mut queue = VecDeque::from([root]);
            while let Some(k) = queue.pop_front() {
                for &(label, lo, up, _, w) in &edges {
                    let (other, value) = if lo == k {
                        (up, lambda[k] + w)
                    } else if up == k {
                        (lo, lambda[k] - w)
                    } else {
                        continue;
                    };
                    if lambda[other].is_nan() {
                        lambda[other] = value;
                        queue.push_back(other);
                    } else {
                        let tol = 1e-9 * (value.abs().max(lambda[other].abs()) + w.abs()) + 1e-9;
                        if (lambda[other] - value).abs() > tol {
                            return Err(Error::InconsistentFrame(format!(
                                "beam `{label}` closes a loop through {} with mismatch {:.3e} rad/s",
                                LEVEL_NAMES[other],
                                lambda[other] - value
                            )));
                        }
                    }
                }
            }
        }
        Ok(lambda)
    }

    /// Hamiltonian in the co-rotating frame; time independent by construction.
    pub fn frame_hamiltonian(&self) -> Result<ComplexMatrix> {
        let lambda = self.frame()?;
        let diag: Vec<f64> = (0..N_LEVELS).map(|k| self.energies[k] - lambda[k]).collect();
        let mut h = ComplexMatrix::from_real_diagonal(&diag);
        for (_, lo, up, rabi, _) in self.couplings() {
            h[(lo, up)] += C64::new(0.5 * rabi, 0.0);
            h[(up, lo)] += C64::new(0.5 * rabi, 0.0);
        }
        Ok(h)
    }

    pub fn decay_terms(&self) -> Vec<LindbladTerm> {
        DECAYS
            .iter()
            .map(|&(from, to)| LindbladTerm { jump: ComplexMatrix::projector(N_LEVELS, to, from), rate: self.gamma / 3.0 })
            .collect()
    }
}

/// Full eight-level master equation in the co-rotating frame.
pub fn yb_full_model(scheme: &YbLevelScheme) -> Result<OpenSystemModel> {
    OpenSystemModel::time_independent(scheme.frame_hamiltonian()?, scheme.decay_terms())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepumpTreatment {
    /// Decays into `S(1,±1)` return to `|1⟩` immediately.
    #[default]
    Instant,
    /// Decays into `S(1,±1)` are lost from the qubit.
    None,
}

/// The eight-level model split into the qubit and six auxiliary levels.
pub fn yb_partitioned_model(scheme: &YbLevelScheme, repump: RepumpTreatment) -> Result<PartitionedModel> {
    let h = scheme.frame_hamiltonian()?;
    let na = N_LEVELS - 2;
    let h_t = ComplexMatrix::from_nalgebra(&h.to_nalgebra().view((0, 0), (2, 2)).into_owned())?;
    let h_a = ComplexMatrix::from_nalgebra(&h.to_nalgebra().view((2, 2), (na, na)).into_owned())?;
    let mut couplings = Vec::new();
    for (label, level, rabi) in [("gain", Q0, scheme.rabi.gain), ("damping", Q1, scheme.rabi.damping)] {
        let mut v = DMatrix::zeros(na, 2);
        for (l, lo, up, r, _) in scheme.couplings() {
            if l == label && lo == level {
                v[(up - 2, lo)] = C64::new(0.5 * r, 0.0);
            }
        }
        if rabi > 0.0 {
            couplings.push(Coupling { label: label.into(), frequency: 0.0, level, energy: h[(level, level)].re, v });
        }
    }
    let model = PartitionedModel::new(h_t, h_a, couplings, scheme.decay_terms())?;
    match repump {
        RepumpTreatment::Instant => model.with_routing(vec![(S1_MINUS - 2, Q1), (S1_PLUS - 2, Q1)]),
        RepumpTreatment::None => Ok(model),
    }
}

/// Effective qubit rates of the scheme with instantaneous repumping.
pub fn effective_rates(scheme: &YbLevelScheme) -> Result<RateSet> {
    qubit_rates(&effective_lindblads(&yb_partitioned_model(scheme, RepumpTreatment::Instant)?)?)
}

/// Rates for symmetric detunings `±Δ_P` of both weak beams:
/// `Γ_g = (8γ/3)Ω_g²/X`, `Γ_d = (4γ/3)Ω_d²/X`, `Γ_z = (γ/3)(2Ω_d² + Ω_g²)/X`
/// with `X = 4Δ_P² + γ²`.
pub fn closed_form_rates(gamma: f64, delta_p: f64, rabi_gain: f64, rabi_damping: f64) -> Result<RateSet> {
    let x = 4.0 * delta_p * delta_p + gamma * gamma;
    let (g2, d2) = (rabi_gain * rabi_gain, rabi_damping * rabi_damping);
    RateSet::new(8.0 * gamma * g2 / (3.0 * x), 4.0 * gamma * d2 / (3.0 * x), gamma * (2.0 * d2 + g2) / (3.0 * x))
}

/// Inverts the closed-form rates: weak-beam Rabi frequencies `(Ω_g, Ω_d)`
/// producing the requested gain and damping rates.
pub fn calibrate_rabi(gamma_g: f64, gamma_d: f64, gamma: f64, delta_p: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0) {
        return Err(Error::param("gamma", format!("must be positive, got {gamma}")));
    }
    if !(gamma_g >= 0.0 && gamma_d >= 0.0) {
        return Err(Error::param("rates", "gain and damping rates must be non-negative"));
    }
    let x = 4.0 * delta_p * delta_p + gamma * gamma;
    Ok(((3.0 * gamma_g * x / (8.0 * gamma)).sqrt(), (3.0 * gamma_d * x / (4.0 * gamma)).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub times: Vec<f64>,
    /// Qubit-block Bloch vectors of the full model (not renormalized).
    pub full: Vec<BlochVector>,
    pub effective: Vec<BlochVector>,
    pub max_bloch_deviation: f64,
    pub max_mz_deviation: f64,
    /// Smallest qubit-subspace population of the full model along the run.
    pub min_qubit_population: f64,
    pub final_qubit_population: f64,
    pub effective_rates: RateSet,
    pub warnings: Vec<String>,
}

/// Runs the full and the effective model from the same qubit state and
/// compares their qubit Bloch vectors every `sample` seconds up to `horizon`.
pub fn validate_reduction(
    scheme: &YbLevelScheme,
    initial: &DensityMatrix,
    horizon: f64,
    sample: f64,
) -> Result<ReductionReport> {
    if initial.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: initial.dim() });
    }
    if !(horizon > 0.0 && sample > 0.0 && sample <= horizon) {
        return Err(Error::param("sample", format!("need 0 < sample <= horizon, got {sample} and {horizon}")));
    }
    let warnings = scheme.regime_warnings();
    for w in &warnings {
        warn!("{w}");
    }
    let full = yb_full_model(scheme)?;
    let partitioned = yb_partitioned_model(scheme, RepumpTreatment::Instant)?;
    let reduced = effective_model(&partitioned, EffectiveOptions::default())?;
    let effective_rates = qubit_rates(&effective_lindblads(&partitioned)?)?;

    let n_samples = (horizon / sample).round().max(1.0) as usize;
    let span = (0.0, n_samples as f64 * sample);
    // Both runs are long compared with the fastest period, so the default step
    // is refined to keep RK4 phase error well below the deviations of interest.
    let opts = |model: &OpenSystemModel| {
        let per_sample = (STEP_REFINEMENT * sample / suggest_dt(model)).ceil().max(1.0) as usize;
        IntegrationOptions::new(sample / per_sample as f64).record_every(per_sample)
    };
    let mut rho_full = ComplexMatrix::zeros(N_LEVELS);
    for i in 0..2 {
        for j in 0..2 {
            rho_full[(i, j)] = initial.matrix()[(i, j)];
        }
    }
    let rho_full = DensityMatrix::new(rho_full)?;

    let (full_run, eff_run) = std::thread::scope(|s| {
        let a = s.spawn(|| integrate_with(&full, &rho_full, span, &opts(&full)));
        let b = s.spawn(|| integrate_with(&reduced, initial, span, &opts(&reduced)));
        (a.join().expect("full-model thread"), b.join().expect("effective-model thread"))
    });
    let (full_run, eff_run) = (full_run?, eff_run?);
    if full_run.len() != eff_run.len() {
        return Err(Error::DegenerateModel(format!(
            "sample grids differ: {} vs {} points",
            full_run.len(),
            eff_run.len()
        )));
    }

    let mut report = ReductionReport {
        times: eff_run.times().to_vec(),
        full: Vec::with_capacity(full_run.len()),
        effective: eff_run.bloch().to_vec(),
        max_bloch_deviation: 0.0,
        max_mz_deviation: 0.0,
        min_qubit_population: f64::INFINITY,
        final_qubit_population: 0.0,
        effective_rates,
        warnings,
    };
    for (rho, e) in full_run.states().iter().zip(eff_run.bloch()) {
        let m = rho.matrix();
        let block = ComplexMatrix::from_rows([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]);
        let b = crate::lindblad::bloch_of(&block);
        let population = (m[(0, 0)] + m[(1, 1)]).re;
        report.max_bloch_deviation = report.max_bloch_deviation.max(b.sub(e).norm());
        report.max_mz_deviation = report.max_mz_deviation.max((b.z - e.z).abs());
        report.min_qubit_population = report.min_qubit_population.min(population);
        report.final_qubit_population = population;
        report.full.push(b);
    }
    Ok(report)
}

/// Maximum `m_z` deviation with both weak beams scaled by each factor, and the
/// least-squares slope of `log(deviation)` against `log(factor)`.
pub fn rabi_ladder(
    params: &YbParams,
    factors: &[f64],
    initial: &DensityMatrix,
    horizon: f64,
    sample: f64,
) -> Result<(Vec<f64>, f64)> {
    if factors.len() < 2 {
        return Err(Error::param("factors", "need at least two scale factors"));
    }
    let mut deviations = Vec::with_capacity(factors.len());
    for &k in factors {
        let p = params.with_rabi(k * params.rabi.gain, k * params.rabi.damping);
        deviations.push(validate_reduction(&p.scheme()?, initial, horizon, sample)?.max_mz_deviation);
    }
    let xs: Vec<f64> = factors.iter().map(|k| k.ln()).collect();
    let ys: Vec<f64> = deviations.iter().map(|d| d.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok((deviations, sxy / sxx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{effective_hamiltonian, nonhermitian_h};
    use proptest::prelude::*;

    fn symmetric(gamma: f64, delta_p: f64, g: f64, d: f64) -> YbLevelScheme {
        let mut p = YbParams::default();
        p.gamma = gamma;
        p.delta_p = delta_p;
        p.raman_detuning = 0.0;
        p.rabi = Beams { gain: g, damping: d, repump0: gamma, repump1: d };
        p.scheme().unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn frame_makes_couplings_static() {
        let s = YbParams::default().scheme().unwrap();
        let lambda = s.frame().unwrap();
        for (_, lo, up, _, w) in s.couplings() {
            assert!((lambda[up] - lambda[lo] - w).abs() < 1e-3);
        }
        let h = s.frame_hamiltonian().unwrap();
        // Qubit splitting in the frame is minus the Raman offset.
        assert!((h[(Q1, Q1)].re - h[(Q0, Q0)].re + YbParams::default().raman_detuning).abs() < 1e-3);
    }

    #[test]
    fn p_levels_decay_at_half_gamma() {
        let s = YbParams::default().scheme().unwrap();
        let m = yb_partitioned_model(&s, RepumpTreatment::Instant).unwrap();
        let h = nonhermitian_h(&m).unwrap();
        for level in [P00, P10, P1_MINUS, P1_PLUS] {
            assert!((h[(level - 2, level - 2)].im + 0.5 * s.gamma).abs() < 1e-6 * s.gamma);
        }
        for level in [S1_MINUS, S1_PLUS] {
            assert_eq!(h[(level - 2, level - 2)].im, 0.0);
        }
    }

    #[test]
    fn symmetric_detuning_leaves_qubit_hamiltonian_unchanged() {
        let s = symmetric(TAU * 19.6e6, TAU * 4.4e6, TAU * 2e5, TAU * 4e5);
        let m = yb_partitioned_model(&s, RepumpTreatment::Instant).unwrap();
        let h_eff = effective_hamiltonian(&m).unwrap();
        let scale = s.rabi.damping.powi(2) / s.gamma;
        assert!(h_eff.max_abs_diff(m.h_t()).unwrap() < 1e-12 * scale);
    }

    #[test]
    fn reference_calibration() {
        let p = YbParams::default();
        assert!((p.rabi.gain / TAU / 1e3 - 105.9).abs() < 0.05);
        assert!((p.rabi.damping / TAU / 1e3 - 359.8).abs() < 0.05);
        let r = closed_form_rates(p.gamma, p.delta_p, p.rabi.gain, p.rabi.damping).unwrap();
        let want = reference_rates();
        assert!(rel(r.gamma_g(), want.gamma_g()) < 1e-12);
        assert!(rel(r.gamma_d(), want.gamma_d()) < 1e-12);
    }

    #[test]
    fn repump_doubles_decays_into_the_upper_state() {
        let s = symmetric(TAU * 19.6e6, TAU * 4.4e6, TAU * 1e5, TAU * 3e5);
        let with = qubit_rates(&effective_lindblads(&yb_partitioned_model(&s, RepumpTreatment::Instant).unwrap()).unwrap()).unwrap();
        let without = qubit_rates(&effective_lindblads(&yb_partitioned_model(&s, RepumpTreatment::None).unwrap()).unwrap()).unwrap();
        assert!(rel(with.gamma_g(), 2.0 * without.gamma_g()) < 1e-12);
        assert!(rel(with.gamma_d(), without.gamma_d()) < 1e-12);
    }

    #[test]
    fn regime_warning() {
        let mut p = YbParams::default();
        assert!(p.scheme().unwrap().regime_warnings().is_empty());
        p.rabi.gain = 0.5 * p.gamma;
        assert_eq!(p.scheme().unwrap().regime_warnings().len(), 1);
    }

    #[test]
    fn scheme_round_trips_through_json() {
        let s = YbParams::default().scheme().unwrap();
        let back: YbLevelScheme = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, back);
        assert!(serde_json::from_str::<YbParams>(r#"{"omega_q": 1.0, "bogus": 2}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn engine_reproduces_closed_form_rates(
            gamma_mhz in 5.0f64..40.0,
            delta_mhz in 0.5f64..20.0,
            g_khz in 10.0f64..600.0,
            d_khz in 10.0f64..600.0,
        ) {
            let (gamma, delta) = (TAU * gamma_mhz * 1e6, TAU * delta_mhz * 1e6);
            let s = symmetric(gamma, delta, TAU * g_khz * 1e3, TAU * d_khz * 1e3);
            let got = effective_rates(&s).unwrap();
            let want = closed_form_rates(gamma, delta, s.rabi.gain, s.rabi.damping).unwrap();
            prop_assert!(rel(got.gamma_g(), want.gamma_g()) < 1e-12, "{got:?} {want:?}");
            prop_assert!(rel(got.gamma_d(), want.gamma_d()) < 1e-12, "{got:?} {want:?}");
            prop_assert!(rel(got.gamma_z(), want.gamma_z()) < 1e-12, "{got:?} {want:?}");
        }
    }
}
