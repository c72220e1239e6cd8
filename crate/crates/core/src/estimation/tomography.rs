//! Bloch-vector tomography from analysis pulses followed by `|1⟩` readout.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{MeasurementConfig, Measurer, Shots};
use crate::error::{Error, Result};
use crate::quantum::{pauli, rho_from_bloch, BlochVector, ComplexMatrix, DensityMatrix, Pauli};

/// Microwave Rabi frequency of the analysis pulses, rad/s.
pub const DETUNED_OMEGA_MW: f64 = std::f64::consts::TAU * 32.0e3;
/// Analysis π-pulse duration, s.
pub const DETUNED_TAU_PI: f64 = 15.6e-6;
pub const MLE_RESTARTS: usize = 10;
/// Log-likelihood change below which the ascent stops.
pub const MLE_TOL: f64 = 1e-9;
/// Smallest accepted ratio of singular values of the measurement directions.
pub const DESIGN_CONDITION_LIMIT: f64 = 1e-6;
const MAX_ASCENT_STEPS: usize = 1000;
const PROB_FLOOR: f64 = 1e-12;

/// `exp(−i · generator · duration)` applied before readout.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisPulse {
    pub generator: ComplexMatrix,
    pub duration: f64,
}

impl AnalysisPulse {
    pub fn new(generator: ComplexMatrix, duration: f64) -> Result<Self> {
        if generator.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: generator.dim() });
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::param("duration", format!("must be non-negative, got {duration}")));
        }
        // Rejects non-Hermitian generators.
        ComplexMatrix::unitary_from_generator(&generator, duration)?;
        Ok(Self { generator, duration })
    }

    pub fn identity() -> Self {
        Self { generator: ComplexMatrix::zeros(2), duration: 0.0 }
    }

    pub fn unitary(&self) -> ComplexMatrix {
        ComplexMatrix::unitary_from_generator(&self.generator, self.duration).expect("validated generator")
    }

    /// Direction `n` with `P(1) = (1 + n·m)/2` after this pulse.
    pub fn direction(&self) -> BlochVector {
        let u = self.unitary();
        let heis = &(&u.dagger() * &ComplexMatrix::projector(2, 1, 1)) * &u;
        crate::lindblad::bloch_of(&heis)
    }
}

/// `{exp(iπσ_y/4), exp(−iπσ_x/4), I}` with `Ω_MW τ = π`.
pub fn resonant_pulses() -> Vec<AnalysisPulse> {
    let omega = PI / DETUNED_TAU_PI;
    vec![
        AnalysisPulse { generator: pauli(Pauli::Y).scale_real(-omega / 4.0), duration: DETUNED_TAU_PI },
        AnalysisPulse { generator: pauli(Pauli::X).scale_real(omega / 4.0), duration: DETUNED_TAU_PI },
        AnalysisPulse::identity(),
    ]
}

/// The five non-orthogonal pulses `exp(−i(Δσ_z + Ωσ_{x,y})τ/4)`,
/// `exp(−i(Δσ_z + Ωσ_{x,y})τ/2)` and `I`.
pub fn detuned_pulses(delta: f64, omega_mw: f64, tau_pi: f64) -> Result<Vec<AnalysisPulse>> {
    if !(delta.is_finite() && omega_mw.is_finite() && tau_pi > 0.0) {
        return Err(Error::param("pulses", "need finite Δ, Ω_MW and positive τ_π"));
    }
    let z = pauli(Pauli::Z).scale_real(delta);
    let mut out = Vec::with_capacity(5);
    for axis in [Pauli::X, Pauli::Y] {
        let g = &z + &pauli(axis).scale_real(omega_mw);
        out.push(AnalysisPulse::new(g.scale_real(0.25), tau_pi)?);
        out.push(AnalysisPulse::new(g.scale_real(0.5), tau_pi)?);
    }
    out.push(AnalysisPulse::identity());
    Ok(out)
}

/// Exact `|1⟩` probability after the pulse.
pub fn predicted_population(rho: &DensityMatrix, pulse: &AnalysisPulse) -> Result<f64> {
    let u = pulse.unitary();
    let rotated = &(&u * rho.matrix()) * &u.dagger();
    Ok(rotated[(1, 1)].re.clamp(0.0, 1.0))
}

fn check_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: rho.dim() });
    }
    Ok(())
}

/// Three readouts mapped to `(m_k + 1)/2` and inverted, then clipped to the ball.
pub fn resonant_estimate(rho: &DensityMatrix, meas: &mut Measurer) -> Result<BlochVector> {
    check_qubit(rho)?;
    let mut m = [0.0; 3];
    for (k, pulse) in resonant_pulses().iter().enumerate() {
        m[k] = 2.0 * meas.sample_probability(predicted_population(rho, pulse)?) - 1.0;
    }
    Ok(BlochVector::from_array(m).clip_to_ball())
}

pub fn tomography_resonant(rho: &DensityMatrix, config: &MeasurementConfig) -> Result<BlochVector> {
    resonant_estimate(rho, &mut Measurer::new(*config))
}

struct Likelihood {
    dirs: Vec<Vector3<f64>>,
    freqs: Vec<f64>,
    weight: f64,
}

impl Likelihood {
    fn probs(&self, m: &Vector3<f64>) -> impl Iterator<Item = (f64, f64, &Vector3<f64>)> + '_ {
        let m = *m;
        self.dirs.iter().zip(&self.freqs).map(move |(n, &f)| {
            let q = (0.5 * (1.0 + n.dot(&m))).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            (q, f, n)
        })
    }

    fn value(&self, m: &Vector3<f64>) -> f64 {
        self.weight * self.probs(m).map(|(q, f, _)| f * q.ln() + (1.0 - f) * (1.0 - q).ln()).sum::<f64>()
    }

    fn gradient_and_curvature(&self, m: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let mut g = Vector3::zeros();
        let mut h = Matrix3::zeros();
        for (q, f, n) in self.probs(m) {
            g += n * (0.5 * self.weight * (f / q - (1.0 - f) / (1.0 - q)));
            h += n * n.transpose() * (0.25 * self.weight * (f / (q * q) + (1.0 - f) / ((1.0 - q) * (1.0 - q))));
        }
        (g, h)
    }
}

fn project(m: Vector3<f64>) -> Vector3<f64> {
    let r = m.norm();
    if r > 1.0 {
        m / r
    } else {
        m
    }
}

/// Projected ascent on the unit ball. The direction is the gradient
/// preconditioned by the Fisher curvature, with backtracking; plain gradient
/// steps take over when that direction makes no progress against the boundary.
fn ascend(l: &Likelihood, start: Vector3<f64>) -> (Vector3<f64>, f64) {
    let mut m = project(start);
    let mut v = l.value(&m);
    for _ in 0..MAX_ASCENT_STEPS {
        let (g, h) = l.gradient_and_curvature(&m);
        let newton = h.try_inverse().map(|inv| inv * g).filter(|d| d.iter().all(|x| x.is_finite()));
        let mut moved = None;
        for dir in newton.into_iter().chain(std::iter::once(g / g.norm().max(1e-300))) {
            let mut alpha = 1.0;
            while alpha > 1e-20 {
                let trial = project(m + dir * alpha);
                let tv = l.value(&trial);
                if tv > v {
                    moved = Some((trial, tv));
                    break;
                }
                alpha *= 0.5;
            }
            if moved.is_some() {
                break;
            }
        }
        let Some((next, nv)) = moved else { break };
        let (gain, step) = (nv - v, (next - m).norm());
        m = next;
        v = nv;
        if gain < MLE_TOL && step < 1e-10 {
            break;
        }
    }
    (m, v)
}

/// Maximum-likelihood Bloch vector from the five detuned analysis pulses,
/// using the default microwave parameters.
pub fn detuned_estimate(rho: &DensityMatrix, delta: f64, meas: &mut Measurer) -> Result<BlochVector> {
    detuned_estimate_with(rho, &detuned_pulses(delta, DETUNED_OMEGA_MW, DETUNED_TAU_PI)?, meas)
}

pub fn detuned_estimate_with(rho: &DensityMatrix, pulses: &[AnalysisPulse], meas: &mut Measurer) -> Result<BlochVector> {
    check_qubit(rho)?;
    let dirs: Vec<Vector3<f64>> = pulses
        .iter()
        .map(|p| {
            let d = p.direction();
            Vector3::new(d.x, d.y, d.z)
        })
        .collect();
    let mut design = nalgebra::DMatrix::<f64>::zeros(dirs.len(), 3);
    for (i, d) in dirs.iter().enumerate() {
        design.row_mut(i).copy_from(&d.transpose());
    }
    let sv = design.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if dirs.len() < 3 || ratio < DESIGN_CONDITION_LIMIT {
        return Err(Error::IllConditionedDesign { ratio });
    }
    let freqs = pulses
        .iter()
        .map(|p| Ok(meas.sample_probability(predicted_population(rho, p)?)))
        .collect::<Result<Vec<f64>>>()?;
    let weight = match meas.config().shots {
        Shots::Finite(n) => n as f64,
        Shots::Exact => 1.0,
    };
    let l = Likelihood { dirs, freqs, weight };
    // Restart points come from their own stream so the readout noise does not
    // depend on the optimizer.
    let mut rng = ChaCha20Rng::seed_from_u64(meas.config().rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut best = (Vector3::zeros(), f64::NEG_INFINITY);
    for _ in 0..MLE_RESTARTS {
        let start = loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() <= 1.0 {
                break v;
            }
        };
        let (m, v) = ascend(&l, start);
        if v > best.1 {
            best = (m, v);
        }
    }
    Ok(BlochVector::new(best.0.x, best.0.y, best.0.z).clip_to_ball())
}

pub fn tomography_detuned(rho: &DensityMatrix, delta: f64, config: &MeasurementConfig) -> Result<BlochVector> {
    detuned_estimate(rho, delta, &mut Measurer::new(*config))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TomographyMethod {
    Resonant,
    Detuned { delta: f64 },
}

/// Root-mean-square error per Bloch component, `sqrt(⟨|m̂ − m|²⟩/3)`, over
/// `replicas` seeds `rng_seed + i`, run in parallel.
pub fn tomography_rms(m_true: BlochVector, config: &MeasurementConfig, replicas: usize, method: TomographyMethod) -> Result<f64> {
    if replicas == 0 {
        return Err(Error::param("replicas", "must be at least 1"));
    }
    let rho = rho_from_bloch(m_true)?;
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(replicas);
    let chunk = replicas.div_ceil(workers);
    let sums: Vec<Result<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let rho = &rho;
                s.spawn(move || {
                    let mut acc = 0.0;
                    for i in (w * chunk)..((w + 1) * chunk).min(replicas) {
                        let mut meas = Measurer::new(config.with_seed(config.rng_seed.wrapping_add(i as u64)));
                        let est = match method {
                            TomographyMethod::Resonant => resonant_estimate(rho, &mut meas)?,
                            TomographyMethod::Detuned { delta } => detuned_estimate(rho, delta, &mut meas)?,
                        };
                        acc += est.sub(&m_true).norm().powi(2);
                    }
                    Ok(acc)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("tomography worker panicked")).collect()
    });
    let total: f64 = sums.into_iter().collect::<Result<Vec<f64>>>()?.iter().sum();
    Ok((total / (3 * replicas) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rho(x: f64, y: f64, z: f64) -> DensityMatrix {
        rho_from_bloch(BlochVector::new(x, y, z)).unwrap()
    }

    #[test]
    fn resonant_pulses_read_each_axis() {
        let dirs: Vec<[f64; 3]> = resonant_pulses().iter().map(|p| p.direction().to_array()).collect();
        let want = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for (d, w) in dirs.iter().zip(want) {
            for k in 0..3 {
                assert!((d[k] - w[k]).abs() < 1e-12, "{dirs:?}");
            }
        }
        for p in resonant_pulses().iter().chain(&detuned_pulses(1e4, DETUNED_OMEGA_MW, DETUNED_TAU_PI).unwrap()) {
            let u = p.unitary();
            assert!((&u * &u.dagger()).max_abs_diff(&ComplexMatrix::identity(2)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn exact_resonant_recovery() {
        let m = tomography_resonant(&rho(0.3, -0.2, 0.5), &MeasurementConfig::exact()).unwrap();
        assert!(m.max_abs_diff(&BlochVector::new(0.3, -0.2, 0.5)) < 1e-12);
    }

    #[test]
    fn readout_flips_shrink_the_estimate() {
        let e = 7e-3;
        let cfg = MeasurementConfig::new(Shots::Exact, e, 0).unwrap();
        let m = tomography_resonant(&rho(0.0, 0.0, -0.7), &cfg).unwrap();
        assert!((m.z.abs() - 0.7 * (1.0 - 2.0 * e)).abs() < 1e-12);
    }

    #[test]
    fn resonant_rms_at_thousand_shots() {
        let cfg = MeasurementConfig::new(Shots::Finite(1000), 0.0, 100).unwrap();
        let rms = tomography_rms(BlochVector::new(0.3, -0.2, 0.5), &cfg, 100, TomographyMethod::Resonant).unwrap();
        assert!(rms <= 0.05, "{rms}");
    }

    #[test]
    fn mixed_state_detuned_estimate_is_small() {
        let cfg = MeasurementConfig::new(Shots::Finite(10_000), 0.0, 5).unwrap();
        let m = tomography_detuned(&rho(0.0, 0.0, 0.0), 5.0 * crate::units::two_pi_khz(1.27), &cfg).unwrap();
        assert!(m.norm() <= 0.05, "{m:?}");
    }

    #[test]
    fn paper_design_is_well_conditioned() {
        for delta in [0.0, 5.0 * crate::units::two_pi_khz(1.27), -1e5] {
            assert!(tomography_detuned(&rho(0.1, 0.2, 0.3), delta, &MeasurementConfig::exact()).is_ok());
        }
    }

    #[test]
    fn coplanar_design_is_rejected() {
        // Identity and σ_x-axis rotations only probe the y-z plane.
        let pulses = vec![
            AnalysisPulse::identity(),
            AnalysisPulse::new(pauli(Pauli::X).scale_real(0.25), 1.0).unwrap(),
            AnalysisPulse::new(pauli(Pauli::X).scale_real(0.5), 1.0).unwrap(),
        ];
        let mut meas = Measurer::new(MeasurementConfig::exact());
        assert!(matches!(
            detuned_estimate_with(&rho(0.0, 0.0, 0.5), &pulses, &mut meas),
            Err(Error::IllConditionedDesign { .. })
        ));
    }

    #[test]
    fn detuned_agrees_with_resonant_at_zero_detuning() {
        let m_true = BlochVector::new(0.2, -0.4, -0.6);
        let cfg = MeasurementConfig::new(Shots::Finite(2000), 0.0, 9).unwrap();
        let a = tomography_rms(m_true, &cfg, 40, TomographyMethod::Resonant).unwrap();
        let b = tomography_rms(m_true, &cfg, 40, TomographyMethod::Detuned { delta: 0.0 }).unwrap();
        assert!(a < 0.06 && b < 0.06, "{a} {b}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(30))]
        #[test]
        fn exact_detuned_recovery(r in 0.0f64..0.98, theta in 0.0f64..PI, phi in 0.0f64..6.28) {
            let m = BlochVector::new(r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos());
            let est = tomography_detuned(&rho_from_bloch(m).unwrap(), 5.0 * crate::units::two_pi_khz(1.27), &MeasurementConfig::exact()).unwrap();
            prop_assert!(est.max_abs_diff(&m) < 1e-6, "{est:?} vs {m:?}");
        }
    }
}
