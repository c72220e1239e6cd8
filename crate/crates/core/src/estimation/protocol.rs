//! Rate calibration from four decay experiments: gain alone from `|0⟩`,
//! damping alone from `|1⟩`, both from `|1⟩`, and the coherence of `|+⟩`
//! read out along σ_x.

use serde::{Deserialize, Serialize};

use super::fit::{fit_decay, FitResult};
use super::tomography::{predicted_population, resonant_pulses};
use super::{MeasurementConfig, Measurer, Shots, DEFAULT_SPAM_ERROR};
use crate::error::{Error, Result};
use crate::lindblad::{integrate_with, IntegrationOptions, Recording, Stepper};
use crate::quantum::{rho_from_bloch, BlochVector, DensityMatrix};
use crate::sync::{build_rotating_model, DriveParams, RateSet};

/// Integration steps between two readout times.
const STEPS_PER_POINT: usize = 20;
/// Each experiment spans this many e-foldings of its expected decay `e^{−γt/2}`.
const SPAN_EFOLDINGS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub shots: Shots,
    pub points: usize,
    pub spam_error: f64,
    pub rng_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { shots: Shots::Finite(500), points: 30, spam_error: DEFAULT_SPAM_ERROR, rng_seed: 0 }
    }
}

impl ProtocolConfig {
    pub fn exact() -> Self {
        Self { shots: Shots::Exact, spam_error: 0.0, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    fn measurement(&self, k: u64) -> Result<MeasurementConfig> {
        if self.points < 5 {
            return Err(Error::param("points", format!("need at least 5, got {}", self.points)));
        }
        MeasurementConfig::new(self.shots, self.spam_error, self.rng_seed ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateExperiment {
    /// `|0⟩` under the gain beam: decays at `Γ_g`.
    Gain,
    /// `|1⟩` under the damping beam: decays at `Γ_d`.
    Damping,
    /// `|1⟩` under both beams: decays at `Γ_g + Γ_d`.
    GainDamping,
    /// `|+⟩` under both beams, read out along σ_x: decays at `2Γ_z + (Γ_g+Γ_d)/2`.
    Coherence,
}

impl RateExperiment {
    pub const ALL: [RateExperiment; 4] = [Self::Gain, Self::Damping, Self::GainDamping, Self::Coherence];

    pub fn name(self) -> &'static str {
        match self {
            Self::Gain => "gain",
            Self::Damping => "damping",
            Self::GainDamping => "gain_damping",
            Self::Coherence => "coherence",
        }
    }

    /// Rates switched on during the experiment. Dephasing is kept everywhere;
    /// it does not touch the populations.
    fn active_rates(self, rates: &RateSet) -> Result<RateSet> {
        match self {
            Self::Gain => RateSet::new(rates.gamma_g(), 0.0, rates.gamma_z()),
            Self::Damping => RateSet::new(0.0, rates.gamma_d(), rates.gamma_z()),
            Self::GainDamping | Self::Coherence => Ok(*rates),
        }
    }

    fn initial(self) -> Result<DensityMatrix> {
        let m = match self {
            Self::Gain => BlochVector::new(0.0, 0.0, -1.0),
            Self::Damping | Self::GainDamping => BlochVector::new(0.0, 0.0, 1.0),
            Self::Coherence => BlochVector::new(1.0, 0.0, 0.0),
        };
        rho_from_bloch(m)
    }

    /// The decay rate `γ` in `A e^{−γt/2} + B` predicted by the model.
    pub fn expected_rate(self, rates: &RateSet) -> f64 {
        let (g, d, z) = (rates.gamma_g(), rates.gamma_d(), rates.gamma_z());
        match self {
            Self::Gain => g,
            Self::Damping => d,
            Self::GainDamping => g + d,
            Self::Coherence => 2.0 * z + 0.5 * (g + d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentData {
    pub experiment: RateExperiment,
    pub times: Vec<f64>,
    /// Measured `|1⟩` frequencies.
    pub populations: Vec<f64>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertain {
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub gamma_g: Uncertain,
    pub gamma_d: Uncertain,
    pub gamma_z: Uncertain,
    /// Fitted rate of the gain-plus-damping experiment.
    pub gamma_sum: Uncertain,
    /// Fitted rate of the coherence experiment.
    pub gamma_coherence: Uncertain,
    pub experiments: Vec<ExperimentData>,
}

impl RateEstimate {
    /// Point estimates as a rate set; fails if any came out negative.
    pub fn rates(&self) -> Result<RateSet> {
        RateSet::new(self.gamma_g.value, self.gamma_d.value, self.gamma_z.value)
    }
}

fn run_experiment(kind: RateExperiment, rates: &RateSet, config: &ProtocolConfig, k: u64) -> Result<ExperimentData> {
    let expected = kind.expected_rate(rates);
    if !(expected > 0.0) {
        return Err(Error::param("rates", format!("the {} experiment has no decay", kind.name())));
    }
    let span = SPAN_EFOLDINGS / (0.5 * expected);
    let intervals = config.points - 1;
    let dt = span / (intervals * STEPS_PER_POINT) as f64;
    let model = build_rotating_model(&kind.active_rates(rates)?, &DriveParams::undriven());
    let opts = IntegrationOptions::new(dt)
        .record_every(STEPS_PER_POINT)
        .recording(Recording::Full)
        .stepper(Stepper::Bloch);
    let traj = integrate_with(&model, &kind.initial()?, (0.0, span), &opts)?;
    let readout = &resonant_pulses()[0];
    let mut meas = Measurer::new(config.measurement(k)?);
    let populations = traj
        .states()
        .iter()
        .map(|rho| {
            let p = match kind {
                RateExperiment::Coherence => predicted_population(rho, readout)?,
                _ => rho.population(1),
            };
            Ok(meas.sample_probability(p))
        })
        .collect::<Result<Vec<f64>>>()?;
    let times = traj.times().to_vec();
    let fit = fit_decay(&times, &populations)?;
    Ok(ExperimentData { experiment: kind, times, populations, fit })
}

fn fitted_rate(data: &ExperimentData) -> Uncertain {
    Uncertain {
        value: data.fit.get("gamma").expect("decay fits name gamma"),
        sigma: data.fit.sigma("gamma").expect("decay fits name gamma"),
    }
}

/// Simulates the four experiments with the master equation, samples each
/// readout with shot noise and readout flips, and fits the decays.
/// `Γ_z = (γ_coh − (Γ_g+Γ_d)/2)/2`, with uncertainties added in quadrature.
pub fn estimate_rates(rates: &RateSet, config: &ProtocolConfig) -> Result<RateEstimate> {
    let experiments = RateExperiment::ALL
        .iter()
        .enumerate()
        .map(|(k, &kind)| run_experiment(kind, rates, config, k as u64))
        .collect::<Result<Vec<_>>>()?;
    let [g, d, sum, coh] = [0, 1, 2, 3].map(|i| fitted_rate(&experiments[i]));
    let gamma_z = Uncertain {
        value: 0.5 * (coh.value - 0.5 * (g.value + d.value)),
        sigma: 0.5 * (coh.sigma.powi(2) + 0.25 * g.sigma.powi(2) + 0.25 * d.sigma.powi(2)).sqrt(),
    };
    Ok(RateEstimate { gamma_g: g, gamma_d: d, gamma_z, gamma_sum: sum, gamma_coherence: coh, experiments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::reference_rates;
    use crate::units::{to_two_pi_khz, two_pi_khz};

    #[test]
    fn noiseless_rates_are_exact() {
        let r = reference_rates();
        let est = estimate_rates(&r, &ProtocolConfig::exact()).unwrap();
        assert!((est.gamma_g.value / r.gamma_g() - 1.0).abs() < 1e-6);
        assert!((est.gamma_d.value / r.gamma_d() - 1.0).abs() < 1e-6);
        assert!((est.gamma_z.value / r.gamma_z() - 1.0).abs() < 1e-6);
        assert!((to_two_pi_khz(est.gamma_sum.value) - 8.60).abs() < 1e-5);
        assert!((to_two_pi_khz(est.gamma_coherence.value) - 13.14).abs() < 1e-5);
    }

    #[test]
    fn combined_rate_within_measured_uncertainty() {
        let est = estimate_rates(&reference_rates(), &ProtocolConfig::exact()).unwrap();
        assert!((est.gamma_sum.value - two_pi_khz(8.59)).abs() <= two_pi_khz(0.39));
    }

    #[test]
    fn finite_shots_recover_gain_and_damping() {
        let r = reference_rates();
        for seed in 0..20 {
            let est = estimate_rates(&r, &ProtocolConfig::default().with_seed(seed)).unwrap();
            for (got, want) in [(est.gamma_g, r.gamma_g()), (est.gamma_d, r.gamma_d())] {
                assert!((got.value / want - 1.0).abs() < 0.1, "seed {seed}: {got:?} vs {want}");
                assert!(got.sigma > 0.0 && got.sigma.is_finite());
            }
        }
    }

    #[test]
    fn dephasing_estimate_is_unbiased_with_honest_errors() {
        let r = reference_rates();
        let runs: Vec<Uncertain> = (0..20)
            .map(|seed| estimate_rates(&r, &ProtocolConfig::default().with_seed(seed)).unwrap().gamma_z)
            .collect();
        let n = runs.len() as f64;
        let mean = runs.iter().map(|u| u.value).sum::<f64>() / n;
        let rms = (runs.iter().map(|u| (u.value - r.gamma_z()).powi(2)).sum::<f64>() / n).sqrt();
        let sigma = runs.iter().map(|u| u.sigma).sum::<f64>() / n;
        assert!((mean / r.gamma_z() - 1.0).abs() < 0.1, "mean {mean}");
        assert!((0.5..2.0).contains(&(rms / sigma)), "rms {rms}, reported {sigma}");
    }

    #[test]
    fn readout_flips_keep_the_rate() {
        let cfg = ProtocolConfig { shots: Shots::Exact, spam_error: 7e-3, ..ProtocolConfig::default() };
        let r = reference_rates();
        let est = estimate_rates(&r, &cfg).unwrap();
        assert!((est.gamma_g.value / r.gamma_g() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_too_few_points() {
        let cfg = ProtocolConfig { points: 3, ..ProtocolConfig::exact() };
        assert!(estimate_rates(&reference_rates(), &cfg).is_err());
    }
}
