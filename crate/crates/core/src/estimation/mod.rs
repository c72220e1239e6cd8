//! Simulated measurement pipeline: projective readout with shot noise and
//! readout flips, exponential decay fits, Bloch-vector tomography and the
//! rate-calibration protocol.

mod fit;
mod protocol;
mod tomography;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::DensityMatrix;

pub use fit::{fit_damped_cosine, fit_decay, read_decay_csv, write_decay_csv, FitResult, MAX_FIT_ITERATIONS};
pub use protocol::{
    estimate_rates, ExperimentData, ProtocolConfig, RateEstimate, RateExperiment, Uncertain,
};
pub use tomography::{
    detuned_estimate, detuned_estimate_with, detuned_pulses, predicted_population, resonant_estimate,
    resonant_pulses, tomography_detuned, tomography_resonant, tomography_rms, AnalysisPulse, TomographyMethod,
    DESIGN_CONDITION_LIMIT, DETUNED_OMEGA_MW, DETUNED_TAU_PI, MLE_RESTARTS, MLE_TOL,
};

/// Readout error quoted for the experiment.
pub const DEFAULT_SPAM_ERROR: f64 = 7e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shots {
    Finite(u64),
    /// Infinite-shot limit: the exact outcome probability is returned.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub shots: Shots,
    pub spam_error: f64,
    pub rng_seed: u64,
}

impl MeasurementConfig {
    pub fn new(shots: Shots, spam_error: f64, rng_seed: u64) -> Result<Self> {
        if let Shots::Finite(0) = shots {
            return Err(Error::param("shots", "must be at least 1"));
        }
        if !(0.0..0.5).contains(&spam_error) {
            return Err(Error::param("spam_error", format!("must lie in [0, 0.5), got {spam_error}")));
        }
        Ok(Self { shots, spam_error, rng_seed })
    }

    pub fn finite(shots: u64, rng_seed: u64) -> Result<Self> {
        Self::new(Shots::Finite(shots), DEFAULT_SPAM_ERROR, rng_seed)
    }

    pub fn exact() -> Self {
        Self { shots: Shots::Exact, spam_error: 0.0, rng_seed: 0 }
    }

    pub fn with_spam(mut self, spam_error: f64) -> Result<Self> {
        self.spam_error = spam_error;
        Self::new(self.shots, spam_error, self.rng_seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Outcome probability after a symmetric readout flip with probability `e`.
pub fn flipped(p: f64, e: f64) -> f64 {
    p * (1.0 - e) + (1.0 - p) * e
}

/// A seeded measurement stream. Successive calls draw fresh shot noise.
#[derive(Debug, Clone)]
pub struct Measurer {
    config: MeasurementConfig,
    rng: ChaCha20Rng,
}

impl Measurer {
    pub fn new(config: MeasurementConfig) -> Self {
        Self { config, rng: ChaCha20Rng::seed_from_u64(config.rng_seed) }
    }

    pub fn config(&self) -> &MeasurementConfig {
        &self.config
    }

    /// Estimated probability of finding `|1⟩` given the true probability.
    pub fn sample_probability(&mut self, p: f64) -> f64 {
        let p_eff = flipped(p.clamp(0.0, 1.0), self.config.spam_error);
        match self.config.shots {
            Shots::Exact => p_eff,
            Shots::Finite(n) => {
                let k = Binomial::new(n, p_eff).expect("probability within [0, 1]").sample(&mut self.rng);
                k as f64 / n as f64
            }
        }
    }

    pub fn population(&mut self, rho: &DensityMatrix) -> Result<f64> {
        if rho.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: rho.dim() });
        }
        Ok(self.sample_probability(rho.population(1)))
    }
}

/// One projective `|1⟩` readout estimate from a fresh stream seeded by the config.
pub fn measure_population(rho: &DensityMatrix, config: &MeasurementConfig) -> Result<f64> {
    Measurer::new(*config).population(rho)
}
