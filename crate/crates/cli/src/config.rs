//! JSON experiment configuration. Every physical number is unit-tagged,
//! unknown keys are errors, and omitted fields take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinlock::effective::yb::{calibrate_rabi, Beams, YbParams};
use spinlock::estimation::{Shots, DEFAULT_SPAM_ERROR};
use spinlock::labframe::Taper;
use spinlock::lindblad::steady_state;
use spinlock::quantum::{rho_from_bloch, BlochVector, DensityMatrix};
use spinlock::sync::{build_rotating_model, limit_cycle, DriveParams, RateSet};

use crate::error::CliError;
use crate::units::{Quantity, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Relax,
    Sync,
    Qgrid,
    Sprofile,
    Tongue,
    Bandwidth,
    Deform,
    Forced,
    Eightlevel,
    Labframe,
    Ratefit,
    Tomography,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        Self::Relax,
        Self::Sync,
        Self::Qgrid,
        Self::Sprofile,
        Self::Tongue,
        Self::Bandwidth,
        Self::Deform,
        Self::Forced,
        Self::Eightlevel,
        Self::Labframe,
        Self::Ratefit,
        Self::Tomography,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Relax => "relax",
            Self::Sync => "sync",
            Self::Qgrid => "qgrid",
            Self::Sprofile => "sprofile",
            Self::Tongue => "tongue",
            Self::Bandwidth => "bandwidth",
            Self::Deform => "deform",
            Self::Forced => "forced",
            Self::Eightlevel => "eightlevel",
            Self::Labframe => "labframe",
            Self::Ratefit => "ratefit",
            Self::Tomography => "tomography",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Excited,
    Ground,
    Plus,
    LimitCycle,
    /// Stationary state of the configured drive.
    Steady,
    Bloch([f64; 3]),
}

impl StateSpec {
    pub fn density(&self, field: &str, rates: &RateSet, drive: &DriveParams) -> Result<DensityMatrix, CliError> {
        let m = match *self {
            StateSpec::Excited => BlochVector::new(0.0, 0.0, 1.0),
            StateSpec::Ground => BlochVector::new(0.0, 0.0, -1.0),
            StateSpec::Plus => BlochVector::new(1.0, 0.0, 0.0),
            StateSpec::LimitCycle => limit_cycle(rates)?,
            StateSpec::Steady => return Ok(steady_state(&build_rotating_model(rates, drive))?),
            StateSpec::Bloch(a) => BlochVector::from_array(a),
        };
        rho_from_bloch(m).map_err(|e| CliError::validation(field, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub gamma_g: Quantity,
    pub gamma_d: Quantity,
    pub gamma_z: Quantity,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self { gamma_g: Quantity::khz(1.27), gamma_d: Quantity::khz(7.33), gamma_z: Quantity::khz(4.42) }
    }
}

impl RatesSection {
    pub fn resolve(&self) -> Result<RateSet, CliError> {
        let g = self.gamma_g.frequency("rates.gamma_g", None)?;
        let d = self.gamma_d.frequency("rates.gamma_d", None)?;
        let z = self.gamma_z.frequency("rates.gamma_z", None)?;
        for (name, v) in [("rates.gamma_g", g), ("rates.gamma_d", d), ("rates.gamma_z", z)] {
            if v < 0.0 {
                return Err(CliError::validation(name, format!("must be non-negative, got {v} rad/s")));
            }
        }
        if g + d <= 0.0 {
            return Err(CliError::validation("rates", "gain and damping cannot both be zero"));
        }
        Ok(RateSet::new(g, d, z)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    pub epsilon: Quantity,
    /// `ω_q − ω`.
    pub delta: Quantity,
    pub varphi: Quantity,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self { epsilon: Quantity::khz(2.37), delta: Quantity::khz(0.0), varphi: Quantity::new(0.5, Unit::Pi) }
    }
}

impl DriveSection {
    pub fn resolve(&self, gamma_g: f64) -> Result<DriveParams, CliError> {
        let eps = self.epsilon.frequency("drive.epsilon", Some(gamma_g))?;
        if eps < 0.0 {
            return Err(CliError::validation("drive.epsilon", format!("must be non-negative, got {eps} rad/s")));
        }
        Ok(DriveParams::new(eps, self.delta.frequency("drive.delta", Some(gamma_g))?, self.varphi.angle("drive.varphi")?)?)
    }
}

/// `points` values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: Quantity,
    pub max: Quantity,
    pub points: usize,
}

impl Range {
    pub const fn new(min: Quantity, max: Quantity, points: usize) -> Self {
        Self { min, max, points }
    }

    pub fn frequencies(&self, field: &str, gamma_g: f64) -> Result<Vec<f64>, CliError> {
        let lo = self.min.frequency(&format!("{field}.min"), Some(gamma_g))?;
        let hi = self.max.frequency(&format!("{field}.max"), Some(gamma_g))?;
        linspace(field, lo, hi, self.points)
    }
}

pub fn linspace(field: &str, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if n < 2 {
        return Err(CliError::validation(format!("{field}.points"), format!("need at least 2, got {n}")));
    }
    if !(lo <= hi) {
        return Err(CliError::validation(field, format!("min {lo} exceeds max {hi}")));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn positive_time(q: &Quantity, field: &str) -> Result<f64, CliError> {
    let t = q.time(field)?;
    if t > 0.0 {
        Ok(t)
    } else {
        Err(CliError::validation(field, format!("must be positive, got {t} s")))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::validation(field, format!("need at least {min}, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxSection {
    pub initial: StateSpec,
    pub duration: Quantity,
    pub sample_dt: Quantity,
}

impl Default for RelaxSection {
    fn default() -> Self {
        Self { initial: StateSpec::Excited, duration: Quantity::micros(200.0), sample_dt: Quantity::micros(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxParams {
    pub initial: DensityMatrix,
    pub duration: f64,
    pub sample_dt: f64,
}

impl RelaxSection {
    pub fn resolve(&self, rates: &RateSet, drive: &DriveParams) -> Result<RelaxParams, CliError> {
        Ok(RelaxParams {
            initial: self.initial.density("relax.initial", rates, drive)?,
            duration: positive_time(&self.duration, "relax.duration")?,
            sample_dt: positive_time(&self.sample_dt, "relax.sample_dt")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSection {
    pub initial: StateSpec,
    /// Free evolution before the drive is switched on.
    pub stage1: Quantity,
    /// Driven evolution.
    pub stage2: Quantity,
    pub sample_dt: Quantity,
    pub s_nodes: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for SyncSection {
    fn default() -> Self {
        Self {
            initial: StateSpec::Excited,
            stage1: Quantity::micros(200.0),
            stage2: Quantity::micros(200.0),
            sample_dt: Quantity::micros(0.5),
            s_nodes: 64,
            n_theta: spinlock::phase_space::DEFAULT_THETA_NODES,
            n_phi: spinlock::phase_space::DEFAULT_PHI_NODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncParams {
    pub initial: DensityMatrix,
    pub stage1: f64,
    pub stage2: f64,
    pub sample_dt: f64,
    pub s_nodes: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SyncSection {
    pub fn resolve(&self, rates: &RateSet, drive: &DriveParams) -> Result<SyncParams, CliError> {
        Ok(SyncParams {
            initial: self.initial.density("sync.initial", rates, drive)?,
            stage1: positive_time(&self.stage1, "sync.stage1")?,
            stage2: positive_time(&self.stage2, "sync.stage2")?,
            sample_dt: positive_time(&self.sample_dt, "sync.sample_dt")?,
            s_nodes: at_least("sync.s_nodes", self.s_nodes, 8)?,
            n_theta: at_least("sync.n_theta", self.n_theta, 3)?,
            n_phi: at_least("sync.n_phi", self.n_phi, 2)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QGridSection {
    pub state: StateSpec,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for QGridSection {
    fn default() -> Self {
        Self {
            state: StateSpec::Steady,
            n_theta: spinlock::phase_space::DEFAULT_THETA_NODES,
            n_phi: spinlock::phase_space::DEFAULT_PHI_NODES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SProfileSection {
    pub state: StateSpec,
    pub nodes: usize,
}

impl Default for SProfileSection {
    fn default() -> Self {
        Self { state: StateSpec::Steady, nodes: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TongueSection {
    pub delta: Range,
    pub epsilon: Range,
    /// Also solve the master equation at every grid point and report the
    /// largest difference from the closed form.
    pub check_numeric: bool,
}

impl Default for TongueSection {
    fn default() -> Self {
        Self {
            delta: Range::new(Quantity::gamma_g(-25.0), Quantity::gamma_g(25.0), 101),
            epsilon: Range::new(Quantity::gamma_g(0.1), Quantity::gamma_g(6.0), 60),
            check_numeric: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthSection {
    pub epsilon: Quantity,
    pub delta: Range,
}

impl Default for BandwidthSection {
    fn default() -> Self {
        Self {
            epsilon: Quantity::gamma_g(1.87),
            delta: Range::new(Quantity::gamma_g(-25.0), Quantity::gamma_g(25.0), 501),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformSection {
    pub epsilon: Range,
}

impl Default for DeformSection {
    fn default() -> Self {
        Self { epsilon: Range::new(Quantity::gamma_g(0.0), Quantity::gamma_g(50.0), 501) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcedSection {
    pub epsilons: Vec<Quantity>,
    pub initial: StateSpec,
    /// Defaults to ten times the slowest nonzero rate's time constant.
    pub duration: Option<Quantity>,
    pub sample_dt: Quantity,
}

impl Default for ForcedSection {
    fn default() -> Self {
        Self {
            epsilons: vec![Quantity::gamma_g(1.87), Quantity::gamma_g(3.75), Quantity::gamma_g(28.7)],
            initial: StateSpec::LimitCycle,
            duration: None,
            sample_dt: Quantity::micros(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForcedParams {
    pub epsilons: Vec<f64>,
    pub initial: DensityMatrix,
    pub duration: f64,
    pub sample_dt: f64,
}

impl ForcedSection {
    pub fn resolve(&self, rates: &RateSet, drive: &DriveParams) -> Result<ForcedParams, CliError> {
        if self.epsilons.is_empty() {
            return Err(CliError::validation("forced.epsilons", "need at least one drive strength"));
        }
        let epsilons = self
            .epsilons
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let field = format!("forced.epsilons[{i}]");
                let e = q.frequency(&field, Some(rates.gamma_g()))?;
                if e < 0.0 {
                    return Err(CliError::validation(field, "must be non-negative"));
                }
                Ok(e)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let duration = match &self.duration {
            Some(q) => positive_time(q, "forced.duration")?,
            None => 10.0 / slowest_rate(rates),
        };
        Ok(ForcedParams {
            epsilons,
            initial: self.initial.density("forced.initial", rates, drive)?,
            duration,
            sample_dt: positive_time(&self.sample_dt, "forced.sample_dt")?,
        })
    }
}

/// Smallest nonzero rate of the set.
pub fn slowest_rate(rates: &RateSet) -> f64 {
    [rates.gamma_g(), rates.gamma_d(), rates.gamma_z()]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamsSection {
    pub gain: Quantity,
    pub damping: Quantity,
    /// Defaults to the P-state linewidth.
    #[serde(default)]
    pub repump0: Option<Quantity>,
    /// Defaults to the damping Rabi frequency.
    #[serde(default)]
    pub repump1: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EightLevelSection {
    pub gamma: Quantity,
    pub delta_p: Quantity,
    /// Defaults to `delta_p`.
    pub delta_s: Option<Quantity>,
    pub p_hyperfine: Quantity,
    pub omega_q: Quantity,
    pub raman_detuning: Quantity,
    /// Rabi frequencies; when absent the weak beams are calibrated to the
    /// configured gain and damping rates.
    pub rabi: Option<BeamsSection>,
    pub initial: Vec<StateSpec>,
    pub horizon: Quantity,
    pub sample: Quantity,
    /// Scale factors applied to both weak beams for the intensity ladder;
    /// empty to skip it.
    pub ladder: Vec<f64>,
}

impl Default for EightLevelSection {
    fn default() -> Self {
        Self {
            gamma: Quantity::new(19.6, Unit::TwoPiMhz),
            delta_p: Quantity::new(4.4, Unit::TwoPiMhz),
            delta_s: None,
            p_hyperfine: Quantity::new(2105.0, Unit::TwoPiMhz),
            omega_q: Quantity::new(12_642.812_118, Unit::TwoPiMhz),
            raman_detuning: Quantity::new(1.0, Unit::TwoPiMhz),
            rabi: None,
            initial: vec![StateSpec::Plus, StateSpec::Excited, StateSpec::Ground],
            horizon: Quantity::micros(400.0),
            sample: Quantity::micros(0.5),
            ladder: vec![1.0, 0.5, 0.25],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EightLevelParams {
    pub yb: YbParams,
    pub initial: Vec<(StateSpec, DensityMatrix)>,
    pub horizon: f64,
    pub sample: f64,
    pub ladder: Vec<f64>,
}

impl EightLevelSection {
    pub fn resolve(&self, rates: &RateSet, drive: &DriveParams) -> Result<EightLevelParams, CliError> {
        let g = Some(rates.gamma_g());
        let f = |q: &Quantity, name: &str| q.frequency(&format!("eightlevel.{name}"), g);
        let gamma = f(&self.gamma, "gamma")?;
        if !(gamma > 0.0) {
            return Err(CliError::validation("eightlevel.gamma", "must be positive"));
        }
        let delta_p = f(&self.delta_p, "delta_p")?;
        let delta_s = match &self.delta_s {
            Some(q) => f(q, "delta_s")?,
            None => delta_p,
        };
        let rabi = match &self.rabi {
            Some(b) => {
                let damping = f(&b.damping, "rabi.damping")?;
                Beams {
                    gain: f(&b.gain, "rabi.gain")?,
                    damping,
                    repump0: b.repump0.as_ref().map(|q| f(q, "rabi.repump0")).transpose()?.unwrap_or(gamma),
                    repump1: b.repump1.as_ref().map(|q| f(q, "rabi.repump1")).transpose()?.unwrap_or(damping),
                }
            }
            None => {
                let (gain, damping) = calibrate_rabi(rates.gamma_g(), rates.gamma_d(), gamma, delta_p)?;
                Beams { gain, damping, repump0: gamma, repump1: damping }
            }
        };
        if self.initial.is_empty() {
            return Err(CliError::validation("eightlevel.initial", "need at least one initial state"));
        }
        if self.ladder.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err(CliError::validation("eightlevel.ladder", "scale factors must be positive"));
        }
        if self.ladder.len() == 1 {
            return Err(CliError::validation("eightlevel.ladder", "need at least two factors for a slope, or none"));
        }
        let horizon = positive_time(&self.horizon, "eightlevel.horizon")?;
        let sample = positive_time(&self.sample, "eightlevel.sample")?;
        if sample > horizon {
            return Err(CliError::validation("eightlevel.sample", "exceeds the horizon"));
        }
        let initial = self
            .initial
            .iter()
            .enumerate()
            .map(|(i, s)| Ok((*s, s.density(&format!("eightlevel.initial[{i}]"), rates, drive)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(EightLevelParams {
            yb: YbParams {
                omega_q: f(&self.omega_q, "omega_q")?,
                delta_p,
                delta_s,
                p_hyperfine: f(&self.p_hyperfine, "p_hyperfine")?,
                raman_detuning: f(&self.raman_detuning, "raman_detuning")?,
                gamma,
                rabi,
            },
            initial,
            horizon,
            sample,
            ladder: self.ladder.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabCase {
    /// Used in output file names.
    pub label: String,
    /// `ω_q − ω`.
    pub delta: Quantity,
    /// Defaults to `drive.epsilon`.
    #[serde(default)]
    pub epsilon: Option<Quantity>,
    /// Defaults to `drive.varphi`.
    #[serde(default)]
    pub varphi: Option<Quantity>,
    /// Defaults to `labframe.initial`.
    #[serde(default)]
    pub initial: Option<StateSpec>,
    /// Defaults to `labframe.window`.
    #[serde(default)]
    pub window: Option<[Quantity; 2]>,
}

impl LabCase {
    fn simple(label: &str, delta_gamma_g: f64) -> Self {
        Self {
            label: label.into(),
            delta: Quantity::gamma_g(delta_gamma_g),
            epsilon: None,
            varphi: None,
            initial: None,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabFrameSection {
    pub omega_q: Quantity,
    pub initial: StateSpec,
    pub cases: Vec<LabCase>,
    /// The qubit evolves freely until the drive is switched on here.
    pub drive_start: Quantity,
    pub duration: Quantity,
    pub sample_dt: Quantity,
    /// Analysis window `[start, end]`.
    pub window: [Quantity; 2],
    pub taper: Taper,
    /// Half-width of the spectrum band written around `ω_q`.
    pub band: Quantity,
    /// Write every n-th trajectory sample; 0 writes no trajectory.
    pub trajectory_stride: usize,
}

impl Default for LabFrameSection {
    fn default() -> Self {
        Self {
            omega_q: Quantity::new(10.0, Unit::TwoPiMhz),
            initial: StateSpec::Plus,
            cases: vec![LabCase::simple("resonant", 0.0), LabCase::simple("below", 5.0), LabCase::simple("above", -10.0)],
            drive_start: Quantity::micros(200.0),
            duration: Quantity::micros(2000.0),
            sample_dt: Quantity::new(2.0, Unit::Nanos),
            window: [Quantity::micros(300.0), Quantity::micros(2000.0)],
            taper: Taper::Rectangular,
            band: Quantity::gamma_g(50.0),
            trajectory_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabRun {
    pub label: String,
    pub config: spinlock::labframe::LabFrameConfig,
    pub initial: DensityMatrix,
    pub window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabFrameParams {
    pub runs: Vec<LabRun>,
    pub taper: Taper,
    pub band: f64,
    pub trajectory_stride: usize,
}

impl LabFrameSection {
    pub fn resolve(&self, rates: &RateSet, drive: &DriveParams) -> Result<LabFrameParams, CliError> {
        use spinlock::labframe::{LabDrive, LabFrameConfig};
        let g = Some(rates.gamma_g());
        let omega_q = self.omega_q.frequency("labframe.omega_q", g)?;
        let duration = positive_time(&self.duration, "labframe.duration")?;
        let sample_dt = positive_time(&self.sample_dt, "labframe.sample_dt")?;
        let drive_start = self.drive_start.time("labframe.drive_start")?;
        if !(0.0 <= drive_start && drive_start < duration) {
            return Err(CliError::validation("labframe.drive_start", "must lie in [0, duration)"));
        }
        let window = |w: &[Quantity; 2], field: &str| -> Result<(f64, f64), CliError> {
            let (a, b) = (w[0].time(&format!("{field}[0]"))?, w[1].time(&format!("{field}[1]"))?);
            if !(0.0 <= a && a < b && b <= duration * (1.0 + 1e-12)) {
                return Err(CliError::validation(field, format!("need 0 <= start < end <= duration, got [{a}, {b}] s")));
            }
            Ok((a, b))
        };
        let default_window = window(&self.window, "labframe.window")?;
        if self.cases.is_empty() {
            return Err(CliError::validation("labframe.cases", "need at least one case"));
        }
        let mut runs = Vec::with_capacity(self.cases.len());
        for (i, c) in self.cases.iter().enumerate() {
            let field = format!("labframe.cases[{i}]");
            if c.label.is_empty() || !c.label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(CliError::validation(format!("{field}.label"), "use letters, digits, `_` or `-`"));
            }
            if runs.iter().any(|r: &LabRun| r.label == c.label) {
                return Err(CliError::validation(format!("{field}.label"), format!("duplicate label `{}`", c.label)));
            }
            let eps = match &c.epsilon {
                Some(q) => q.frequency(&format!("{field}.epsilon"), g)?,
                None => drive.epsilon(),
            };
            let varphi = match &c.varphi {
                Some(q) => q.angle(&format!("{field}.varphi"))?,
                None => drive.varphi(),
            };
            let delta = c.delta.frequency(&format!("{field}.delta"), g)?;
            let lab = LabDrive::from_detuning(eps, omega_q, delta, varphi);
            let config = LabFrameConfig::new(omega_q, lab, *rates, sample_dt, duration)?.with_drive_start(drive_start)?;
            let initial = c.initial.unwrap_or(self.initial).density(&format!("{field}.initial"), rates, drive)?;
            let window = match &c.window {
                Some(w) => window(w, &format!("{field}.window"))?,
                None => default_window,
            };
            runs.push(LabRun { label: c.label.clone(), config, initial, window });
        }
        let band = self.band.frequency("labframe.band", g)?;
        if !(band > 0.0) {
            return Err(CliError::validation("labframe.band", "must be positive"));
        }
        Ok(LabFrameParams { runs, taper: self.taper, band, trajectory_stride: self.trajectory_stride })
    }
}

/// A shot count or the word `"exact"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotsSpec {
    Count(u64),
    Word(String),
}

impl ShotsSpec {
    pub fn resolve(&self, field: &str) -> Result<Shots, CliError> {
        match self {
            ShotsSpec::Count(0) => Err(CliError::validation(field, "must be at least 1")),
            ShotsSpec::Count(n) => Ok(Shots::Finite(*n)),
            ShotsSpec::Word(w) if w == "exact" => Ok(Shots::Exact),
            ShotsSpec::Word(w) => Err(CliError::validation(field, format!("expected a count or \"exact\", got \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateFitSection {
    pub shots: ShotsSpec,
    pub points: usize,
    pub spam_error: f64,
}

impl Default for RateFitSection {
    fn default() -> Self {
        Self { shots: ShotsSpec::Count(500), points: 30, spam_error: DEFAULT_SPAM_ERROR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Resonant,
    Detuned { delta: Quantity },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographySection {
    pub bloch: [f64; 3],
    pub method: MethodSpec,
    pub shots: Vec<u64>,
    pub replicas: usize,
    pub spam_error: f64,
}

impl Default for TomographySection {
    fn default() -> Self {
        Self {
            bloch: [0.3, -0.2, 0.5],
            method: MethodSpec::Resonant,
            shots: vec![100, 1000, 10_000],
            replicas: 200,
            spam_error: 0.0,
        }
    }
}

/// Top-level configuration. Only the section belonging to the experiment may
/// be present; it is filled with defaults when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub rates: RatesSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relax: Option<RelaxSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<SyncSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qgrid: Option<QGridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprofile: Option<SProfileSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tongue: Option<TongueSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<BandwidthSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deform: Option<DeformSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forced: Option<ForcedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eightlevel: Option<EightLevelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labframe: Option<LabFrameSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratefit: Option<RateFitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tomography: Option<TomographySection>,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        let mut c = Self::empty();
        c.experiment = Some(kind);
        c
    }

    fn empty() -> Self {
        Self {
            experiment: None,
            rates: RatesSection::default(),
            drive: DriveSection::default(),
            seed: 0,
            output: None,
            relax: None,
            sync: None,
            qgrid: None,
            sprofile: None,
            tongue: None,
            bandwidth: None,
            deform: None,
            forced: None,
            eightlevel: None,
            labframe: None,
            ratefit: None,
            tomography: None,
        }
    }

    fn present_sections(&self) -> Vec<ExperimentKind> {
        use ExperimentKind::*;
        let flags = [
            (Relax, self.relax.is_some()),
            (Sync, self.sync.is_some()),
            (Qgrid, self.qgrid.is_some()),
            (Sprofile, self.sprofile.is_some()),
            (Tongue, self.tongue.is_some()),
            (Bandwidth, self.bandwidth.is_some()),
            (Deform, self.deform.is_some()),
            (Forced, self.forced.is_some()),
            (Eightlevel, self.eightlevel.is_some()),
            (Labframe, self.labframe.is_some()),
            (Ratefit, self.ratefit.is_some()),
            (Tomography, self.tomography.is_some()),
        ];
        flags.into_iter().filter(|(_, p)| *p).map(|(k, _)| k).collect()
    }

    /// Settles the experiment kind against the subcommand, rejects sections
    /// of other experiments and fills the experiment's section with defaults.
    pub fn resolve(mut self, requested: Option<ExperimentKind>) -> Result<Self, CliError> {
        let kind = match (self.experiment, requested) {
            (Some(a), Some(b)) if a != b => {
                return Err(CliError::validation(
                    "experiment",
                    format!("config is for `{}` but the command is `{}`", a.name(), b.name()),
                ))
            }
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => return Err(CliError::validation("experiment", "not given in the config or on the command line")),
        };
        if let Some(other) = self.present_sections().into_iter().find(|k| *k != kind) {
            return Err(CliError::validation(
                other.name(),
                format!("section does not apply to experiment `{}`", kind.name()),
            ));
        }
        self.experiment = Some(kind);
        use ExperimentKind::*;
        match kind {
            Relax => drop(self.relax.get_or_insert_with(Default::default)),
            Sync => drop(self.sync.get_or_insert_with(Default::default)),
            Qgrid => drop(self.qgrid.get_or_insert_with(Default::default)),
            Sprofile => drop(self.sprofile.get_or_insert_with(Default::default)),
            Tongue => drop(self.tongue.get_or_insert_with(Default::default)),
            Bandwidth => drop(self.bandwidth.get_or_insert_with(Default::default)),
            Deform => drop(self.deform.get_or_insert_with(Default::default)),
            Forced => drop(self.forced.get_or_insert_with(Default::default)),
            Eightlevel => drop(self.eightlevel.get_or_insert_with(Default::default)),
            Labframe => drop(self.labframe.get_or_insert_with(Default::default)),
            Ratefit => drop(self.ratefit.get_or_insert_with(Default::default)),
            Tomography => drop(self.tomography.get_or_insert_with(Default::default)),
        }
        // Validate the shared sections up front so errors name them.
        let rates = self.rates.resolve()?;
        self.drive.resolve(rates.gamma_g())?;
        Ok(self)
    }

    /// The experiment kind; set once [`ExperimentConfig::resolve`] succeeded.
    pub fn kind(&self) -> ExperimentKind {
        self.experiment.expect("resolved config")
    }
}

/// Parses JSON text. Syntax and schema errors carry line and column.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse { path: origin.to_string(), message: e.to_string() })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_config_str(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_relax_config_gets_defaults() {
        let c = parse_config_str(
            r#"{"experiment": "relax", "rates": {"gamma_g": {"2pi_kHz": 1.27}, "gamma_d": {"2pi_kHz": 7.33}, "gamma_z": {"2pi_kHz": 4.42}}}"#,
            "t",
        )
        .unwrap()
        .resolve(None)
        .unwrap();
        assert_eq!(c.relax, Some(RelaxSection::default()));
        assert_eq!(c.drive, DriveSection::default());
    }

    #[test]
    fn unit_tagged_drive_strength() {
        let c = parse_config_str(r#"{"drive": {"epsilon": {"value": 2.37, "unit": "2pi_kHz"}, "delta": {"rad/s": 0}, "varphi": {"rad": 0}}}"#, "t")
            .unwrap();
        let d = c.drive.resolve(1.0).unwrap();
        assert!((d.epsilon() - std::f64::consts::TAU * 2370.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rate_names_the_field() {
        let c = parse_config_str(r#"{"rates": {"gamma_g": {"2pi_kHz": -1}, "gamma_d": {"2pi_kHz": 7}, "gamma_z": {"2pi_kHz": 4}}}"#, "t")
            .unwrap();
        let e = c.resolve(Some(ExperimentKind::Relax)).unwrap_err();
        assert!(e.to_string().contains("rates.gamma_g"), "{e}");
        assert_eq!(e.exit_code(), crate::error::EXIT_VALIDATION);
    }

    #[test]
    fn unknown_keys_are_errors_with_position() {
        let e = parse_config_str("{\n  \"experiment\": \"relax\",\n  \"relax\": {\"duraton\": {\"us\": 1}}\n}", "cfg.json").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("unknown field `duraton`") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn foreign_sections_and_kind_mismatch_are_rejected() {
        let c = parse_config_str(r#"{"experiment": "relax", "tongue": {}}"#, "t").unwrap();
        assert!(c.resolve(None).is_err());
        let c = parse_config_str(r#"{"experiment": "relax"}"#, "t").unwrap();
        assert!(c.clone().resolve(Some(ExperimentKind::Sync)).is_err());
        assert!(parse_config_str("{}", "t").unwrap().resolve(None).is_err());
    }

    #[test]
    fn ranges_are_validated() {
        assert!(linspace("r", 1.0, 0.0, 5).is_err());
        assert!(linspace("r", 0.0, 1.0, 1).is_err());
        assert_eq!(linspace("r", 0.0, 1.0, 3).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn shots_spec() {
        assert_eq!(ShotsSpec::Word("exact".into()).resolve("s").unwrap(), Shots::Exact);
        assert!(ShotsSpec::Count(0).resolve("s").is_err());
        let s: RateFitSection = serde_json::from_str(r#"{"shots": "exact"}"#).unwrap();
        assert_eq!(s.shots.resolve("s").unwrap(), Shots::Exact);
    }

    #[test]
    fn resolved_config_echo_round_trips() {
        let c = ExperimentConfig::new(ExperimentKind::Labframe).resolve(None).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config_str(&text, "echo").unwrap(), c);
    }
}
