//! One runner per experiment kind. Each returns a serializable outcome that
//! goes into `report.json` and writes its tables as CSV.

use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;
use spinlock::effective::yb::{closed_form_rates, effective_rates, rabi_ladder, validate_reduction, YbParams};
use spinlock::estimation::{
    estimate_rates, fit_damped_cosine, tomography_rms, write_decay_csv, MeasurementConfig, ProtocolConfig, RateEstimate,
    Shots, TomographyMethod,
};
use spinlock::labframe::{extract_phase, spectrum, tone_amplitude, write_trajectory_csv, simulate_lab, Spectrum};
use spinlock::lindblad::{integrate_with, steady_state, suggest_dt, IntegrationOptions, OpenSystemModel, Recording, Trajectory};
use spinlock::output::sig17;
use spinlock::phase_space::{fit_s_profile, q_grid, s_profile, PhaseSpaceGrid, SProfile};
use spinlock::quantum::{bloch_from_rho, rho_from_bloch, wrap_pi, BlochVector, DensityMatrix};
use spinlock::sync::{
    bandwidth_3db, build_rotating_model, critical_epsilon, deformation, forced_oscillation_damping,
    forced_oscillation_frequency, half_width, limit_cycle, max_s, steady_bloch, sync_analytics, DriveParams, RateSet,
    SyncAnalytics,
};

use crate::config::{ExperimentConfig, ExperimentKind, MethodSpec, StateSpec};
use crate::error::CliError;
use crate::output::OutputDir;
use crate::sweep::{par_map, run_grid, Axis, SweepResult};

/// Rates and drive shared by every experiment.
pub fn base(config: &ExperimentConfig) -> Result<(RateSet, DriveParams), CliError> {
    let rates = config.rates.resolve()?;
    let drive = config.drive.resolve(rates.gamma_g())?;
    Ok((rates, drive))
}

/// Integrates over `[t0, t0 + duration]`, recording a state every
/// `sample_dt` (rounded so the samples divide the duration).
pub fn evolve(
    model: &OpenSystemModel,
    rho0: &DensityMatrix,
    t0: f64,
    duration: f64,
    sample_dt: f64,
) -> Result<Trajectory, CliError> {
    let samples = (duration / sample_dt).round().max(1.0) as usize;
    let per_sample = (duration / samples as f64 / suggest_dt(model)).ceil().max(1.0) as usize;
    let steps = samples * per_sample;
    // Slightly enlarged so the integrator's step count comes out as `steps`.
    let dt = duration / steps as f64 * (1.0 + 1e-12);
    let opts = IntegrationOptions::new(dt).record_every(per_sample).recording(Recording::Full);
    Ok(integrate_with(model, rho0, (t0, t0 + duration), &opts)?)
}

fn write_bloch_rows(w: &mut dyn Write, times: &[f64], bloch: &[BlochVector]) -> std::io::Result<()> {
    writeln!(w, "t,mx,my,mz")?;
    for (t, m) in times.iter().zip(bloch) {
        writeln!(w, "{},{},{},{}", sig17(*t), sig17(m.x), sig17(m.y), sig17(m.z))?;
    }
    Ok(())
}

/// `Max_φ S(φ)` of a state: the transverse length over 8.
fn state_max_s(m: &BlochVector) -> f64 {
    m.x.hypot(m.y) / 8.0
}

fn profile_of(rho: &DensityMatrix, nodes: usize) -> Result<SProfile, CliError> {
    Ok(fit_s_profile(&s_profile(rho, nodes)?)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxOutcome {
    pub limit_cycle: BlochVector,
    pub final_time: f64,
    pub final_bloch: BlochVector,
    /// Largest component difference between the final state and the limit cycle.
    pub final_deviation: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

/// Free relaxation under gain, damping and dephasing; the drive is off.
pub fn run_relax(config: &ExperimentConfig) -> Result<RelaxOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let p = config.relax.unwrap_or_default().resolve(&rates, &drive)?;
    let model = build_rotating_model(&rates, &DriveParams::undriven());
    let trajectory = evolve(&model, &p.initial, 0.0, p.duration, p.sample_dt)?;
    let lc = limit_cycle(&rates)?;
    let last = *trajectory.bloch().last().expect("non-empty trajectory");
    Ok(RelaxOutcome {
        limit_cycle: lc,
        final_time: trajectory.final_time(),
        final_bloch: last,
        final_deviation: last.max_abs_diff(&lc),
        trajectory,
    })
}

impl RelaxOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("trajectory.csv", |w| write_trajectory_csv(&self.trajectory, w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub label: String,
    pub time: f64,
    pub bloch: BlochVector,
    pub q_normalization: f64,
    pub s_contrast: Option<f64>,
    /// Fitted `argmax_φ S`, absent when the profile is flat.
    pub s_phase: Option<f64>,
    #[serde(skip)]
    pub grid: PhaseSpaceGrid,
    #[serde(skip)]
    pub profile: SProfile,
}

impl Snapshot {
    fn take(label: &str, time: f64, rho: &DensityMatrix, n_theta: usize, n_phi: usize, s_nodes: usize) -> Result<Self, CliError> {
        let grid = q_grid(rho, n_theta, n_phi)?;
        let profile = profile_of(rho, s_nodes)?;
        Ok(Self {
            label: label.into(),
            time,
            bloch: bloch_from_rho(rho)?,
            q_normalization: grid.normalization(),
            s_contrast: profile.fitted_contrast,
            s_phase: profile.fitted_phase,
            grid,
            profile,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SyncOutcome {
    pub limit_cycle: BlochVector,
    /// Largest component difference between the end of the free stage and the limit cycle.
    pub stage1_deviation: f64,
    pub analytic: SyncAnalytics,
    /// Fitted final S phase minus the analytic one, wrapped to `(−π, π]`.
    pub final_phase_error: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub bloch: Vec<BlochVector>,
}

/// Free relaxation for `stage1`, then the drive is switched on for `stage2`.
pub fn run_sync_timeline(config: &ExperimentConfig) -> Result<SyncOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let p = config.sync.unwrap_or_default().resolve(&rates, &drive)?;
    let free = evolve(&build_rotating_model(&rates, &DriveParams::undriven()), &p.initial, 0.0, p.stage1, p.sample_dt)?;
    let driven = evolve(&build_rotating_model(&rates, &drive), free.final_state(), p.stage1, p.stage2, p.sample_dt)?;
    let snap = |label: &str, t: f64, rho: &DensityMatrix| Snapshot::take(label, t, rho, p.n_theta, p.n_phi, p.s_nodes);
    let snapshots = vec![
        snap("start", 0.0, &p.initial)?,
        snap("stage1", free.final_time(), free.final_state())?,
        snap("end", driven.final_time(), driven.final_state())?,
    ];
    let analytic = sync_analytics(&rates, &drive)?;
    let lc = limit_cycle(&rates)?;
    let mut times = free.times().to_vec();
    let mut bloch = free.bloch().to_vec();
    times.extend_from_slice(&driven.times()[1..]);
    bloch.extend_from_slice(&driven.bloch()[1..]);
    Ok(SyncOutcome {
        limit_cycle: lc,
        stage1_deviation: snapshots[1].bloch.max_abs_diff(&lc),
        final_phase_error: snapshots[2].s_phase.map(|ph| wrap_pi(ph - analytic.sync_phase)),
        analytic,
        snapshots,
        times,
        bloch,
    })
}

impl SyncOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("trajectory.csv", |w| write_bloch_rows(w, &self.times, &self.bloch))?;
        for s in &self.snapshots {
            out.write_with(&format!("qgrid_{}.csv", s.label), |w| s.grid.write_csv(w))?;
            out.write_with(&format!("sprofile_{}.csv", s.label), |w| s.profile.write_csv(w))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QGridOutcome {
    pub bloch: BlochVector,
    pub n_theta: usize,
    pub n_phi: usize,
    pub normalization: f64,
    #[serde(skip)]
    pub grid: PhaseSpaceGrid,
}

pub fn run_qgrid(config: &ExperimentConfig) -> Result<QGridOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let s = config.qgrid.unwrap_or_default();
    if s.n_theta < 3 || s.n_phi < 2 {
        return Err(CliError::validation("qgrid", "need n_theta >= 3 and n_phi >= 2"));
    }
    let rho = s.state.density("qgrid.state", &rates, &drive)?;
    let grid = q_grid(&rho, s.n_theta, s.n_phi)?;
    Ok(QGridOutcome {
        bloch: bloch_from_rho(&rho)?,
        n_theta: s.n_theta,
        n_phi: s.n_phi,
        normalization: grid.normalization(),
        grid,
    })
}

impl QGridOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("qgrid.csv", |w| self.grid.write_csv(w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SProfileOutcome {
    pub bloch: BlochVector,
    pub fitted_contrast: Option<f64>,
    pub fitted_phase: Option<f64>,
    pub max_s: f64,
    /// Closed-form values for the configured drive.
    pub analytic: SyncAnalytics,
    #[serde(skip)]
    pub profile: SProfile,
}

pub fn run_sprofile(config: &ExperimentConfig) -> Result<SProfileOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let s = config.sprofile.unwrap_or_default();
    if s.nodes < 8 {
        return Err(CliError::validation("sprofile.nodes", format!("need at least 8, got {}", s.nodes)));
    }
    let rho = s.state.density("sprofile.state", &rates, &drive)?;
    let profile = profile_of(&rho, s.nodes)?;
    let bloch = bloch_from_rho(&rho)?;
    Ok(SProfileOutcome {
        bloch,
        fitted_contrast: profile.fitted_contrast,
        fitted_phase: profile.fitted_phase,
        max_s: state_max_s(&bloch),
        analytic: sync_analytics(&rates, &drive)?,
        profile,
    })
}

impl SProfileOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("sprofile.csv", |w| self.profile.write_csv(w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TongueOutcome {
    pub shape: Vec<usize>,
    /// Largest `Max S` on the grid and where it sits, in units of `Γ_g`.
    pub peak_value: f64,
    pub peak_delta: f64,
    pub peak_epsilon: f64,
    /// Largest `|Δ|` at which any ε-row peaks.
    pub max_row_peak_offset: f64,
    /// ε maximizing `Max S` in each Δ-column.
    pub column_argmax_epsilon: Vec<f64>,
    /// Largest difference between the closed form and the numeric steady state.
    pub max_numeric_deviation: Option<f64>,
    #[serde(skip)]
    pub sweep: SweepResult,
}

/// `Max_φ S(φ)` over detuning and drive strength. Axes in units of `Γ_g`.
pub fn run_tongue(config: &ExperimentConfig, workers: usize) -> Result<TongueOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let t = config.tongue.unwrap_or_default();
    let g = rates.gamma_g();
    let deltas = t.delta.frequencies("tongue.delta", g)?;
    let epsilons = t.epsilon.frequencies("tongue.epsilon", g)?;
    if epsilons[0] < 0.0 {
        return Err(CliError::validation("tongue.epsilon.min", "must be non-negative"));
    }
    let axes = vec![
        Axis::new("delta", "gamma_g", deltas.iter().map(|d| d / g).collect()),
        Axis::new("epsilon", "gamma_g", epsilons.iter().map(|e| e / g).collect()),
    ];
    let columns: &[&str] = if t.check_numeric { &["max_s", "max_s_numeric"] } else { &["max_s"] };
    let sweep = run_grid(axes, columns, workers, |p| {
        let d = DriveParams::new(p[1] * g, p[0] * g, drive.varphi())?;
        let analytic = max_s(&rates, &d)?;
        if !t.check_numeric {
            return Ok(vec![analytic]);
        }
        let m = bloch_from_rho(&steady_state(&build_rotating_model(&rates, &d))?)?;
        Ok(vec![analytic, state_max_s(&m)])
    })?;
    let (nd, ne) = (deltas.len(), epsilons.len());
    let values = sweep.column("max_s").expect("max_s column");
    let at = |i: usize, j: usize| values[i * ne + j];
    let (mut best, mut bi, mut bj) = (f64::NEG_INFINITY, 0, 0);
    for i in 0..nd {
        for j in 0..ne {
            if at(i, j) > best {
                (best, bi, bj) = (at(i, j), i, j);
            }
        }
    }
    let delta_axis = &sweep.axes[0].values;
    let eps_axis = &sweep.axes[1].values;
    let max_row_peak_offset = (0..ne)
        .map(|j| {
            let i = (0..nd).max_by(|&a, &b| at(a, j).total_cmp(&at(b, j))).expect("non-empty");
            delta_axis[i].abs()
        })
        .fold(0.0, f64::max);
    let column_argmax_epsilon = (0..nd)
        .map(|i| eps_axis[(0..ne).max_by(|&a, &b| at(i, a).total_cmp(&at(i, b))).expect("non-empty")])
        .collect();
    let max_numeric_deviation = sweep.column("max_s_numeric").map(|num| {
        num.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    });
    Ok(TongueOutcome {
        shape: sweep.shape(),
        peak_value: best,
        peak_delta: delta_axis[bi],
        peak_epsilon: eps_axis[bj],
        max_row_peak_offset,
        column_argmax_epsilon,
        max_numeric_deviation,
        sweep,
    })
}

impl TongueOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("tongue.csv", |w| self.sweep.write_csv(w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthOutcome {
    /// In units of `Γ_g`.
    pub epsilon: f64,
    pub resonant_max_s: f64,
    /// Closed-form half-maximum detuning and full width, in units of `Γ_g`.
    pub half_width: f64,
    pub bandwidth_3db: f64,
    /// Half-maximum detuning read off the grid by linear interpolation.
    pub grid_half_width: Option<f64>,
    #[serde(skip)]
    pub sweep: SweepResult,
}

/// First positive detuning where `values` falls below `target`, interpolated.
fn crossing_above_zero(deltas: &[f64], values: &[f64], target: f64) -> Option<f64> {
    let start = deltas.iter().position(|d| *d >= 0.0)?;
    (start..deltas.len() - 1).find_map(|i| {
        let (v0, v1) = (values[i], values[i + 1]);
        (v0 >= target && v1 < target).then(|| deltas[i] + (deltas[i + 1] - deltas[i]) * (v0 - target) / (v0 - v1))
    })
}

pub fn run_bandwidth(config: &ExperimentConfig, workers: usize) -> Result<BandwidthOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let b = config.bandwidth.unwrap_or_default();
    let g = rates.gamma_g();
    let eps = b.epsilon.frequency("bandwidth.epsilon", Some(g))?;
    if !(eps > 0.0) {
        return Err(CliError::validation("bandwidth.epsilon", "must be positive"));
    }
    let deltas = b.delta.frequencies("bandwidth.delta", g)?;
    let axes = vec![Axis::new("delta", "gamma_g", deltas.iter().map(|d| d / g).collect())];
    let sweep = run_grid(axes, &["max_s"], workers, |p| Ok(vec![max_s(&rates, &DriveParams::new(eps, p[0] * g, drive.varphi())?)?]))?;
    let resonant = max_s(&rates, &DriveParams::new(eps, 0.0, drive.varphi())?)?;
    let values = sweep.column("max_s").expect("max_s column");
    Ok(BandwidthOutcome {
        epsilon: eps / g,
        resonant_max_s: resonant,
        half_width: half_width(&rates, eps)? / g,
        bandwidth_3db: bandwidth_3db(&rates, eps)? / g,
        grid_half_width: crossing_above_zero(&sweep.axes[0].values, &values, 0.5 * resonant),
        sweep,
    })
}

impl BandwidthOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("bandwidth.csv", |w| self.sweep.write_csv(w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeformOutcome {
    /// Closed-form critical drive strength, in units of `Γ_g`.
    pub critical_epsilon: f64,
    /// Grid ε with the largest `Max S`, in units of `Γ_g`.
    pub grid_peak_epsilon: f64,
    /// Deformation at the largest ε of the grid.
    pub saturation: f64,
    /// `|m_z|` of the limit cycle, the large-drive limit of the deformation.
    pub limit_cycle_mz: f64,
    #[serde(skip)]
    pub sweep: SweepResult,
}

pub fn run_deform(config: &ExperimentConfig, workers: usize) -> Result<DeformOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let d = config.deform.unwrap_or_default();
    let g = rates.gamma_g();
    let eps = d.epsilon.frequencies("deform.epsilon", g)?;
    if eps[0] < 0.0 {
        return Err(CliError::validation("deform.epsilon.min", "must be non-negative"));
    }
    let axes = vec![Axis::new("epsilon", "gamma_g", eps.iter().map(|e| e / g).collect())];
    let sweep = run_grid(axes, &["deformation", "max_s"], workers, |p| {
        let e = p[0] * g;
        Ok(vec![deformation(&rates, e, drive.delta())?, max_s(&rates, &DriveParams::new(e, drive.delta(), drive.varphi())?)?])
    })?;
    let ms = sweep.column("max_s").expect("max_s column");
    let peak = (0..ms.len()).max_by(|&a, &b| ms[a].total_cmp(&ms[b])).expect("non-empty");
    let deform = sweep.column("deformation").expect("deformation column");
    Ok(DeformOutcome {
        critical_epsilon: critical_epsilon(&rates)? / g,
        grid_peak_epsilon: sweep.axes[0].values[peak],
        saturation: *deform.last().expect("non-empty"),
        limit_cycle_mz: limit_cycle(&rates)?.z.abs(),
        sweep,
    })
}

impl DeformOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("deform.csv", |w| self.sweep.write_csv(w))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForcedTrace {
    /// In units of `Γ_g`.
    pub epsilon: f64,
    pub steady_mz: f64,
    pub final_mz: f64,
    pub final_deviation: f64,
    /// Closed-form oscillation frequency and damping, in units of `Γ_g`.
    pub predicted_frequency: Option<f64>,
    pub predicted_damping: f64,
    /// Damped-cosine fit of `m_z`, in units of `Γ_g`; absent when the trace
    /// holds no resolvable oscillation.
    pub fitted_frequency: Option<f64>,
    pub fitted_damping: Option<f64>,
    /// Why the frequency is absent.
    pub unresolved: Option<String>,
    #[serde(skip)]
    pub mz: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForcedOutcome {
    pub duration: f64,
    pub traces: Vec<ForcedTrace>,
    #[serde(skip)]
    pub times: Vec<f64>,
}

/// Fitted `(Ω, κ)` of a damped cosine, or why there is none. A frequency
/// counts only if the trace spans a full period and the oscillation is
/// underdamped, `κ < Ω`.
fn resolve_oscillation(times: &[f64], values: &[f64]) -> Result<(f64, f64), String> {
    let fit = fit_damped_cosine(times, values).map_err(|e| e.to_string())?;
    let omega = fit.get("omega").expect("named parameter");
    let kappa = fit.get("kappa").expect("named parameter");
    let span = times.last().expect("non-empty") - times[0];
    if !(omega * span >= TAU) {
        return Err(format!("fitted frequency {omega:.4e} rad/s completes less than one period"));
    }
    if !(kappa < omega) {
        return Err(format!("overdamped: decay {kappa:.4e} /s exceeds frequency {omega:.4e} rad/s"));
    }
    Ok((omega, kappa))
}

pub fn run_forced(config: &ExperimentConfig, workers: usize) -> Result<ForcedOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let p = config.forced.clone().unwrap_or_default().resolve(&rates, &drive)?;
    let g = rates.gamma_g();
    let runs = par_map(&p.epsilons, workers, |&eps| -> Result<(Vec<f64>, ForcedTrace), CliError> {
        let d = DriveParams::new(eps, drive.delta(), drive.varphi())?;
        let traj = evolve(&build_rotating_model(&rates, &d), &p.initial, 0.0, p.duration, p.sample_dt)?;
        let mz = traj.component(2);
        let steady = steady_bloch(&rates, &d)?.z;
        let last = *mz.last().expect("non-empty");
        let fit = resolve_oscillation(traj.times(), &mz);
        let trace = ForcedTrace {
            epsilon: eps / g,
            steady_mz: steady,
            final_mz: last,
            final_deviation: (last - steady).abs(),
            predicted_frequency: forced_oscillation_frequency(&rates, eps).map(|w| w / g),
            predicted_damping: forced_oscillation_damping(&rates) / g,
            fitted_frequency: fit.as_ref().ok().map(|(w, _)| w / g),
            fitted_damping: fit.as_ref().ok().map(|(_, k)| k / g),
            unresolved: fit.err(),
            mz,
        };
        Ok((traj.times().to_vec(), trace))
    });
    let mut times = Vec::new();
    let mut traces = Vec::with_capacity(runs.len());
    for r in runs {
        let (t, trace) = r?;
        times = t;
        traces.push(trace);
    }
    Ok(ForcedOutcome { duration: p.duration, traces, times })
}

impl ForcedOutcome {
    /// `t` then one `m_z` column per drive strength, in the configured order.
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("forced.csv", |w| {
            let header: Vec<String> = std::iter::once("t".to_string())
                .chain((0..self.traces.len()).map(|i| format!("mz_{i}")))
                .collect();
            writeln!(w, "{}", header.join(","))?;
            for (k, t) in self.times.iter().enumerate() {
                let row: Vec<String> = std::iter::once(sig17(*t)).chain(self.traces.iter().map(|tr| sig17(tr.mz[k]))).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })?;
        Ok(())
    }
}

fn state_label(i: usize, s: &StateSpec) -> String {
    let name = match s {
        StateSpec::Excited => "excited",
        StateSpec::Ground => "ground",
        StateSpec::Plus => "plus",
        StateSpec::LimitCycle => "limit_cycle",
        StateSpec::Steady => "steady",
        StateSpec::Bloch(_) => "bloch",
    };
    format!("{i}_{name}")
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionRun {
    pub label: String,
    pub max_bloch_deviation: f64,
    pub max_mz_deviation: f64,
    pub min_qubit_population: f64,
    pub final_qubit_population: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub full: Vec<BlochVector>,
    #[serde(skip)]
    pub effective: Vec<BlochVector>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EightLevelOutcome {
    pub rabi_gain: f64,
    pub rabi_damping: f64,
    pub effective_rates: RateSet,
    pub closed_form_rates: RateSet,
    /// Largest relative difference between the closed form and the
    /// effective rates of the same scheme without the Raman offset, where
    /// the closed form is exact.
    pub closed_form_mismatch: f64,
    pub warnings: Vec<String>,
    pub runs: Vec<ReductionRun>,
    pub ladder_factors: Vec<f64>,
    pub ladder_deviations: Vec<f64>,
    /// Slope of log deviation against log beam scale.
    pub ladder_slope: Option<f64>,
}

pub fn run_eightlevel(config: &ExperimentConfig, workers: usize) -> Result<EightLevelOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let p = config.eightlevel.clone().unwrap_or_default().resolve(&rates, &drive)?;
    let scheme = p.yb.scheme()?;
    let eff = effective_rates(&scheme)?;
    let closed = closed_form_rates(p.yb.gamma, p.yb.delta_p, p.yb.rabi.gain, p.yb.rabi.damping)?;
    let unshifted = effective_rates(&YbParams { raman_detuning: 0.0, ..p.yb }.scheme()?)?;
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    let closed_form_mismatch = rel(unshifted.gamma_g(), closed.gamma_g())
        .max(rel(unshifted.gamma_d(), closed.gamma_d()))
        .max(rel(unshifted.gamma_z(), closed.gamma_z()));
    let runs = par_map(&p.initial, workers, |(spec, rho)| validate_reduction(&scheme, rho, p.horizon, p.sample).map(|r| (*spec, r)));
    let mut out_runs = Vec::with_capacity(runs.len());
    let mut warnings = Vec::new();
    for (i, r) in runs.into_iter().enumerate() {
        let (spec, report) = r?;
        for w in report.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        out_runs.push(ReductionRun {
            label: state_label(i, &spec),
            max_bloch_deviation: report.max_bloch_deviation,
            max_mz_deviation: report.max_mz_deviation,
            min_qubit_population: report.min_qubit_population,
            final_qubit_population: report.final_qubit_population,
            times: report.times,
            full: report.full,
            effective: report.effective,
        });
    }
    let (ladder_deviations, ladder_slope) = if p.ladder.is_empty() {
        (Vec::new(), None)
    } else {
        let (devs, slope) = rabi_ladder(&p.yb, &p.ladder, &p.initial[0].1, p.horizon, p.sample)?;
        (devs, Some(slope))
    };
    Ok(EightLevelOutcome {
        rabi_gain: p.yb.rabi.gain,
        rabi_damping: p.yb.rabi.damping,
        effective_rates: eff,
        closed_form_rates: closed,
        closed_form_mismatch,
        warnings,
        runs: out_runs,
        ladder_factors: p.ladder,
        ladder_deviations,
        ladder_slope,
    })
}

impl EightLevelOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        for r in &self.runs {
            out.write_with(&format!("eightlevel_{}.csv", r.label), |w| {
                writeln!(w, "t,full_mx,full_my,full_mz,eff_mx,eff_my,eff_mz")?;
                for ((t, a), b) in r.times.iter().zip(&r.full).zip(&r.effective) {
                    let cells = [*t, a.x, a.y, a.z, b.x, b.y, b.z].map(sig17);
                    writeln!(w, "{}", cells.join(","))?;
                }
                Ok(())
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LabCaseOutcome {
    pub label: String,
    /// Drive detuning `ω_q − ω` in units of `Γ_g`.
    pub delta: f64,
    pub varphi: f64,
    pub drive_frequency: f64,
    pub peak_frequency: Option<f64>,
    pub peak_magnitude: Option<f64>,
    pub bin_width: f64,
    /// `(peak − ω)/bin`.
    pub peak_offset_bins: Option<f64>,
    /// Phase of the `m_x` tone at the drive frequency.
    pub phase: Option<f64>,
    /// Phase relative to the first case, wrapped to `(−π, π]`.
    pub phase_shift: Option<f64>,
    pub amplitude: f64,
    #[serde(skip)]
    pub spectrum: Spectrum,
    #[serde(skip)]
    pub trajectory: Option<(Vec<f64>, Vec<BlochVector>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabFrameOutcome {
    pub omega_q: f64,
    pub cases: Vec<LabCaseOutcome>,
    #[serde(skip)]
    band: (f64, f64),
}

pub fn run_labframe(config: &ExperimentConfig, workers: usize) -> Result<LabFrameOutcome, CliError> {
    let (rates, drive) = base(config)?;
    let p = config.labframe.clone().unwrap_or_default().resolve(&rates, &drive)?;
    let g = rates.gamma_g();
    let results = par_map(&p.runs, workers, |run| -> Result<LabCaseOutcome, CliError> {
        let traj = simulate_lab(&run.config, &run.initial)?;
        let mx = traj.component(0);
        let spec = spectrum(traj.times(), &mx, run.window, p.taper)?;
        let w = run.config.drive.omega;
        let peak = spec.dominant_peak();
        let bin = spec.bin_width();
        let phase = extract_phase(traj.times(), &mx, w, run.window).ok();
        let trajectory = (p.trajectory_stride > 0).then(|| {
            let s = p.trajectory_stride;
            (traj.times().iter().step_by(s).copied().collect(), traj.bloch().iter().step_by(s).copied().collect())
        });
        Ok(LabCaseOutcome {
            label: run.label.clone(),
            delta: (run.config.omega_q - w) / g,
            varphi: run.config.drive.varphi,
            drive_frequency: w,
            peak_frequency: peak.map(|(f, _)| f),
            peak_magnitude: peak.map(|(_, m)| m),
            bin_width: bin,
            peak_offset_bins: peak.map(|(f, _)| (f - w) / bin),
            phase,
            phase_shift: None,
            amplitude: tone_amplitude(traj.times(), &mx, w, run.window)?,
            spectrum: spec,
            trajectory,
        })
    });
    let mut cases = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let first = cases[0].phase;
    for c in &mut cases {
        c.phase_shift = match (first, c.phase) {
            (Some(a), Some(b)) => Some(wrap_pi(b - a)),
            _ => None,
        };
    }
    let omega_q = p.runs[0].config.omega_q;
    Ok(LabFrameOutcome { omega_q, cases, band: (omega_q - p.band, omega_q + p.band) })
}

impl LabFrameOutcome {
    /// Spectra restricted to the band around `ω_q`, frequencies in Hz.
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        for c in &self.cases {
            out.write_with(&format!("spectrum_{}.csv", c.label), |w| {
                writeln!(w, "freq_hz,magnitude")?;
                for (f, m) in c.spectrum.frequencies.iter().zip(&c.spectrum.magnitudes) {
                    if (self.band.0..=self.band.1).contains(f) {
                        writeln!(w, "{},{}", sig17(f / TAU), sig17(*m))?;
                    }
                }
                Ok(())
            })?;
            if let Some((t, m)) = &c.trajectory {
                out.write_with(&format!("trajectory_{}.csv", c.label), |w| write_bloch_rows(w, t, m))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFitOutcome {
    /// Rates the data were simulated with, in `2π × kHz`.
    pub true_khz: [f64; 3],
    /// Estimates and their uncertainties, in `2π × kHz`.
    pub gamma_g_khz: [f64; 2],
    pub gamma_d_khz: [f64; 2],
    pub gamma_z_khz: [f64; 2],
    pub gamma_sum_khz: [f64; 2],
    pub gamma_coherence_khz: [f64; 2],
    /// Relative errors of the gain, damping and dephasing estimates.
    pub relative_errors: [f64; 3],
    /// Relative error of the coherence rate against `2Γ_z + (Γ_g+Γ_d)/2`.
    pub coherence_relative_error: f64,
    #[serde(skip)]
    pub estimate: RateEstimate,
}

pub fn run_ratefit(config: &ExperimentConfig) -> Result<RateFitOutcome, CliError> {
    let (rates, _) = base(config)?;
    let s = config.ratefit.clone().unwrap_or_default();
    let pc = ProtocolConfig {
        shots: s.shots.resolve("ratefit.shots")?,
        points: s.points,
        spam_error: s.spam_error,
        rng_seed: config.seed,
    };
    let est = estimate_rates(&rates, &pc)?;
    let khz = |w: f64| w / (TAU * 1e3);
    let pair = |u: spinlock::estimation::Uncertain| [khz(u.value), khz(u.sigma)];
    let rel = |a: f64, b: f64| (a / b - 1.0).abs();
    let coh = 2.0 * rates.gamma_z() + 0.5 * (rates.gamma_g() + rates.gamma_d());
    Ok(RateFitOutcome {
        true_khz: [khz(rates.gamma_g()), khz(rates.gamma_d()), khz(rates.gamma_z())],
        gamma_g_khz: pair(est.gamma_g),
        gamma_d_khz: pair(est.gamma_d),
        gamma_z_khz: pair(est.gamma_z),
        gamma_sum_khz: pair(est.gamma_sum),
        gamma_coherence_khz: pair(est.gamma_coherence),
        relative_errors: [
            rel(est.gamma_g.value, rates.gamma_g()),
            rel(est.gamma_d.value, rates.gamma_d()),
            rel(est.gamma_z.value, rates.gamma_z()),
        ],
        coherence_relative_error: rel(est.gamma_coherence.value, coh),
        estimate: est,
    })
}

impl RateFitOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        for e in &self.estimate.experiments {
            out.write_with(&format!("ratefit_{}.csv", e.experiment.name()), |w| write_decay_csv(&e.times, &e.populations, w))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TomographyOutcome {
    pub bloch: [f64; 3],
    pub shots: Vec<u64>,
    /// Per-component RMS error at each shot count.
    pub rms: Vec<f64>,
    /// Least-squares slope of log RMS against log shots.
    pub slope: Option<f64>,
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn run_tomography(config: &ExperimentConfig) -> Result<TomographyOutcome, CliError> {
    let (rates, _) = base(config)?;
    let s = config.tomography.clone().unwrap_or_default();
    let m = BlochVector::from_array(s.bloch);
    rho_from_bloch(m).map_err(|e| CliError::validation("tomography.bloch", e.to_string()))?;
    if s.shots.is_empty() || s.shots.contains(&0) {
        return Err(CliError::validation("tomography.shots", "need one or more positive shot counts"));
    }
    let mut sorted = s.shots.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != s.shots.len() {
        return Err(CliError::validation("tomography.shots", "shot counts must be distinct"));
    }
    if s.replicas == 0 {
        return Err(CliError::validation("tomography.replicas", "must be at least 1"));
    }
    let delta = match s.method {
        MethodSpec::Resonant => None,
        MethodSpec::Detuned { delta } => Some(delta.frequency("tomography.method.detuned.delta", Some(rates.gamma_g()))?),
    };
    let rms = s
        .shots
        .iter()
        .map(|&n| {
            let mc = MeasurementConfig::new(Shots::Finite(n), s.spam_error, config.seed)?;
            let method = match delta {
                None => TomographyMethod::Resonant,
                Some(delta) => TomographyMethod::Detuned { delta },
            };
            Ok(tomography_rms(m, &mc, s.replicas, method)?)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let slope = (s.shots.len() >= 2).then(|| {
        let lx: Vec<f64> = s.shots.iter().map(|&n| (n as f64).ln()).collect();
        let ly: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
        slope(&lx, &ly)
    });
    Ok(TomographyOutcome { bloch: s.bloch, shots: s.shots, rms, slope })
}

impl TomographyOutcome {
    pub fn write(&self, out: &mut OutputDir) -> Result<(), CliError> {
        out.write_with("tomography.csv", |w| {
            writeln!(w, "shots,rms")?;
            for (n, r) in self.shots.iter().zip(&self.rms) {
                writeln!(w, "{n},{}", sig17(*r))?;
            }
            Ok(())
        })?;
        Ok(())
    }
}

/// Runs the configured experiment, writes its tables and returns the results
/// for the report.
pub fn run_and_write(config: &ExperimentConfig, workers: usize, out: &mut OutputDir) -> Result<serde_json::Value, CliError> {
    fn finish<T: Serialize>(o: &T) -> Result<serde_json::Value, CliError> {
        serde_json::to_value(o).map_err(|e| CliError::io("serializing results", std::io::Error::other(e)))
    }
    match config.kind() {
        ExperimentKind::Relax => run_relax(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Sync => run_sync_timeline(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Qgrid => run_qgrid(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Sprofile => run_sprofile(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Tongue => run_tongue(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Bandwidth => run_bandwidth(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Deform => run_deform(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Forced => run_forced(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Eightlevel => run_eightlevel(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Labframe => run_labframe(config, workers).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Ratefit => run_ratefit(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
        ExperimentKind::Tomography => run_tomography(config).and_then(|o| o.write(out).and_then(|_| finish(&o))),
    }
}
