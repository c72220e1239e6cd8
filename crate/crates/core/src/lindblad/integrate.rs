use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::{bloch_of, Hamiltonian, OpenSystemModel};
use crate::error::{Error, Result};
use crate::quantum::matrix::matmul_into;
use crate::quantum::state::matrix_from_bloch;
use crate::quantum::{pauli, BlochVector, ComplexMatrix, DensityMatrix, Pauli};

/// Trace deviation or negative eigenvalue beyond which a run is abandoned.
pub const DIVERGENCE_TOL: f64 = 1e-6;
/// Hermiticity corrections larger than this are logged.
pub const DRIFT_LOG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepper {
    /// Bloch path for qubits, transfer matrix for other time-independent
    /// models, matrix RK4 otherwise.
    #[default]
    Auto,
    /// Classical RK4 on the density matrix.
    Matrix,
    /// RK4 on the Bloch vector; qubits only. Identical to `Matrix` up to rounding.
    Bloch,
    /// The RK4 one-step map of a time-independent Liouvillian, applied as a
    /// precomputed power between recorded samples.
    Superoperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recording {
    #[default]
    Full,
    /// Only Bloch vectors are kept (qubits only); the final state is still stored.
    BlochOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub dt: f64,
    /// Record every `record_every`-th step; the final step is always recorded.
    pub record_every: usize,
    pub recording: Recording,
    pub stepper: Stepper,
}

impl IntegrationOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, record_every: 1, recording: Recording::Full, stepper: Stepper::Auto }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn recording(mut self, r: Recording) -> Self {
        self.recording = r;
        self
    }

    pub fn stepper(mut self, s: Stepper) -> Self {
        self.stepper = s;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    bloch: Vec<BlochVector>,
    final_state: DensityMatrix,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Empty when recorded with [`Recording::BlochOnly`].
    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    /// Bloch vectors at each recorded time; empty unless the model is a qubit.
    pub fn bloch(&self) -> &[BlochVector] {
        &self.bloch
    }

    pub fn final_state(&self) -> &DensityMatrix {
        &self.final_state
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial point")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// One Bloch component (0 = x, 1 = y, 2 = z) as a time series.
    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.bloch.iter().map(|m| m.to_array()[axis]).collect()
    }
}

/// Integrates with step `dt` and records every step.
pub fn integrate(model: &OpenSystemModel, rho0: &DensityMatrix, t_span: (f64, f64), dt: f64) -> Result<Trajectory> {
    integrate_with(model, rho0, t_span, &IntegrationOptions::new(dt))
}

/// The step actually used is `(t1 - t0) / n` with `n = ceil((t1 - t0) / dt)`,
/// so it never exceeds `dt` and the run ends exactly at `t1`.
pub fn integrate_with(
    model: &OpenSystemModel,
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::param("t_span", format!("need finite t0 <= t1, got ({t0}, {t1})")));
    }
    if !(opts.dt > 0.0) {
        return Err(Error::param("dt", format!("must be positive, got {}", opts.dt)));
    }
    if opts.record_every == 0 {
        return Err(Error::param("record_every", "must be at least 1"));
    }
    let dim = model.dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rho0.dim() });
    }
    if opts.recording == Recording::BlochOnly && dim != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: dim });
    }
    let span = t1 - t0;
    let n_steps = if span == 0.0 { 0 } else { ((span / opts.dt) - 1e-9).ceil().max(1.0) as usize };
    let h = if n_steps == 0 { 0.0 } else { span / n_steps as f64 };
    let grid = Grid { t0, h, n_steps, every: opts.record_every };

    let stepper = match opts.stepper {
        Stepper::Auto if dim == 2 => Stepper::Bloch,
        Stepper::Auto if model.is_time_independent() => Stepper::Superoperator,
        Stepper::Auto => Stepper::Matrix,
        s => s,
    };
    let mut rec = Recorder::new(dim, opts.recording);
    match stepper {
        Stepper::Bloch => {
            if dim != 2 {
                return Err(Error::DimensionMismatch { expected: 2, found: dim });
            }
            run_bloch(model, rho0, &grid, &mut rec)?
        }
        Stepper::Matrix => run_matrix(model, rho0, &grid, &mut rec)?,
        Stepper::Superoperator => {
            if !model.is_time_independent() {
                return Err(Error::TimeDependentModel);
            }
            run_superoperator(model, rho0, &grid, &mut rec)?
        }
        Stepper::Auto => unreachable!("resolved above"),
    }
    Ok(rec.finish())
}

struct Grid {
    t0: f64,
    h: f64,
    n_steps: usize,
    every: usize,
}

impl Grid {
    fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.h
    }

    fn records(&self, step: usize) -> bool {
        step % self.every == 0 || step == self.n_steps
    }
}

struct Recorder {
    dim: usize,
    mode: Recording,
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    bloch: Vec<BlochVector>,
    last: Option<ComplexMatrix>,
    max_drift: f64,
}

impl Recorder {
    fn new(dim: usize, mode: Recording) -> Self {
        Self { dim, mode, times: vec![], states: vec![], bloch: vec![], last: None, max_drift: 0.0 }
    }

    fn push(&mut self, t: f64, rho: &ComplexMatrix) {
        self.times.push(t);
        if self.dim == 2 {
            self.bloch.push(bloch_of(rho));
        }
        if self.mode == Recording::Full {
            self.states.push(DensityMatrix::new_unchecked(rho.clone()));
        }
        self.last = Some(rho.clone());
    }

    fn push_bloch(&mut self, t: f64, m: BlochVector) {
        self.times.push(t);
        self.bloch.push(m);
        if self.mode == Recording::Full {
            self.states.push(DensityMatrix::new_unchecked(matrix_from_bloch(m)));
        }
        self.last = None;
    }

    fn finish(self) -> Trajectory {
        if self.max_drift > DRIFT_LOG_TOL {
            warn!("Hermiticity drift up to {:e} was corrected during integration", self.max_drift);
        }
        let final_state = match (self.last, self.bloch.last()) {
            (Some(m), _) => m,
            (None, Some(b)) => matrix_from_bloch(*b),
            (None, None) => unreachable!("initial state is always recorded"),
        };
        Trajectory {
            times: self.times,
            states: self.states,
            bloch: self.bloch,
            final_state: DensityMatrix::new_unchecked(final_state),
        }
    }
}

fn diverged(time: f64, reason: impl Into<String>) -> Error {
    Error::IntegrationDiverged { time, reason: reason.into() }
}

/// Replaces `rho` by its Hermitian part and checks trace and, when requested,
/// positivity. Returns the size of the Hermiticity correction.
fn drift_control(rho: &mut ComplexMatrix, t: f64, check_positivity: bool) -> Result<f64> {
    let correction = 0.5 * rho.hermiticity_error();
    if correction > 0.0 {
        *rho = rho.hermitian_part();
    }
    let tr = rho.trace();
    if !tr.re.is_finite() || (tr - C64::new(1.0, 0.0)).norm() > DIVERGENCE_TOL {
        return Err(diverged(t, format!("trace drifted to {tr}")));
    }
    if check_positivity {
        let min = rho.hermitian_eigenvalues()[0];
        if !(min >= -DIVERGENCE_TOL) {
            return Err(diverged(t, format!("negative eigenvalue {min:e}")));
        }
    }
    Ok(correction)
}

// ---------------------------------------------------------------------------
// Bloch path

struct BlochRhs {
    /// Dissipative part as the affine map `m ↦ d·m + c`.
    d: [[f64; 3]; 3],
    c: [f64; 3],
    field: FieldSource,
}

enum FieldSource {
    Constant([f64; 3]),
    Harmonic { base: [f64; 3], coupling: [f64; 3] },
    Callback,
}

/// `h` such that `H = h0·I + h·σ/2`, i.e. `h_k = Tr(H σ_k)`.
fn field_vector(h: &ComplexMatrix) -> [f64; 3] {
    bloch_of(h).to_array()
}

impl BlochRhs {
    fn new(model: &OpenSystemModel) -> Result<Self> {
        let sum = |rho: &ComplexMatrix| -> Result<[f64; 3]> {
            let mut acc = ComplexMatrix::zeros(2);
            for term in model.terms() {
                acc += &super::dissipator_matrix(&term.jump, rho)?.scale_real(term.rate);
            }
            Ok(bloch_of(&acc).to_array())
        };
        let c = sum(&ComplexMatrix::identity(2).scale_real(0.5))?;
        let mut d = [[0.0; 3]; 3];
        for (j, p) in [Pauli::X, Pauli::Y, Pauli::Z].into_iter().enumerate() {
            let col = sum(&pauli(p).scale_real(0.5))?;
            for i in 0..3 {
                d[i][j] = col[i];
            }
        }
        let field = match model.hamiltonian() {
            Hamiltonian::Constant(h) => FieldSource::Constant(field_vector(h)),
            Hamiltonian::Harmonic { base, coupling, .. } => {
                FieldSource::Harmonic { base: field_vector(base), coupling: field_vector(coupling) }
            }
            Hamiltonian::Callback { .. } => FieldSource::Callback,
        };
        Ok(Self { d, c, field })
    }

    fn field(&self, model: &OpenSystemModel, t: f64) -> Result<[f64; 3]> {
        Ok(match &self.field {
            FieldSource::Constant(h) => *h,
            FieldSource::Harmonic { base, coupling } => {
                let f = model.hamiltonian().drive_factor(t);
                [base[0] + f * coupling[0], base[1] + f * coupling[1], base[2] + f * coupling[2]]
            }
            FieldSource::Callback => field_vector(&model.hamiltonian_at(t)?),
        })
    }

    fn eval(&self, h: &[f64; 3], m: &[f64; 3]) -> [f64; 3] {
        let cross = [h[1] * m[2] - h[2] * m[1], h[2] * m[0] - h[0] * m[2], h[0] * m[1] - h[1] * m[0]];
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = cross[i] + self.c[i] + self.d[i][0] * m[0] + self.d[i][1] * m[1] + self.d[i][2] * m[2];
        }
        out
    }
}

fn axpy3(m: &[f64; 3], a: f64, k: &[f64; 3]) -> [f64; 3] {
    [m[0] + a * k[0], m[1] + a * k[1], m[2] + a * k[2]]
}

fn run_bloch(model: &OpenSystemModel, rho0: &DensityMatrix, grid: &Grid, rec: &mut Recorder) -> Result<()> {
    let f = BlochRhs::new(model)?;
    let mut m = bloch_of(rho0.matrix()).to_array();
    rec.push_bloch(grid.t0, BlochVector::from_array(m));
    let h = grid.h;
    for step in 0..grid.n_steps {
        let t = grid.time(step);
        let h0 = f.field(model, t)?;
        let hm = f.field(model, t + 0.5 * h)?;
        let h1 = f.field(model, t + h)?;
        let k1 = f.eval(&h0, &m);
        let k2 = f.eval(&hm, &axpy3(&m, 0.5 * h, &k1));
        let k3 = f.eval(&hm, &axpy3(&m, 0.5 * h, &k2));
        let k4 = f.eval(&h1, &axpy3(&m, h, &k3));
        for i in 0..3 {
            m[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = grid.time(step + 1);
        let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        if !norm.is_finite() {
            return Err(diverged(t_next, "non-finite Bloch vector"));
        }
        if norm > 1.0 + 2.0 * DIVERGENCE_TOL {
            return Err(diverged(t_next, format!("negative eigenvalue {:e}", 0.5 * (1.0 - norm))));
        }
        if grid.records(step + 1) {
            rec.push_bloch(t_next, BlochVector::from_array(m));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Matrix path

struct MatrixRhs {
    /// `-(i/2) Σ rate·A†A`
    damping: ComplexMatrix,
    /// `(sqrt(rate)·A, sqrt(rate)·A†)`
    jumps: Vec<(ComplexMatrix, ComplexMatrix)>,
    constant: Option<ComplexMatrix>,
    harmonic: Option<(ComplexMatrix, ComplexMatrix)>,
    x: ComplexMatrix,
    y: ComplexMatrix,
}

impl MatrixRhs {
    fn new(model: &OpenSystemModel) -> Self {
        let dim = model.dim();
        let damping = model.decay_generator().scale(C64::new(0.0, -0.5));
        let jumps = model
            .terms()
            .iter()
            .filter(|t| t.rate > 0.0)
            .map(|t| {
                let a = t.jump.scale_real(t.rate.sqrt());
                let ad = a.dagger();
                (a, ad)
            })
            .collect();
        let (constant, harmonic) = match model.hamiltonian() {
            Hamiltonian::Constant(h) => (Some(h + &damping), None),
            Hamiltonian::Harmonic { base, coupling, .. } => (None, Some((base + &damping, coupling.clone()))),
            Hamiltonian::Callback { .. } => (None, None),
        };
        Self { damping, jumps, constant, harmonic, x: ComplexMatrix::zeros(dim), y: ComplexMatrix::zeros(dim) }
    }

    /// `H(t) − (i/2) Σ rate·A†A`
    fn heff(&self, model: &OpenSystemModel, t: f64) -> Result<ComplexMatrix> {
        if let Some(h) = &self.constant {
            return Ok(h.clone());
        }
        if let Some((base, coupling)) = &self.harmonic {
            let f = model.hamiltonian().drive_factor(t);
            return Ok(if f == 0.0 { base.clone() } else { base + &(coupling * f) });
        }
        Ok(&model.hamiltonian_at(t)? + &self.damping)
    }

    /// `out = −i(Heff ρ − ρ Heff†) + Σ AρA†`, using `ρ Heff† = (Heff ρ)†` for Hermitian `ρ`.
    fn eval(&mut self, heff: &ComplexMatrix, rho: &ComplexMatrix, out: &mut ComplexMatrix) {
        let n = rho.dim();
        matmul_into(heff, rho, &mut self.x);
        {
            let x = self.x.as_slice();
            let o = out.as_mut_slice();
            for i in 0..n {
                for j in 0..n {
                    let a = x[i * n + j];
                    let b = x[j * n + i].conj();
                    o[i * n + j] = C64::new(0.0, -1.0) * (a - b);
                }
            }
        }
        for (a, ad) in &self.jumps {
            matmul_into(a, rho, &mut self.x);
            matmul_into(&self.x, ad, &mut self.y);
            for (o, y) in out.as_mut_slice().iter_mut().zip(self.y.as_slice()) {
                *o += y;
            }
        }
    }
}

fn lincomb(out: &mut ComplexMatrix, base: &ComplexMatrix, a: f64, k: &ComplexMatrix) {
    for ((o, b), k) in out.as_mut_slice().iter_mut().zip(base.as_slice()).zip(k.as_slice()) {
        *o = b + k * a;
    }
}

fn run_matrix(model: &OpenSystemModel, rho0: &DensityMatrix, grid: &Grid, rec: &mut Recorder) -> Result<()> {
    let dim = model.dim();
    let mut f = MatrixRhs::new(model);
    let mut rho = rho0.matrix().clone();
    rec.push(grid.t0, &rho);
    let mut k1 = ComplexMatrix::zeros(dim);
    let mut k2 = ComplexMatrix::zeros(dim);
    let mut k3 = ComplexMatrix::zeros(dim);
    let mut k4 = ComplexMatrix::zeros(dim);
    let mut tmp = ComplexMatrix::zeros(dim);
    let h = grid.h;
    for step in 0..grid.n_steps {
        let t = grid.time(step);
        let h0 = f.heff(model, t)?;
        let hm = f.heff(model, t + 0.5 * h)?;
        let h1 = f.heff(model, t + h)?;
        f.eval(&h0, &rho, &mut k1);
        lincomb(&mut tmp, &rho, 0.5 * h, &k1);
        f.eval(&hm, &tmp, &mut k2);
        lincomb(&mut tmp, &rho, 0.5 * h, &k2);
        f.eval(&hm, &tmp, &mut k3);
        lincomb(&mut tmp, &rho, h, &k3);
        f.eval(&h1, &tmp, &mut k4);
        for (i, r) in rho.as_mut_slice().iter_mut().enumerate() {
            *r += (k1.as_slice()[i] + (k2.as_slice()[i] + k3.as_slice()[i]) * 2.0 + k4.as_slice()[i]) * (h / 6.0);
        }
        let t_next = grid.time(step + 1);
        let record = grid.records(step + 1);
        // Positivity is cheap in closed form for qubits; larger systems are
        // checked at recorded samples.
        let drift = drift_control(&mut rho, t_next, dim == 2 || record)?;
        rec.max_drift = rec.max_drift.max(drift);
        if record {
            rec.push(t_next, &rho);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Transfer-matrix path

fn run_superoperator(model: &OpenSystemModel, rho0: &DensityMatrix, grid: &Grid, rec: &mut Recorder) -> Result<()> {
    let dim = model.dim();
    let l = super::liouvillian(model)?;
    let n2 = dim * dim;
    let hl = &l * C64::new(grid.h, 0.0);
    let mut step_map = DMatrix::<C64>::identity(n2, n2);
    let mut term = DMatrix::<C64>::identity(n2, n2);
    for k in 1..=4 {
        term = &term * &hl / C64::new(k as f64, 0.0);
        step_map += &term;
    }
    let stride_map = matrix_power(&step_map, grid.every.min(grid.n_steps.max(1)));
    debug!("transfer-matrix stepping: {} steps, stride {}", grid.n_steps, grid.every);

    let mut rho = rho0.matrix().clone();
    rec.push(grid.t0, &rho);
    let mut step = 0;
    while step < grid.n_steps {
        let remaining = grid.n_steps - step;
        let advance = grid.every.min(remaining);
        let map = if advance == grid.every { stride_map.clone() } else { matrix_power(&step_map, advance) };
        let v = DVector::from_row_slice(rho.as_slice());
        let v = &map * v;
        rho = ComplexMatrix::from_row_major(v.iter().copied().collect())?;
        step += advance;
        let t = grid.time(step);
        let drift = drift_control(&mut rho, t, true)?;
        rec.max_drift = rec.max_drift.max(drift);
        rec.push(t, &rho);
    }
    Ok(())
}

fn matrix_power(m: &DMatrix<C64>, mut k: usize) -> DMatrix<C64> {
    let n = m.nrows();
    let mut result = DMatrix::<C64>::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}
