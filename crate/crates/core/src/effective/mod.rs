//! Adiabatic elimination of an auxiliary subspace through the non-Hermitian
//! resolvent (effective-operator formalism).
//!
//! Levels are ordered target first, then auxiliary. Every coupling describes
//! one field `l` exciting one target level `n`; its matrix `V` maps target
//! states to auxiliary states and the de-excitation part is `V†`.

pub mod yb;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lindblad::{LindbladTerm, OpenSystemModel};
use crate::quantum::ComplexMatrix;
use crate::sync::RateSet;

/// Largest tolerated condition number of `H_NH − E_n − ω_l`.
pub const RESOLVENT_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub label: String,
    /// Field frequency `ω_l` in the frame the energies are written in.
    pub frequency: f64,
    /// Target level `n` the field excites.
    pub level: usize,
    /// Energy `E_n` of that level.
    pub energy: f64,
    /// `aux_dim × target_dim` excitation matrix.
    pub v: DMatrix<C64>,
}

#[derive(Debug, Clone)]
pub struct PartitionedModel {
    target_dim: usize,
    aux_dim: usize,
    h_t: ComplexMatrix,
    h_a: ComplexMatrix,
    couplings: Vec<Coupling>,
    jumps: Vec<LindbladTerm>,
    /// `(aux level, target level)`: decays landing on the auxiliary level are
    /// treated as returned instantly to the target level.
    routing: Vec<(usize, usize)>,
}

impl PartitionedModel {
    pub fn new(
        h_t: ComplexMatrix,
        h_a: ComplexMatrix,
        couplings: Vec<Coupling>,
        jumps: Vec<LindbladTerm>,
    ) -> Result<Self> {
        let (target_dim, aux_dim) = (h_t.dim(), h_a.dim());
        for h in [&h_t, &h_a] {
            let dev = h.hermiticity_error();
            if dev > 1e-12 * h.max_abs().max(1.0) {
                return Err(Error::NonHermitian { time: 0.0, deviation: dev });
            }
        }
        for c in &couplings {
            if c.v.nrows() != aux_dim || c.v.ncols() != target_dim {
                return Err(Error::param(
                    "couplings",
                    format!("field `{}` has a {}×{} matrix, expected {aux_dim}×{target_dim}", c.label, c.v.nrows(), c.v.ncols()),
                ));
            }
            if c.level >= target_dim {
                return Err(Error::param("couplings", format!("field `{}` starts from level {}", c.label, c.level)));
            }
        }
        for j in &jumps {
            if j.jump.dim() != target_dim + aux_dim {
                return Err(Error::DimensionMismatch { expected: target_dim + aux_dim, found: j.jump.dim() });
            }
        }
        Ok(Self { target_dim, aux_dim, h_t, h_a, couplings, jumps, routing: vec![] })
    }

    /// Routes decays into auxiliary level `aux` (index within the auxiliary
    /// block) to target level `target`.
    pub fn with_routing(mut self, routing: Vec<(usize, usize)>) -> Result<Self> {
        for &(a, t) in &routing {
            if a >= self.aux_dim || t >= self.target_dim {
                return Err(Error::param("routing", format!("({a}, {t}) outside the partition")));
            }
        }
        self.routing = routing;
        Ok(self)
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn aux_dim(&self) -> usize {
        self.aux_dim
    }

    pub fn h_t(&self) -> &ComplexMatrix {
        &self.h_t
    }

    pub fn h_a(&self) -> &ComplexMatrix {
        &self.h_a
    }

    pub fn couplings(&self) -> &[Coupling] {
        &self.couplings
    }

    pub fn jumps(&self) -> &[LindbladTerm] {
        &self.jumps
    }

    /// De-excitation coupling `V_t = Σ V†`, `target_dim × aux_dim`.
    pub fn v_t(&self) -> DMatrix<C64> {
        let mut acc = DMatrix::zeros(self.target_dim, self.aux_dim);
        for c in &self.couplings {
            acc += c.v.adjoint();
        }
        acc
    }
}

/// `H_a − (i/2) Σ rate·L†L` restricted to the auxiliary block.
pub fn nonhermitian_h(model: &PartitionedModel) -> Result<ComplexMatrix> {
    let (nt, na) = (model.target_dim, model.aux_dim);
    let mut h = model.h_a.to_nalgebra();
    for (index, term) in model.jumps.iter().enumerate() {
        let l = term.jump.to_nalgebra();
        if (0..nt).any(|col| (0..nt + na).any(|row| l[(row, col)] != C64::new(0.0, 0.0))) {
            return Err(Error::PartitionViolation { index });
        }
        let ll = l.adjoint() * &l;
        h -= ll.view((nt, nt), (na, na)) * C64::new(0.0, 0.5 * term.rate);
    }
    ComplexMatrix::from_nalgebra(&h)
}

/// `(H_NH − E_n − ω_l)^{-1}` for one coupling, restricted to the auxiliary
/// levels connected to the ones the field excites. Entries outside that block
/// are zero; uncoupled blocks never enter the effective operators.
pub fn resolvent(h_nh: &ComplexMatrix, coupling: &Coupling) -> Result<DMatrix<C64>> {
    let n = h_nh.dim();
    let idx = reachable(h_nh, &coupling.v);
    let shift = C64::new(coupling.energy + coupling.frequency, 0.0);
    let mut m = DMatrix::<C64>::from_fn(idx.len(), idx.len(), |i, j| h_nh[(idx[i], idx[j])]);
    for i in 0..idx.len() {
        m[(i, i)] -= shift;
    }
    let mut out = DMatrix::zeros(n, n);
    if idx.is_empty() {
        return Ok(out);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    let resonance = || Error::Resonance { field: coupling.label.clone(), level: coupling.level, condition };
    if !(condition < RESOLVENT_CONDITION_LIMIT) {
        return Err(resonance());
    }
    let inv = m.lu().try_inverse().ok_or_else(resonance)?;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[(i, j)] = inv[(a, b)];
        }
    }
    Ok(out)
}

/// Auxiliary levels connected through `H_NH` to any level `v` excites, sorted.
fn reachable(h_nh: &ComplexMatrix, v: &DMatrix<C64>) -> Vec<usize> {
    let n = h_nh.dim();
    let zero = C64::new(0.0, 0.0);
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| v.row(i).iter().any(|z| *z != zero)).collect();
    for &i in &stack {
        seen[i] = true;
    }
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && (h_nh[(i, j)] != zero || h_nh[(j, i)] != zero) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    (0..n).filter(|&i| seen[i]).collect()
}

/// `H_eff = H_t − ½[V_t Σ_{l,n} (H_NH^{(l,n)})^{-1} V^{(l,n)} + h.c.]`.
pub fn effective_hamiltonian(model: &PartitionedModel) -> Result<ComplexMatrix> {
    let h_nh = nonhermitian_h(model)?;
    let mut w = DMatrix::<C64>::zeros(model.aux_dim, model.target_dim);
    for c in &model.couplings {
        w += resolvent(&h_nh, c)? * &c.v;
    }
    let x = model.v_t() * w;
    let correction = (&x + x.adjoint()) * C64::new(-0.5, 0.0);
    let h = &model.h_t + &ComplexMatrix::from_nalgebra(&correction)?;
    Ok(h.hermitian_part())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffectiveOptions {
    /// Sum the contributions of all fields coherently into one operator per
    /// physical jump. The default keeps one operator per (jump, field), which
    /// drops cross terms oscillating at field difference frequencies.
    pub combine_fields: bool,
    /// Apply the model's instantaneous return routing.
    pub apply_routing: bool,
}

impl Default for EffectiveOptions {
    fn default() -> Self {
        Self { combine_fields: false, apply_routing: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveJump {
    /// Index of the physical jump operator.
    pub source: usize,
    /// Field label, or `None` when fields were combined.
    pub field: Option<String>,
    /// Auxiliary level the decay landed on before routing, if it was routed.
    pub routed_from: Option<usize>,
    /// Target-space operator; enters the master equation as `D[operator]`.
    pub operator: ComplexMatrix,
}

/// `L_eff^k = L_k Σ_{l,n} (H_NH^{(l,n)})^{-1} V^{(l,n)}`, with per-field
/// splitting and routing as selected. Decays into unrouted auxiliary levels are
/// dropped.
pub fn effective_lindblads_with(model: &PartitionedModel, opts: EffectiveOptions) -> Result<Vec<EffectiveJump>> {
    let (nt, na) = (model.target_dim, model.aux_dim);
    let h_nh = nonhermitian_h(model)?;
    let amplitudes: Vec<DMatrix<C64>> =
        model.couplings.iter().map(|c| Ok(resolvent(&h_nh, c)? * &c.v)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (k, term) in model.jumps.iter().enumerate() {
        if term.rate == 0.0 {
            continue;
        }
        let l = term.jump.to_nalgebra() * C64::new(term.rate.sqrt(), 0.0);
        let l_from_aux = l.columns(nt, na).into_owned();
        let groups: Vec<(Option<String>, DMatrix<C64>)> = if opts.combine_fields {
            let mut sum = DMatrix::<C64>::zeros(na, nt);
            for a in &amplitudes {
                sum += a;
            }
            vec![(None, sum)]
        } else {
            model.couplings.iter().zip(&amplitudes).map(|(c, a)| (Some(c.label.clone()), a.clone())).collect()
        };
        for (field, amp) in groups {
            let full = &l_from_aux * amp;
            let direct = square(full.rows(0, nt).into_owned());
            if direct.max_abs() > 0.0 {
                out.push(EffectiveJump { source: k, field: field.clone(), routed_from: None, operator: direct });
            }
            if !opts.apply_routing {
                continue;
            }
            for &(a, t) in &model.routing {
                let mut op = DMatrix::<C64>::zeros(nt, nt);
                op.row_mut(t).copy_from(&full.row(nt + a));
                let op = square(op);
                if op.max_abs() > 0.0 {
                    out.push(EffectiveJump { source: k, field: field.clone(), routed_from: Some(a), operator: op });
                }
            }
        }
    }
    Ok(out)
}

pub fn effective_lindblads(model: &PartitionedModel) -> Result<Vec<EffectiveJump>> {
    effective_lindblads_with(model, EffectiveOptions::default())
}

fn square(m: DMatrix<C64>) -> ComplexMatrix {
    ComplexMatrix::from_nalgebra(&m).expect("square block")
}

/// Target-space master equation with `H_eff` and the effective jumps.
pub fn effective_model(model: &PartitionedModel, opts: EffectiveOptions) -> Result<OpenSystemModel> {
    let h = effective_hamiltonian(model)?;
    let terms = effective_lindblads_with(model, opts)?
        .into_iter()
        .map(|j| LindbladTerm { jump: j.operator, rate: 1.0 })
        .collect();
    OpenSystemModel::time_independent(h, terms)
}

/// Collects qubit jump operators into `(Γ_g/2)D[σ_+] + (Γ_d/2)D[σ_−] + (Γ_z/2)D[σ_z]`.
///
/// Each operator must be a single off-diagonal element or diagonal; anything
/// else has no exact representation in that form.
pub fn qubit_rates(jumps: &[EffectiveJump]) -> Result<RateSet> {
    let (mut gg, mut gd, mut gz) = (0.0, 0.0, 0.0);
    for j in jumps {
        let o = &j.operator;
        if o.dim() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: o.dim() });
        }
        let (c00, c01, c10, c11) = (o[(0, 0)], o[(0, 1)], o[(1, 0)], o[(1, 1)]);
        let diagonal = c00.norm() > 0.0 || c11.norm() > 0.0;
        let off = [c01.norm() > 0.0, c10.norm() > 0.0];
        match (diagonal, off) {
            (_, [false, false]) => gz += 0.5 * (c11 - c00).norm_sqr(),
            (false, [false, true]) => gg += 2.0 * c10.norm_sqr(),
            (false, [true, false]) => gd += 2.0 * c01.norm_sqr(),
            _ => {
                return Err(Error::DegenerateModel(format!(
                    "jump from operator {} is not a single transition or dephasing",
                    j.source
                )))
            }
        }
    }
    RateSet::new(gg, gd, gz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(delta: f64, gamma: f64, omega: f64) -> PartitionedModel {
        // One ground level coupled to one excited level that decays back.
        let mut v = DMatrix::zeros(1, 1);
        v[(0, 0)] = C64::new(0.5 * omega, 0.0);
        let coupling = Coupling { label: "probe".into(), frequency: 0.0, level: 0, energy: 0.0, v };
        let jump = LindbladTerm::new(ComplexMatrix::projector(2, 0, 1), gamma).unwrap();
        PartitionedModel::new(
            ComplexMatrix::zeros(1),
            ComplexMatrix::from_real_diagonal(&[delta]),
            vec![coupling],
            vec![jump],
        )
        .unwrap()
    }

    #[test]
    fn no_jumps_gives_bare_auxiliary_hamiltonian() {
        let m = PartitionedModel::new(
            ComplexMatrix::zeros(1),
            ComplexMatrix::from_real_diagonal(&[3.0, -1.0]),
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(nonhermitian_h(&m).unwrap(), ComplexMatrix::from_real_diagonal(&[3.0, -1.0]));
        assert_eq!(effective_hamiltonian(&m).unwrap(), ComplexMatrix::zeros(1));
    }

    #[test]
    fn far_detuned_stark_shift() {
        let (delta, gamma, omega) = (40.0, 3.0, 0.7);
        let h = effective_hamiltonian(&toy(delta, gamma, omega)).unwrap();
        let want = -omega * omega * delta / (4.0 * delta * delta + gamma * gamma);
        assert!((h[(0, 0)].re - want).abs() < 1e-15);
    }

    #[test]
    fn toy_effective_decay_rate() {
        let (delta, gamma, omega) = (2.0, 3.0, 0.7);
        let jumps = effective_lindblads(&toy(delta, gamma, omega)).unwrap();
        assert_eq!(jumps.len(), 1);
        let rate = jumps[0].operator[(0, 0)].norm_sqr();
        assert!((rate - gamma * omega * omega / (4.0 * delta * delta + gamma * gamma)).abs() < 1e-15);
    }

    #[test]
    fn resonance_is_reported() {
        let m = toy(0.0, 0.0, 0.7);
        match effective_hamiltonian(&m) {
            Err(Error::Resonance { field, level, .. }) => assert_eq!((field.as_str(), level), ("probe", 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uncoupled_dark_level_is_ignored() {
        // A second auxiliary level with zero energy and no decay would make the
        // full matrix singular, but the field never reaches it.
        let mut v = DMatrix::zeros(2, 1);
        v[(0, 0)] = C64::new(0.35, 0.0);
        let coupling = Coupling { label: "probe".into(), frequency: 0.0, level: 0, energy: 0.0, v };
        let jump = LindbladTerm::new(ComplexMatrix::projector(3, 0, 1), 3.0).unwrap();
        let m = PartitionedModel::new(
            ComplexMatrix::zeros(1),
            ComplexMatrix::from_real_diagonal(&[2.0, 0.0]),
            vec![coupling],
            vec![jump],
        )
        .unwrap();
        let h = effective_hamiltonian(&m).unwrap();
        assert!((h[(0, 0)].re + 0.49 * 2.0 / (16.0 + 9.0)).abs() < 1e-15);
    }

    #[test]
    fn jump_out_of_target_violates_partition() {
        let bad = LindbladTerm::new(ComplexMatrix::projector(2, 1, 0), 1.0).unwrap();
        let m = PartitionedModel::new(ComplexMatrix::zeros(1), ComplexMatrix::zeros(1), vec![], vec![bad]).unwrap();
        assert!(matches!(nonhermitian_h(&m), Err(Error::PartitionViolation { index: 0 })));
    }

    #[test]
    fn coupling_shape_is_checked() {
        let c = Coupling { label: "x".into(), frequency: 0.0, level: 0, energy: 0.0, v: DMatrix::zeros(2, 1) };
        assert!(PartitionedModel::new(ComplexMatrix::zeros(1), ComplexMatrix::zeros(1), vec![c], vec![]).is_err());
    }

    #[test]
    fn rate_bookkeeping() {
        let mk = |entries: &[((usize, usize), f64)]| {
            let mut o = ComplexMatrix::zeros(2);
            for &((i, j), v) in entries {
                o[(i, j)] = C64::new(v, 0.0);
            }
            EffectiveJump { source: 0, field: None, routed_from: None, operator: o }
        };
        let r = qubit_rates(&[mk(&[((1, 0), 2.0)]), mk(&[((0, 1), 1.0)]), mk(&[((1, 1), 1.0)])]).unwrap();
        assert_eq!((r.gamma_g(), r.gamma_d(), r.gamma_z()), (8.0, 2.0, 0.5));
        assert!(qubit_rates(&[mk(&[((1, 0), 1.0), ((1, 1), 1.0)])]).is_err());
    }
}
