//! Optimal dynamical decoupling: a log-barrier SDP over CPTP Choi states,
//! the see-saw ascent on the largest eigenvalue of the resulting channel's
//! Choi state, and the two-level multitimescale driver.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::control::{dd_sequence, ControlSequence, Pauli};
use crate::error::{Error, Result};
use crate::linalg::{
    herm_eig, herm_eigvals, hermitian_basis, kron, op_norm, partial_trace, CMatrix, SubsystemShape, C64,
};
use crate::process::{Channel, LinearMap, MultiState, QState, SEDynamics};

/// Largest allowed `tr(Y)/d − primal` of a returned solution.
pub const GAP_TOL: f64 = 1e-6;
/// Largest allowed violation of `Y ⊗ I − F ⪰ 0`.
pub const DUAL_TOL: f64 = 1e-8;
const MAX_CENTERING: usize = 100;
const MAX_NEWTON: usize = 2000;

#[derive(Clone, Debug)]
pub struct SdpResult {
    pub choi: Channel,
    pub primal_value: f64,
    pub dual_matrix: CMatrix,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl SdpResult {
    pub fn dual_value(&self) -> f64 {
        self.dual_matrix.trace().re / self.choi.d_in() as f64
    }
}

/// Cholesky factor if `z` is numerically positive definite. The complex
/// factorization in nalgebra takes square roots of negative pivots without
/// complaint, so the pivots are checked here.
fn cholesky(z: &CMatrix) -> Option<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let ch = z.inner().clone().cholesky()?;
    let l = ch.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let p = l[(i, i)];
        p.re.is_finite() && p.re > 0.0 && p.im.abs() <= 1e-12 * p.re
    });
    ok.then_some(ch)
}

fn log_det(ch: &nalgebra::Cholesky<C64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// Least-squares solve of a symmetric positive semidefinite system, dropping
/// directions below the working precision.
fn pseudo_solve(h: DMatrix<f64>, rhs: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let coeffs = eig.eigenvectors.transpose() * rhs;
    let scaled = nalgebra::DVector::from_iterator(
        coeffs.len(),
        coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, &l)| if l > 1e-14 * top { c / l } else { 0.0 }),
    );
    eig.eigenvectors * scaled
}

/// Maximizes `tr(F A)` over Choi states `A ⪰ 0` with `Tr_out A = I/d_in`.
///
/// The dual `min tr(Y)/d_in s.t. Y ⊗ I ⪰ F` is solved on its barrier path
/// `t tr(Y)/d_in − log det(Y ⊗ I − F)` by damped Newton steps; the primal
/// point is `A = (Y ⊗ I − F)⁻¹ / t`, rescaled onto the feasible set at the end.
pub fn sdp_max_linear_cptp(f: &CMatrix, d_in: usize, d_out: usize) -> Result<SdpResult> {
    let n = d_in * d_out;
    if !f.is_square() || f.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: f.rows() });
    }
    let f = f.hermitized()?;
    let scale = op_norm(&f);
    if scale == 0.0 {
        let choi = Channel::from_choi(d_in, d_out, CMatrix::identity(n).scale(1.0 / n as f64))?;
        return Ok(SdpResult {
            choi,
            primal_value: 0.0,
            dual_matrix: CMatrix::zeros(d_in, d_in),
            duality_gap: 0.0,
            iterations: 0,
        });
    }
    let g = f.scale(1.0 / scale);
    let id_out = CMatrix::identity(d_out);
    let basis: Vec<CMatrix> = hermitian_basis(d_in).into_iter().map(|(b, _)| b).collect();
    let lifted: Vec<CMatrix> = basis.iter().map(|b| kron(b, &id_out)).collect();
    let m = basis.len();
    let traces: Vec<f64> = basis.iter().map(|b| b.trace().re).collect();

    let build_y = |y: &[f64]| {
        basis.iter().zip(y).fold(CMatrix::zeros(d_in, d_in), |acc, (b, &c)| &acc + &b.scale(c))
    };
    let build_z = |y: &[f64]| {
        let mut z = CMatrix::zeros(n, n);
        for (l, &c) in lifted.iter().zip(y) {
            z = &z + &l.scale(c);
        }
        &z - &g
    };
    let barrier = |y: &[f64], t: f64| -> Option<f64> {
        let ch = cholesky(&build_z(y))?;
        let lin: f64 = y.iter().zip(&traces).map(|(a, b)| a * b).sum::<f64>() / d_in as f64;
        Some(t * lin - log_det(&ch))
    };

    let mut y = vec![0.0; m];
    y[0] = 2.0;
    let mut t = 1.0;
    let target = 1e-8;
    let mut iterations = 0;
    loop {
        // centering at fixed t
        let mut inner = 0;
        loop {
            inner += 1;
            if inner > MAX_CENTERING {
                break;
            }
            iterations += 1;
            if iterations > MAX_NEWTON {
                return Err(Error::SolverNonConvergence { iterations, gap: n as f64 / t * scale });
            }
            let z = build_z(&y);
            let Some(ch) = cholesky(&z) else {
                return Err(Error::SolverNonConvergence { iterations, gap: f64::NAN });
            };
            let zinv = CMatrix::from_inner(ch.inverse())?;
            let mk: Vec<CMatrix> = lifted.iter().map(|l| &zinv * l).collect();
            let grad: Vec<f64> = (0..m)
                .map(|k| t * traces[k] / d_in as f64 - mk[k].trace().re)
                .collect();
            let hess = DMatrix::from_fn(m, m, |k, l| mk[k].trace_product(&mk[l]).re);
            let rhs = nalgebra::DVector::from_iterator(m, grad.iter().map(|x| -x));
            let step = match hess.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => pseudo_solve(hess, &rhs),
            };
            let decrement: f64 = -grad.iter().zip(step.iter()).map(|(a, b)| a * b).sum::<f64>();
            if decrement < 1e-10 {
                break;
            }
            let phi0 = barrier(&y, t).expect("current point is interior");
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                if trial == y {
                    // the step has fallen below the resolution of y
                    alpha = 0.0;
                    break;
                }
                if let Some(phi) = barrier(&trial, t) {
                    if phi <= phi0 - 0.25 * alpha * decrement {
                        y = trial;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break;
                }
            }
            if alpha < 1e-12 {
                break;
            }
        }
        if n as f64 / t <= target {
            break;
        }
        t *= 10.0;
    }

    // A = Z⁻¹/t from the spectrum of Z keeps it positive semidefinite
    let ze = herm_eig(&build_z(&y))?;
    if ze.values.last().is_none_or(|&z| z <= 0.0) {
        return Err(Error::SolverNonConvergence { iterations, gap: f64::NAN });
    }
    let a = crate::linalg::spectral_apply(&ze, |z| 1.0 / (t * z))?;
    // rescale onto Tr_out A = I/d_in exactly
    let shape = SubsystemShape::new(vec![d_in, d_out])?;
    let dmarg = partial_trace(&a, &shape, &[0])?;
    let dinv = crate::linalg::herm_func(&dmarg, |x| 1.0 / x.max(1e-300).sqrt())?;
    let left = kron(&dinv, &id_out);
    let a = (&(&left * &a) * &left).scale(1.0 / d_in as f64).hermitian_part();
    let choi = Channel::from_choi(d_in, d_out, a)?;
    let primal_value = f.trace_product(choi.choi()).re;
    let dual_matrix = build_y(&y).scale(scale);
    let dual_value = dual_matrix.trace().re / d_in as f64;
    let slack = &kron(&dual_matrix, &id_out) - &f;
    let min_slack = herm_eigvals(&slack)?.last().copied().unwrap_or(0.0);
    if min_slack < -DUAL_TOL {
        return Err(Error::SolverNonConvergence { iterations, gap: min_slack });
    }
    let duality_gap = (dual_value - primal_value).max(0.0);
    Ok(SdpResult { choi, primal_value, dual_matrix, duality_gap, iterations })
}

/// Largest eigenvalue of a Choi state with its eigenvector; the phase is
/// fixed by making the first largest-magnitude component real and positive.
pub fn top_eigenpair(c: &CMatrix) -> Result<(f64, Vec<C64>)> {
    let eig = herm_eig(c)?;
    let mut v = eig.vector(0);
    let mut best = 0;
    for (k, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() + 1e-12 {
            best = k;
        }
    }
    let ph = v[best] / v[best].norm();
    for z in v.iter_mut() {
        *z /= ph;
    }
    Ok((eig.values[0], v))
}

/// λ_max of the resulting channel's Choi state with `controls` absorbed
/// (terminal pulse excluded).
pub fn lambda_max(dynm: &SEDynamics, controls: &ControlSequence) -> Result<f64> {
    let c = dynm.insert_controls(controls.iter())?.resulting_channel()?;
    Ok(top_eigenpair(c.choi())?.0)
}

/// Shared machinery for evaluating the see-saw objective slot by slot.
struct Objective<'a> {
    dynm: &'a SEDynamics,
    basis: Vec<(CMatrix, f64)>,
    maps: Vec<LinearMap>,
}

impl<'a> Objective<'a> {
    fn new(dynm: &'a SEDynamics) -> Result<Self> {
        let d = dynm.d_sys();
        let basis = hermitian_basis(d * d);
        let maps = basis
            .iter()
            .map(|(b, _)| LinearMap::from_hermitian_choi(d, d, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Objective { dynm, basis, maps })
    }

    fn initial(&self) -> MultiState {
        let d = self.dynm.d_sys();
        MultiState::new(
            kron(&crate::linalg::maximally_entangled(d), self.dynm.rho_env0().matrix()),
            vec![d, d, self.dynm.d_env()],
        )
    }

    /// Forward step over segment `j` and the absorbed control at slot `j`.
    fn advance(&self, st: &mut MultiState, j: usize) {
        st.apply(1, 2, self.dynm.segments()[j - 1].map());
        if let Some(c) = self.dynm.inserted_controls().get(&j) {
            st.apply(1, 1, c.map());
        }
    }

    /// Heisenberg images of `|v><v| ⊗ I_e` just after each slot's control;
    /// entry `j` belongs to slot `j` (entry 0 is unused).
    fn backward(&self, controls: &BTreeMap<usize, Channel>, v: &[C64]) -> Vec<CMatrix> {
        let d = self.dynm.d_sys();
        let de = self.dynm.d_env();
        let n = self.dynm.n_segments();
        let proj = CMatrix::projector(v);
        let mut x = MultiState::new(kron(&proj, &CMatrix::identity(de)), vec![d, d, de]);
        if let Some(t) = self.dynm.terminal() {
            x.apply(1, 1, &t.map().adjoint());
        }
        let mut out = vec![CMatrix::zeros(0, 0); n];
        for j in (1..=n).rev() {
            x.apply(1, 2, &self.dynm.segments()[j - 1].map().adjoint());
            if j > 1 {
                out[j - 1] = x.rho.clone();
                if let Some(c) = controls.get(&(j - 1)) {
                    x.apply(1, 1, &c.map().adjoint());
                }
                if let Some(c) = self.dynm.inserted_controls().get(&(j - 1)) {
                    x.apply(1, 1, &c.map().adjoint());
                }
            }
        }
        out
    }

    /// `F` with `tr(F A) = tr(X (A ⊗ id)(ρ))` for every slot map `A`.
    fn functional(&self, rho: &MultiState, x: &CMatrix) -> CMatrix {
        let n = self.basis.len();
        let dim = (n as f64).sqrt() as usize;
        let mut f = CMatrix::zeros(dim, dim);
        for ((b, norm), map) in self.basis.iter().zip(&self.maps) {
            let mut st = MultiState::new(rho.rho.clone(), rho.dims.clone());
            st.apply(1, 1, map);
            let g = x.trace_product(&st.rho).re;
            f = &f + &b.scale(g / norm);
        }
        f.hermitian_part()
    }
}

/// The Hermitian `F` with `<v| C(A) |v> = tr(F A)`, where `C(A)` is the
/// resulting channel's Choi state when slot `slot` carries `A` and every other
/// slot carries its control from `controls` (after any absorbed control).
pub fn probe_slot_functional(
    dynm: &SEDynamics,
    controls: &ControlSequence,
    slot: usize,
    v: &[C64],
) -> Result<CMatrix> {
    let d = dynm.d_sys();
    if v.len() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, found: v.len() });
    }
    let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("probe vector has norm {norm}")));
    }
    if slot == 0 || slot > dynm.n_slots() {
        return Err(Error::SlotOutOfRange { slot, max: dynm.n_slots() });
    }
    let obj = Objective::new(dynm)?;
    let mut others = controls.slots.clone();
    others.remove(&slot);
    let xs = obj.backward(&others, v);
    let mut st = obj.initial();
    for j in 1..=slot {
        if j > 1 {
            if let Some(c) = others.get(&(j - 1)) {
                st.apply(1, 1, c.map());
            }
        }
        obj.advance(&mut st, j);
    }
    Ok(obj.functional(&st, &xs[slot]))
}

#[derive(Clone, Copy, Debug)]
pub struct SeesawOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    /// Restrict slot operations to unitary channels.
    pub unitary_only: bool,
}

impl Default for SeesawOptions {
    fn default() -> Self {
        SeesawOptions { max_sweeps: 200, tol: 1e-7, unitary_only: false }
    }
}

#[derive(Clone, Debug)]
pub struct SeesawTrace {
    /// λ_max of the initial controls followed by one value per sweep.
    pub objective_history: Vec<f64>,
    pub controls: ControlSequence,
    pub converged: bool,
}

impl SeesawTrace {
    pub fn lambda_max(&self) -> f64 {
        *self.objective_history.last().expect("history starts with the initial value")
    }

    pub fn sweeps(&self) -> usize {
        self.objective_history.len() - 1
    }
}

/// Nearest unitary channel to the dominant Kraus operator (its polar factor).
fn unitary_projection(c: &Channel) -> Result<Channel> {
    let k = c.kraus().into_iter().next().expect("a channel has a Kraus operator");
    let svd = k.into_inner().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    Channel::from_unitary(&CMatrix::from_inner(u * vt)?)
}

/// See-saw ascent of λ_max over the controls at `slots`. Slots of `init`
/// outside `slots` stay fixed; missing optimized slots start from identity.
pub fn odd_seesaw(
    dynm: &SEDynamics,
    slots: &[usize],
    init: &ControlSequence,
    opts: &SeesawOptions,
) -> Result<SeesawTrace> {
    let d = dynm.d_sys();
    let mut slots = slots.to_vec();
    slots.sort_unstable();
    slots.dedup();
    if let Some(&s) = slots.iter().find(|&&s| s == 0 || s > dynm.n_slots()) {
        return Err(Error::SlotOutOfRange { slot: s, max: dynm.n_slots() });
    }
    let mut controls = init.slots.clone();
    for &s in &slots {
        controls.entry(s).or_insert_with(|| Channel::identity(d));
    }
    let label = if init.label.is_empty() { "odd".to_string() } else { init.label.clone() };
    let obj = Objective::new(dynm)?;
    let evaluate = |ctrl: &BTreeMap<usize, Channel>| -> Result<(f64, Vec<C64>)> {
        let c = dynm.insert_controls(ctrl.iter().map(|(s, c)| (*s, c)))?.resulting_channel()?;
        top_eigenpair(c.choi())
    };
    let (mut lam, mut v) = evaluate(&controls)?;
    let mut history = vec![lam];
    let mut converged = slots.is_empty();
    let mut sweep = 0;
    while !converged && sweep < opts.max_sweeps {
        sweep += 1;
        let start = controls.clone();
        let xs = obj.backward(&controls, &v);
        let mut st = obj.initial();
        let mut next = 0;
        for j in 1..dynm.n_segments() {
            obj.advance(&mut st, j);
            if next < slots.len() && slots[next] == j {
                next += 1;
                let f = obj.functional(&st, &xs[j]);
                let sdp = sdp_max_linear_cptp(&f, d, d)?;
                let cand = if opts.unitary_only { unitary_projection(&sdp.choi)? } else { sdp.choi };
                let old = &controls[&j];
                if f.trace_product(cand.choi()).re >= f.trace_product(old.choi()).re {
                    controls.insert(j, cand);
                }
            }
            if let Some(c) = controls.get(&j) {
                st.apply(1, 1, c.map());
            }
        }
        let (new_lam, new_v) = evaluate(&controls)?;
        if new_lam < lam {
            controls = start;
            history.push(lam);
            converged = true;
            break;
        }
        converged = new_lam - lam < opts.tol;
        lam = new_lam;
        v = new_v;
        history.push(lam);
    }
    let mut cs = ControlSequence::new(label);
    cs.slots = controls;
    Ok(SeesawTrace { objective_history: history, controls: cs, converged })
}

/// Runs the see-saw from each initialization and keeps the largest final λ_max
/// (the first one on ties).
pub fn odd_best(
    dynm: &SEDynamics,
    slots: &[usize],
    inits: &[ControlSequence],
    opts: &SeesawOptions,
) -> Result<SeesawTrace> {
    let mut best: Option<SeesawTrace> = None;
    for init in inits {
        let tr = odd_seesaw(dynm, slots, init, opts)?;
        if best.as_ref().is_none_or(|b| tr.lambda_max() > b.lambda_max()) {
            best = Some(tr);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no see-saw initialization given".into()))
}

/// Identity and `[X, Z]` DD initializations on the given slots.
pub fn default_inits(slots: &[usize], d: usize, label: &str) -> Vec<ControlSequence> {
    let mut id = ControlSequence::new(label);
    for &s in slots {
        id.slots.insert(s, Channel::identity(d));
    }
    let mut inits = vec![id];
    if d == 2 && !slots.is_empty() {
        let dd = dd_sequence(slots.len(), &[Pauli::X, Pauli::Z], false).expect("nonempty pattern");
        let mut cs = ControlSequence::new(label);
        for (k, &s) in slots.iter().enumerate() {
            cs.slots.insert(s, dd.slots[&(k + 1)].clone());
        }
        inits.push(cs);
    }
    inits
}

#[derive(Clone, Debug)]
pub struct ModdResult {
    /// Fine pulses inside blocks and coarse pulses on block boundaries.
    pub controls: ControlSequence,
    pub fine: Vec<SeesawTrace>,
    pub coarse: SeesawTrace,
    /// λ_max of the fine dynamics with [`ModdResult::controls`] absorbed.
    pub lambda_max: f64,
}

/// Block-wise see-saw on the interior slots of each block, with each block's
/// environment obtained by evolving a maximally mixed system and the previous
/// block's environment through the previous block; then a see-saw over the
/// block boundaries of the coarse dynamics whose segments are the controlled
/// blocks.
pub fn modd(dynm: &SEDynamics, block: usize, opts: &SeesawOptions) -> Result<ModdResult> {
    let n = dynm.n_segments();
    if block == 0 || n % block != 0 {
        return Err(Error::NonDividingBlock { block, total: n });
    }
    let d = dynm.d_sys();
    let n_blocks = n / block;
    let interior: Vec<usize> = (1..block).collect();
    let mut env = dynm.rho_env0().clone();
    let mut blocks = Vec::with_capacity(n_blocks);
    let mut fine = Vec::with_capacity(n_blocks);
    let mut combined = ControlSequence::new("modd");
    for b in 0..n_blocks {
        let local = dynm.block(b * block, (b + 1) * block, env.clone())?;
        let trace = odd_best(&local, &interior, &default_inits(&interior, d, "modd"), opts)?;
        for (s, c) in trace.controls.iter() {
            combined.slots.insert(b * block + s, c.clone());
        }
        let controlled = trace.controls.apply_to(&local, false)?;
        env = controlled.evolve_env(&QState::maximally_mixed(d))?;
        blocks.push(controlled);
        fine.push(trace);
    }
    let segments = blocks.iter().map(SEDynamics::collapse).collect::<Result<Vec<_>>>()?;
    let durations = blocks.iter().map(SEDynamics::total_time).collect();
    let mut coarse_dyn = SEDynamics::new(d, dynm.d_env(), dynm.rho_env0().clone(), segments, durations)?;
    let boundary: Vec<(usize, Channel)> = dynm
        .inserted_controls()
        .iter()
        .filter(|(s, _)| **s % block == 0)
        .map(|(s, c)| (s / block, c.clone()))
        .collect();
    coarse_dyn = coarse_dyn.insert_controls(boundary.iter().map(|(s, c)| (*s, c)))?;
    if let Some(t) = dynm.terminal() {
        coarse_dyn = coarse_dyn.with_terminal(t)?;
    }
    let coarse_slots: Vec<usize> = (1..n_blocks).collect();
    let coarse = odd_best(&coarse_dyn, &coarse_slots, &default_inits(&coarse_slots, d, "modd"), opts)?;
    for (s, c) in coarse.controls.iter() {
        combined.slots.insert(s * block, c.clone());
    }
    let lambda_max = lambda_max(dynm, &combined)?;
    Ok(ModdResult { controls: combined, fine, coarse, lambda_max })
}
