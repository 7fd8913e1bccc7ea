use crate::error::{Error, Result};
use crate::linalg::{
    herm_eig, kron, partial_trace, permute_subsystems, unitarity_defect, CMatrix, HermEig,
    SubsystemShape, C64, ONE, ZERO,
};

/// Eigenvalues above this are accepted as PSD without repair.
pub const PSD_TOL: f64 = 1e-10;
/// Largest negative eigenvalue (or trace error) that is repaired instead of rejected.
pub const REPAIR_LIMIT: f64 = 1e-8;
/// Tolerance on `Tr_out(choi) = I/d_in`.
pub const TP_TOL: f64 = 1e-9;

/// A Hermiticity-preserving linear map in weighted Kraus form,
/// `X ↦ Σ_k w_k K_k X K_k†`. Weights are negative only for non-CP maps,
/// which are used when probing the optimizer objective.
#[derive(Clone, Debug)]
pub struct LinearMap {
    pub(crate) d_in: usize,
    pub(crate) d_out: usize,
    pub(crate) terms: Vec<(f64, CMatrix)>,
}

impl LinearMap {
    /// Decomposes a Hermitian Choi matrix (leg order in, out; unit-trace
    /// convention) into weighted Kraus form.
    pub(crate) fn from_choi_eig(d_in: usize, d_out: usize, eig: &HermEig) -> Self {
        let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cutoff = 1e-15 * scale.max(1e-300);
        let mut terms = Vec::new();
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam.abs() <= cutoff {
                continue;
            }
            let v = eig.vector(k);
            let op = CMatrix::from_fn(d_out, d_in, |a, i| v[i * d_out + a]);
            terms.push((d_in as f64 * lam, op));
        }
        LinearMap { d_in, d_out, terms }
    }

    pub(crate) fn from_hermitian_choi(d_in: usize, d_out: usize, choi: &CMatrix) -> Result<Self> {
        let eig = herm_eig(choi)?;
        Ok(Self::from_choi_eig(d_in, d_out, &eig))
    }

    pub(crate) fn unitary(u: &CMatrix) -> Self {
        LinearMap { d_in: u.cols(), d_out: u.rows(), terms: vec![(1.0, u.clone())] }
    }

    /// The Heisenberg-picture map `X ↦ Σ_k w_k K_k† X K_k`.
    pub(crate) fn adjoint(&self) -> Self {
        LinearMap {
            d_in: self.d_out,
            d_out: self.d_in,
            terms: self.terms.iter().map(|(w, k)| (*w, k.adjoint())).collect(),
        }
    }

    #[cfg(test)]
    pub(crate) fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.d_out, self.d_out);
        for (w, k) in &self.terms {
            let term = &(k * x) * &k.adjoint();
            out = &out + &term.scale(*w);
        }
        out
    }
}

/// A completely positive trace-preserving map stored as its unit-trace Choi
/// state with legs ordered (in, out).
#[derive(Clone, Debug)]
pub struct Channel {
    d_in: usize,
    d_out: usize,
    choi: CMatrix,
    map: LinearMap,
}

impl Channel {
    /// Validates a Choi matrix, repairing round-off below [`REPAIR_LIMIT`].
    pub fn from_choi(d_in: usize, d_out: usize, choi: CMatrix) -> Result<Self> {
        if choi.rows() != d_in * d_out || !choi.is_square() {
            return Err(Error::DimensionMismatch { expected: d_in * d_out, found: choi.rows() });
        }
        let herm = choi.hermitized()?;
        let mut eig = herm_eig(&herm)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -REPAIR_LIMIT {
            return Err(Error::NotPsd(min));
        }
        let tr: f64 = eig.values.iter().sum();
        if (tr - 1.0).abs() > REPAIR_LIMIT {
            return Err(Error::BadTrace(tr));
        }
        let needs_repair = min < -PSD_TOL || (tr - 1.0).abs() > PSD_TOL;
        let choi = if needs_repair {
            for v in eig.values.iter_mut() {
                *v = v.max(0.0);
            }
            let s: f64 = eig.values.iter().sum();
            for v in eig.values.iter_mut() {
                *v /= s;
            }
            eig.reconstruct().hermitian_part()
        } else {
            herm
        };
        let shape = SubsystemShape::new(vec![d_in, d_out])?;
        let marg = partial_trace(&choi, &shape, &[0])?;
        let tp = marg.max_abs_diff(&CMatrix::identity(d_in).scale(1.0 / d_in as f64));
        if tp > TP_TOL {
            return Err(Error::NotTracePreserving(tp));
        }
        let map = LinearMap::from_choi_eig(d_in, d_out, &eig);
        Ok(Channel { d_in, d_out, choi, map })
    }

    pub fn identity(d: usize) -> Self {
        Self::unitary_unchecked(&CMatrix::identity(d))
    }

    /// The channel `ρ ↦ u ρ u†`.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        let defect = unitarity_defect(u);
        if defect > 1e-10 {
            return Err(Error::NotUnitary(defect));
        }
        Ok(Self::unitary_unchecked(u))
    }

    fn unitary_unchecked(u: &CMatrix) -> Self {
        let d = u.rows();
        let vec: Vec<C64> = (0..d * d).map(|r| u[(r % d, r / d)]).collect();
        let choi = CMatrix::projector(&vec).scale(1.0 / d as f64);
        Channel { d_in: d, d_out: d, choi, map: LinearMap::unitary(u) }
    }

    /// Channel from Kraus operators of shape `d_out x d_in`.
    pub fn from_kraus(ops: &[CMatrix]) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidArgument("no Kraus operators".into()))?;
        let (d_out, d_in) = (first.rows(), first.cols());
        let mut choi = CMatrix::zeros(d_in * d_out, d_in * d_out);
        for k in ops {
            if k.rows() != d_out || k.cols() != d_in {
                return Err(Error::DimensionMismatch { expected: d_out * d_in, found: k.rows() * k.cols() });
            }
            let vec: Vec<C64> = (0..d_in * d_out).map(|r| k[(r % d_out, r / d_out)]).collect();
            choi = &choi + &CMatrix::projector(&vec);
        }
        Self::from_choi(d_in, d_out, choi.scale(1.0 / d_in as f64))
    }

    /// Replacement channel `ρ ↦ tr(ρ) β`, Choi `I/d_in ⊗ β`.
    pub fn constant(d_in: usize, beta: &QState) -> Self {
        let choi = kron(&CMatrix::identity(d_in).scale(1.0 / d_in as f64), beta.matrix());
        Self::from_choi(d_in, beta.dim(), choi).expect("constant channel is CPTP")
    }

    /// Transfer matrix in the row-major vectorization convention,
    /// `S[(a,b),(i,j)] = Φ(|i><j|)[a,b]`.
    pub fn from_transfer(d_in: usize, d_out: usize, s: &CMatrix) -> Result<Self> {
        Self::from_choi(d_in, d_out, transfer_to_choi(d_in, d_out, s))
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    pub(crate) fn map(&self) -> &LinearMap {
        &self.map
    }

    /// Kraus operators `K_k` with `Σ K_k† K_k = I`.
    pub fn kraus(&self) -> Vec<CMatrix> {
        self.map.terms.iter().map(|(w, k)| k.scale(w.max(0.0).sqrt())).collect()
    }

    pub fn transfer_matrix(&self) -> CMatrix {
        choi_to_transfer(self.d_in, self.d_out, &self.choi)
    }

    /// `Φ(ρ) = d_in · Tr_in[(ρᵀ ⊗ I) choi]`.
    pub fn apply(&self, rho: &QState) -> Result<QState> {
        if rho.dim() != self.d_in {
            return Err(Error::DimensionMismatch { expected: self.d_in, found: rho.dim() });
        }
        QState::new(self.apply_matrix(rho.matrix()))
    }

    /// Action on an arbitrary `d_in x d_in` operator via the Choi formula.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        let (di, dout) = (self.d_in, self.d_out);
        CMatrix::from_fn(dout, dout, |a, b| {
            let mut acc = ZERO;
            for i in 0..di {
                for j in 0..di {
                    acc += x[(i, j)] * self.choi[(i * dout + a, j * dout + b)];
                }
            }
            acc * di as f64
        })
    }

    /// `later ∘ earlier`.
    pub fn compose(later: &Channel, earlier: &Channel) -> Result<Channel> {
        if earlier.d_out != later.d_in {
            return Err(Error::DimensionMismatch { expected: later.d_in, found: earlier.d_out });
        }
        let s = &later.transfer_matrix() * &earlier.transfer_matrix();
        Self::from_transfer(earlier.d_in, later.d_out, &s)
    }

    /// `a ⊗ b`, with Choi legs reordered to (in_a, in_b, out_a, out_b).
    pub fn tensor(a: &Channel, b: &Channel) -> Channel {
        let raw = kron(&a.choi, &b.choi);
        let shape = SubsystemShape::new(vec![a.d_in, a.d_out, b.d_in, b.d_out]).unwrap();
        let choi = permute_subsystems(&raw, &shape, &[0, 2, 1, 3]).unwrap();
        let mut terms = Vec::with_capacity(a.map.terms.len() * b.map.terms.len());
        for (wa, ka) in &a.map.terms {
            for (wb, kb) in &b.map.terms {
                terms.push((wa * wb, kron(ka, kb)));
            }
        }
        Channel {
            d_in: a.d_in * b.d_in,
            d_out: a.d_out * b.d_out,
            choi,
            map: LinearMap { d_in: a.d_in * b.d_in, d_out: a.d_out * b.d_out, terms },
        }
    }

    /// Kraus rank-1 test: true when the Choi state is pure.
    pub fn purity(&self) -> f64 {
        self.choi.trace_product(&self.choi).re
    }
}

pub(crate) fn choi_to_transfer(d_in: usize, d_out: usize, choi: &CMatrix) -> CMatrix {
    CMatrix::from_fn(d_out * d_out, d_in * d_in, |r, c| {
        let (a, b) = (r / d_out, r % d_out);
        let (i, j) = (c / d_in, c % d_in);
        choi[(i * d_out + a, j * d_out + b)] * d_in as f64
    })
}

pub(crate) fn transfer_to_choi(d_in: usize, d_out: usize, s: &CMatrix) -> CMatrix {
    CMatrix::from_fn(d_in * d_out, d_in * d_out, |r, c| {
        let (i, a) = (r / d_out, r % d_out);
        let (j, b) = (c / d_out, c % d_out);
        s[(a * d_out + b, i * d_in + j)] / d_in as f64
    })
}

/// A density matrix.
#[derive(Clone, Debug)]
pub struct QState {
    matrix: CMatrix,
}

impl QState {
    /// Validates Hermiticity, positivity and unit trace, repairing
    /// round-off below [`REPAIR_LIMIT`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let herm = matrix.hermitized()?;
        let mut eig = herm_eig(&herm)?;
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -REPAIR_LIMIT {
            return Err(Error::NotPsd(min));
        }
        let tr: f64 = eig.values.iter().sum();
        if (tr - 1.0).abs() > REPAIR_LIMIT {
            return Err(Error::BadTrace(tr));
        }
        if min < -PSD_TOL || (tr - 1.0).abs() > PSD_TOL {
            for v in eig.values.iter_mut() {
                *v = v.max(0.0);
            }
            let s: f64 = eig.values.iter().sum();
            for v in eig.values.iter_mut() {
                *v /= s;
            }
            return Ok(QState { matrix: eig.reconstruct().hermitian_part() });
        }
        Ok(QState { matrix: herm })
    }

    pub fn maximally_mixed(d: usize) -> Self {
        QState { matrix: CMatrix::identity(d).scale(1.0 / d as f64) }
    }

    /// `|v><v|` for a vector normalized on input.
    pub fn pure(v: &[C64]) -> Result<Self> {
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("zero or non-finite state vector".into()));
        }
        let w: Vec<C64> = v.iter().map(|z| z / norm).collect();
        Ok(QState { matrix: CMatrix::projector(&w) })
    }

    /// Computational basis state `|k><k|`.
    pub fn basis(d: usize, k: usize) -> Self {
        let mut v = vec![ZERO; d];
        v[k] = ONE;
        QState { matrix: CMatrix::projector(&v) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{maximally_entangled, pauli_x, pauli_z};
    use crate::random::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_unitary_is_maximally_entangled() {
        let c = Channel::from_unitary(&CMatrix::identity(2)).unwrap();
        assert!(c.choi().max_abs_diff(&maximally_entangled(2)) < 1e-15);
        assert!((c.choi().trace().re - 1.0).abs() < 1e-15);
        assert!((c.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_x_choi_is_trace_preserving() {
        let c = Channel::from_unitary(&pauli_x()).unwrap();
        let shape = SubsystemShape::uniform(2, 2).unwrap();
        let m = partial_trace(c.choi(), &shape, &[0]).unwrap();
        assert!(m.max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn from_unitary_rejects_non_unitary() {
        assert!(matches!(
            Channel::from_unitary(&CMatrix::identity(2).scale(1.1)),
            Err(Error::NotUnitary(_))
        ));
    }

    #[test]
    fn unitary_apply_matches_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_unitary(&mut rng, 3);
        let c = Channel::from_unitary(&u).unwrap();
        let rho = QState::new(random_density(&mut rng, 3)).unwrap();
        let direct = &(&u * rho.matrix()) * &u.adjoint();
        assert!(c.apply(&rho).unwrap().matrix().max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn identity_and_depolarizing_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rho = QState::new(random_density(&mut rng, 2)).unwrap();
        let id = Channel::identity(2);
        assert!(id.apply(&rho).unwrap().matrix().max_abs_diff(rho.matrix()) < 1e-15);
        let dep = Channel::from_choi(2, 2, CMatrix::identity(4).scale(0.25)).unwrap();
        let out = dep.apply(&rho).unwrap();
        assert!(out.matrix().max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn apply_matches_kraus_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let c = Channel::from_choi(2, 3, random_choi(&mut rng, 2, 3, 3)).unwrap();
        let rho = QState::new(random_density(&mut rng, 2)).unwrap();
        // Kraus operators extracted independently from the Choi eigenvectors
        let eig = herm_eig(c.choi()).unwrap();
        let mut oracle = CMatrix::zeros(3, 3);
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam <= 1e-14 {
                continue;
            }
            let v = eig.vector(k);
            let kr = CMatrix::from_fn(3, 2, |a, i| v[i * 3 + a] * (2.0 * lam).sqrt());
            oracle = &oracle + &(&(&kr * rho.matrix()) * &kr.adjoint());
        }
        assert!(c.apply(&rho).unwrap().matrix().max_abs_diff(&oracle) < 1e-12);
        let sum: CMatrix = c
            .kraus()
            .iter()
            .fold(CMatrix::zeros(2, 2), |acc, k| &acc + &(&k.adjoint() * k));
        assert!(sum.max_abs_diff(&CMatrix::identity(2)) < 1e-12);
    }

    #[test]
    fn composition_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let c = Channel::from_choi(2, 2, random_choi(&mut rng, 2, 2, 2)).unwrap();
        let id = Channel::identity(2);
        assert!(Channel::compose(&id, &c).unwrap().choi().max_abs_diff(c.choi()) < 1e-14);
        let x = Channel::from_unitary(&pauli_x()).unwrap();
        let xx = Channel::compose(&x, &x).unwrap();
        assert!(xx.choi().max_abs_diff(id.choi()) < 1e-14);
    }

    #[test]
    fn composition_matches_sequential_action_on_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = Channel::from_choi(2, 2, random_choi(&mut rng, 2, 2, 4)).unwrap();
        let b = Channel::from_choi(2, 2, random_choi(&mut rng, 2, 2, 2)).unwrap();
        let ba = Channel::compose(&b, &a).unwrap();
        // 16 operator-basis inputs: all matrix units |i><j| and their Hermitian combos
        for (basis, _) in crate::linalg::hermitian_basis(2) {
            let lhs = ba.apply_matrix(&basis);
            let rhs = b.apply_matrix(&a.apply_matrix(&basis));
            assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        }
        for i in 0..2 {
            for j in 0..2 {
                let mut e = CMatrix::zeros(2, 2);
                e[(i, j)] = ONE;
                assert!(ba.apply_matrix(&e).max_abs_diff(&b.apply_matrix(&a.apply_matrix(&e))) < 1e-12);
            }
        }
    }

    #[test]
    fn compose_dimension_mismatch() {
        let a = Channel::identity(2);
        let b = Channel::identity(3);
        assert!(matches!(Channel::compose(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn tensor_acts_factorwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let a = Channel::from_choi(2, 2, random_choi(&mut rng, 2, 2, 2)).unwrap();
        let b = Channel::from_unitary(&random_unitary(&mut rng, 2)).unwrap();
        let ab = Channel::tensor(&a, &b);
        let r1 = random_density(&mut rng, 2);
        let r2 = random_density(&mut rng, 2);
        let lhs = ab.apply_matrix(&kron(&r1, &r2));
        let rhs = kron(&a.apply_matrix(&r1), &b.apply_matrix(&r2));
        assert!(lhs.max_abs_diff(&rhs) < 1e-13);
        assert!(ab.map().apply(&kron(&r1, &r2)).max_abs_diff(&rhs) < 1e-13);
    }

    #[test]
    fn repair_and_rejection() {
        let mut choi = maximally_entangled(2);
        choi[(1, 1)] = C64::new(-5e-10, 0.0);
        choi[(0, 0)] += C64::new(5e-10, 0.0);
        let c = Channel::from_choi(2, 2, choi).unwrap();
        assert!(herm_eig(c.choi()).unwrap().values[3] >= -1e-15);
        let mut bad = maximally_entangled(2);
        bad[(1, 1)] = C64::new(-1e-3, 0.0);
        bad[(0, 0)] += C64::new(1e-3, 0.0);
        assert!(matches!(Channel::from_choi(2, 2, bad), Err(Error::NotPsd(_))));
        // not trace preserving: |0><0| ⊗ |0><0|
        let mut ntp = CMatrix::zeros(4, 4);
        ntp[(0, 0)] = ONE;
        assert!(matches!(Channel::from_choi(2, 2, ntp), Err(Error::NotTracePreserving(_))));
    }

    #[test]
    fn transfer_roundtrip_and_state_checks() {
        let z = Channel::from_unitary(&pauli_z()).unwrap();
        let back = transfer_to_choi(2, 2, &z.transfer_matrix());
        assert!(back.max_abs_diff(z.choi()) < 1e-15);
        assert!(QState::new(CMatrix::identity(2)).is_err());
        assert!(QState::new(CMatrix::from_real_diagonal(&[1.2, -0.2])).is_err());
        assert!((QState::maximally_mixed(4).matrix().trace().re - 1.0).abs() < 1e-15);
    }
}
