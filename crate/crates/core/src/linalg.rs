//! Dense complex linear algebra.
//!
//! [`CMatrix`] is a thin newtype over a `nalgebra` complex matrix that enforces
//! finite entries and adds the multipartite operations used for Choi states:
//! Kronecker products, partial traces and subsystem permutations. Hermitian
//! eigendecompositions are delegated to `nalgebra`'s symmetric eigensolver and
//! wrapped in a residual contract.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative asymmetry below which a matrix is silently Hermitized.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Dense complex matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows(), self.cols())?;
        for i in 0..self.rows() {
            write!(f, "  ")?;
            for j in 0..self.cols() {
                let z = self[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        CMatrix(DMatrix::identity(n, n))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Self::from_inner(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        CMatrix(DMatrix::from_fn(rows, cols, |i, j| f(i, j)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { ZERO })
    }

    /// Column vector.
    pub fn column(entries: &[C64]) -> Self {
        CMatrix(DMatrix::from_column_slice(entries.len(), 1, entries))
    }

    /// Projector `|v><v|` for a column vector `v`.
    pub fn projector(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    pub fn from_inner(m: DMatrix<C64>) -> Result<Self> {
        if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(CMatrix(m))
        } else {
            Err(Error::NonFinite)
        }
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    /// Dimension of a square matrix (the row count).
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        CMatrix(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        CMatrix(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        CMatrix(self.0.map(|z| z.conj()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        CMatrix(&self.0 * C64::new(s, 0.0))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        CMatrix(&self.0 * s)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.0.shape(), other.0.shape(), "shape mismatch in max_abs_diff");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &CMatrix) -> C64 {
        let n = self.rows();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..self.cols() {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// `‖a − a†‖_F / ‖a‖_F`, zero for the zero matrix.
    pub fn relative_asymmetry(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        let n = self.rows();
        for i in 0..n {
            for j in 0..n {
                acc += (self.0[(i, j)] - self.0[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt() / norm
    }

    /// `(a + a†)/2`.
    pub fn hermitian_part(&self) -> Self {
        CMatrix((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Hermitizes the matrix if it is within [`HERMITIAN_TOL`] of Hermitian.
    pub fn hermitized(&self) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} matrix is not square",
                self.rows(),
                self.cols()
            )));
        }
        let asym = self.relative_asymmetry();
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian(asym));
        }
        Ok(self.hermitian_part())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl Add<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 + &rhs.0)
    }
}

impl Sub<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 - &rhs.0)
    }
}

/// Per-factor dimensions of a multipartite space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubsystemShape {
    dims: Vec<usize>,
}

impl SubsystemShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!("zero factor dimension in {dims:?}")));
        }
        Ok(SubsystemShape { dims })
    }

    /// `n` factors of dimension `d`.
    pub fn uniform(d: usize, n: usize) -> Result<Self> {
        Self::new(vec![d; n])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides: the last factor varies fastest.
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.dims[k + 1];
        }
        strides
    }

    fn check(&self, a: &CMatrix) -> Result<()> {
        if !a.is_square() || a.dim() != self.total() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} (total {}) against {}x{} matrix",
                self.dims,
                self.total(),
                a.rows(),
                a.cols()
            )));
        }
        Ok(())
    }
}

/// Linear offsets of every multi-index over `factors` (in the given order).
fn offsets(dims: &[usize], strides: &[usize], factors: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &f in factors {
        let mut next = Vec::with_capacity(out.len() * dims[f]);
        for &base in &out {
            for x in 0..dims[f] {
                next.push(base + x * strides[f]);
            }
        }
        out = next;
    }
    out
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    CMatrix(a.0.kronecker(&b.0))
}

/// Kronecker product of a list of matrices; the 1x1 identity for an empty list.
pub fn kron_all<'a>(items: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    items
        .into_iter()
        .fold(CMatrix::identity(1), |acc, m| kron(&acc, m))
}

/// Traces out every factor not listed in `keep`. Kept factors stay in their
/// original relative order.
pub fn partial_trace(a: &CMatrix, shape: &SubsystemShape, keep: &[usize]) -> Result<CMatrix> {
    shape.check(a)?;
    let n = shape.len();
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    keep_sorted.dedup();
    if keep_sorted.len() != keep.len() || keep_sorted.iter().any(|&k| k >= n) {
        return Err(Error::ShapeMismatch(format!(
            "keep set {keep:?} invalid for {n} factors"
        )));
    }
    let traced: Vec<usize> = (0..n).filter(|k| !keep_sorted.contains(k)).collect();
    let strides = shape.strides();
    let kept_off = offsets(shape.dims(), &strides, &keep_sorted);
    let traced_off = offsets(shape.dims(), &strides, &traced);
    let m = kept_off.len();
    let inner = a.inner();
    let out = DMatrix::from_fn(m, m, |r, c| {
        let (br, bc) = (kept_off[r], kept_off[c]);
        traced_off
            .iter()
            .map(|&t| inner[(br + t, bc + t)])
            .sum::<C64>()
    });
    Ok(CMatrix(out))
}

/// Reorders tensor factors so that new factor `k` is old factor `perm[k]`.
pub fn permute_subsystems(a: &CMatrix, shape: &SubsystemShape, perm: &[usize]) -> Result<CMatrix> {
    shape.check(a)?;
    let index_map = permutation_index_map(shape, perm)?;
    let n = a.dim();
    let inner = a.inner();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let nj = index_map[j];
        for i in 0..n {
            out[(index_map[i], nj)] = inner[(i, j)];
        }
    }
    Ok(CMatrix(out))
}

/// For each old linear index, the linear index after permuting factors.
pub(crate) fn permutation_index_map(shape: &SubsystemShape, perm: &[usize]) -> Result<Vec<usize>> {
    let n = shape.len();
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidPermutation(perm.to_vec()));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        seen[p] = true;
    }
    let new_dims: Vec<usize> = perm.iter().map(|&p| shape.dims()[p]).collect();
    let new_shape = SubsystemShape { dims: new_dims };
    let new_strides = new_shape.strides();
    // position of each old factor in the new ordering
    let mut pos = vec![0; n];
    for (k, &p) in perm.iter().enumerate() {
        pos[p] = k;
    }
    let old_stride_by_new: Vec<usize> = (0..n).map(|f| new_strides[pos[f]]).collect();
    Ok(offsets(shape.dims(), &old_stride_by_new, &(0..n).collect::<Vec<_>>()))
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermEig {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl HermEig {
    pub fn reconstruct(&self) -> CMatrix {
        let d = CMatrix::from_real_diagonal(&self.values);
        &(&self.vectors * &d) * &self.vectors.adjoint()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        (0..self.vectors.rows()).map(|i| self.vectors[(i, k)]).collect()
    }
}

/// Householder reflection `I − 2vv†` with a fixed, unstructured unit `v`.
fn scrambler(n: usize) -> DMatrix<C64> {
    let v: Vec<C64> = (0..n).map(|k| C64::from_polar(1.0 + 0.37 * ((k * 7919) % 13) as f64, 2.399963 * k as f64)).collect();
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { ONE } else { ZERO };
        d - v[i] * v[j].conj() * (2.0 / norm2)
    })
}

fn all_finite(e: &nalgebra::SymmetricEigen<C64, nalgebra::Dyn>) -> bool {
    e.eigenvalues.iter().all(|x| x.is_finite()) && e.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `nalgebra`'s QR iteration returns NaN on some highly degenerate sparse
/// matrices (e.g. products of Bell projectors); those are retried in a
/// reflected basis.
fn symmetric_eigen(h: DMatrix<C64>) -> Result<nalgebra::SymmetricEigen<C64, nalgebra::Dyn>> {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    if all_finite(&eig) {
        return Ok(eig);
    }
    let r = scrambler(h.nrows());
    let mut g = &r * h * &r;
    g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let mut eig = nalgebra::SymmetricEigen::new(g);
    if !all_finite(&eig) {
        return Err(Error::InvalidArgument("eigensolver produced non-finite values".into()));
    }
    eig.eigenvectors = r * eig.eigenvectors;
    Ok(eig)
}

pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    let h = a.hermitized()?;
    let n = h.dim();
    if n == 0 {
        return Ok(HermEig { values: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    let eig = symmetric_eigen(h.0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermEig { values, vectors: CMatrix(vectors) })
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn herm_eigvals(a: &CMatrix) -> Result<Vec<f64>> {
    let h = a.hermitized()?;
    let mut vals: Vec<f64> = h.0.symmetric_eigenvalues().iter().copied().collect();
    if vals.iter().any(|x| !x.is_finite()) {
        vals = symmetric_eigen(h.0)?.eigenvalues.iter().copied().collect();
    }
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// Applies a real scalar function to the spectrum: `V f(Λ) V†`.
pub fn herm_func(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let eig = herm_eig(a)?;
    spectral_apply(&eig, f)
}

pub(crate) fn spectral_apply(eig: &HermEig, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    let mut fvals = Vec::with_capacity(eig.values.len());
    for &x in &eig.values {
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::FunctionDomain(x));
        }
        fvals.push(y);
    }
    let v = &eig.vectors;
    let n = v.rows();
    let scaled = CMatrix::from_fn(n, n, |i, j| v[(i, j)] * fvals[j]);
    Ok(&scaled * &v.adjoint())
}

/// `exp(-i h t)`.
pub fn propagator(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = herm_eig(h)?;
    let v = &eig.vectors;
    let n = v.rows();
    let phases: Vec<C64> = eig.values.iter().map(|&e| (-I * e * t).exp()).collect();
    let scaled = CMatrix::from_fn(n, n, |i, j| v[(i, j)] * phases[j]);
    Ok(&scaled * &v.adjoint())
}

/// Largest eigenvalue modulus of the Hermitian part of `a`.
pub fn op_norm(a: &CMatrix) -> f64 {
    a.hermitian_part()
        .0
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |m, x| f64::max(m, x.abs()))
}

/// General matrix exponential (Padé, via nalgebra).
pub fn expm(a: &CMatrix) -> CMatrix {
    CMatrix(a.0.clone().exp())
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let prod = &u.adjoint() * u;
    (&prod - &CMatrix::identity(u.dim())).frobenius_norm()
}

/// Unit-trace maximally entangled projector on `d ⊗ d`.
pub fn maximally_entangled(d: usize) -> CMatrix {
    let n = d * d;
    let w = 1.0 / d as f64;
    CMatrix::from_fn(n, n, |r, c| {
        if r % (d + 1) == 0 && c % (d + 1) == 0 {
            C64::new(w, 0.0)
        } else {
            ZERO
        }
    })
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO })
}

pub fn pauli_y() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = -I;
    m[(1, 0)] = I;
    m
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_real_diagonal(&[1.0, -1.0])
}

/// Orthogonal Hermitian basis of `n x n` matrices: the identity followed by
/// the generalized Gell-Mann matrices (symmetric, antisymmetric, diagonal).
/// Element `k` satisfies `tr(B_k B_l) = δ_kl · norm_k`; the norms are returned
/// alongside.
pub fn hermitian_basis(n: usize) -> Vec<(CMatrix, f64)> {
    let mut out = Vec::with_capacity(n * n);
    out.push((CMatrix::identity(n), n as f64));
    for j in 0..n {
        for k in (j + 1)..n {
            let mut s = CMatrix::zeros(n, n);
            s[(j, k)] = ONE;
            s[(k, j)] = ONE;
            out.push((s, 2.0));
            let mut a = CMatrix::zeros(n, n);
            a[(j, k)] = -I;
            a[(k, j)] = I;
            out.push((a, 2.0));
        }
    }
    for l in 1..n {
        let c = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut diag = vec![0.0; n];
        for d in diag.iter_mut().take(l) {
            *d = c;
        }
        diag[l] = -(l as f64) * c;
        out.push((CMatrix::from_real_diagonal(&diag), 2.0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kron_identity_and_pauli() {
        assert_eq!(kron(&CMatrix::identity(2), &CMatrix::identity(2)), CMatrix::identity(4));
        let zz = kron(&pauli_z(), &pauli_z());
        assert!(zz.max_abs_diff(&CMatrix::from_real_diagonal(&[1.0, -1.0, -1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn kron_matches_index_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3);
        let b = random_matrix(&mut rng, 3);
        let k = kron(&a, &b);
        for i in 0..9 {
            for j in 0..9 {
                let expected = a[(i / 3, j / 3)] * b[(i % 3, j % 3)];
                assert!((k[(i, j)] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_of_product_and_identity_keep() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = maximally_entangled(2);
        let shape = SubsystemShape::uniform(2, 4).unwrap();
        let pp = kron(&psi, &psi);
        let marg = partial_trace(&pp, &shape, &[0, 1]).unwrap();
        assert!(marg.max_abs_diff(&psi) < 1e-15);
        let rho = random_density(&mut rng, 4);
        let s2 = SubsystemShape::uniform(2, 2).unwrap();
        assert!(partial_trace(&rho, &s2, &[0, 1]).unwrap().max_abs_diff(&rho) < 1e-15);
    }

    #[test]
    fn partial_trace_matches_basis_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 4);
        let s2 = SubsystemShape::uniform(2, 2).unwrap();
        let a = partial_trace(&rho, &s2, &[0]).unwrap();
        let b = partial_trace(&rho, &s2, &[1]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                // Tr_B: sum over the second index
                let ea: C64 = (0..2).map(|k| rho[(2 * i + k, 2 * j + k)]).sum();
                let eb: C64 = (0..2).map(|k| rho[(2 * k + i, 2 * k + j)]).sum();
                assert!((a[(i, j)] - ea).norm() < 1e-15);
                assert!((b[(i, j)] - eb).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn partial_trace_rejects_bad_shape() {
        let rho = CMatrix::identity(4);
        let s = SubsystemShape::uniform(2, 3).unwrap();
        assert!(matches!(partial_trace(&rho, &s, &[0]), Err(Error::ShapeMismatch(_))));
        let s2 = SubsystemShape::uniform(2, 2).unwrap();
        assert!(partial_trace(&rho, &s2, &[2]).is_err());
    }

    #[test]
    fn permute_swap_and_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 2);
        let b = random_matrix(&mut rng, 3);
        let shape = SubsystemShape::new(vec![2, 3]).unwrap();
        let ab = kron(&a, &b);
        assert_eq!(permute_subsystems(&ab, &shape, &[0, 1]).unwrap(), ab);
        let swapped = permute_subsystems(&ab, &shape, &[1, 0]).unwrap();
        assert!(swapped.max_abs_diff(&kron(&b, &a)) < 1e-15);

        let shape3 = SubsystemShape::new(vec![2, 3, 2]).unwrap();
        let m = random_matrix(&mut rng, 12);
        let perm = [2, 0, 1];
        let p = permute_subsystems(&m, &shape3, &perm).unwrap();
        let new_shape = SubsystemShape::new(perm.iter().map(|&k| shape3.dims()[k]).collect()).unwrap();
        let back = permute_subsystems(&p, &new_shape, &inverse_permutation(&perm)).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn permute_rejects_invalid() {
        let shape = SubsystemShape::uniform(2, 2).unwrap();
        let m = CMatrix::identity(4);
        assert!(matches!(
            permute_subsystems(&m, &shape, &[0, 0]),
            Err(Error::InvalidPermutation(_))
        ));
        assert!(permute_subsystems(&m, &shape, &[0]).is_err());
    }

    #[test]
    fn eig_basic_cases() {
        let e = herm_eig(&pauli_z()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15 && (e.values[1] + 1.0).abs() < 1e-15);
        let e = herm_eig(&CMatrix::identity(5)).unwrap();
        assert!(e.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn eig_reconstruction_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(&mut rng, 8);
        let e = herm_eig(&a).unwrap();
        let lam = CMatrix::from_real_diagonal(&e.values);
        let resid = (&(&a * &e.vectors) - &(&e.vectors * &lam)).frobenius_norm();
        assert!(resid <= 1e-10 * a.frobenius_norm(), "residual {resid}");
        assert!(unitarity_defect(&e.vectors) < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eig_of_bell_projector_products() {
        let p = maximally_entangled(2);
        for k in 3..5 {
            let m = kron_all(&vec![p.clone(); k]);
            let vals = herm_eigvals(&m).unwrap();
            assert!((vals[0] - 1.0).abs() < 1e-12 && vals[1..].iter().all(|x| x.abs() < 1e-12), "{vals:?}");
            let eig = herm_eig(&m).unwrap();
            assert!(spectral_apply(&eig, |x| x).unwrap().max_abs_diff(&m) < 1e-12);
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        assert!(matches!(herm_eig(&m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn herm_func_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_hermitian(&mut rng, 4);
        assert!(herm_func(&a, |x| x).unwrap().max_abs_diff(&a) < 1e-12);
        let d = CMatrix::from_real_diagonal(&[0.0, 2f64.ln()]);
        let e = herm_func(&d, f64::exp).unwrap();
        assert!(e.max_abs_diff(&CMatrix::from_real_diagonal(&[1.0, 2.0])) < 1e-14);
        // log2 with floor clamp vs eigenvalue-wise scalar oracle
        let rho = random_density(&mut rng, 4);
        let logm = herm_func(&rho, |x| x.max(1e-12).log2()).unwrap();
        let vals = herm_eigvals(&rho).unwrap();
        let lhs = rho.trace_product(&logm).re;
        let rhs: f64 = vals.iter().map(|&p| p * p.max(1e-12).log2()).sum();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!(matches!(herm_func(&pauli_z(), f64::ln), Err(Error::FunctionDomain(_))));
    }

    #[test]
    fn propagator_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_hermitian(&mut rng, 4);
        assert!(propagator(&h, 0.0).unwrap().max_abs_diff(&CMatrix::identity(4)) < 1e-14);
        let t = 0.37;
        let u = propagator(&pauli_z(), t).unwrap();
        assert!((u[(0, 0)] - (-I * t).exp()).norm() < 1e-15);
        assert!((u[(1, 1)] - (I * t).exp()).norm() < 1e-15);
        let u1 = propagator(&h, 0.3).unwrap();
        let u2 = propagator(&h, 1.1).unwrap();
        let u12 = propagator(&h, 1.4).unwrap();
        assert!((&(&u1 * &u2) - &u12).frobenius_norm() < 1e-10);
        assert!(unitarity_defect(&u12) < 1e-10);
    }

    #[test]
    fn op_norm_cases() {
        assert!((op_norm(&pauli_x()) - 1.0).abs() < 1e-15);
        assert!((op_norm(&CMatrix::identity(3).scale(3.0)) - 3.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_hermitian(&mut rng, 6);
        // power iteration on h^2 converges to the largest |eigenvalue|^2
        let h2 = &h * &h;
        let mut v = CMatrix::column(&vec![ONE; 6]);
        let mut est = 0.0;
        for _ in 0..200_000 {
            let w = &h2 * &v;
            est = w.frobenius_norm();
            v = w.scale(1.0 / est);
        }
        let oracle = est.sqrt();
        assert!((op_norm(&h) - oracle).abs() / oracle < 1e-8);
    }

    #[test]
    fn gell_mann_basis_is_orthogonal() {
        let basis = hermitian_basis(4);
        assert_eq!(basis.len(), 16);
        for (k, (a, na)) in basis.iter().enumerate() {
            assert!(a.relative_asymmetry() < 1e-15);
            for (l, (b, _)) in basis.iter().enumerate() {
                let ip = a.trace_product(b);
                let expected = if k == l { *na } else { 0.0 };
                assert!((ip.re - expected).abs() < 1e-12 && ip.im.abs() < 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn partial_trace_preserves_trace(seed in any::<u64>(), keep_mask in 0u8..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = random_density(&mut rng, 12);
                let shape = SubsystemShape::new(vec![2, 3, 2]).unwrap();
                let keep: Vec<usize> = (0..3).filter(|k| keep_mask & (1 << k) != 0).collect();
                let r = partial_trace(&rho, &shape, &keep).unwrap();
                prop_assert!((r.trace() - rho.trace()).norm() < 1e-12);
            }

            #[test]
            fn exp_log_roundtrip(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = &random_density(&mut rng, 5) + &CMatrix::identity(5).scale(0.05);
                let back = herm_func(&herm_func(&rho, f64::ln).unwrap(), f64::exp).unwrap();
                prop_assert!((&back - &rho).frobenius_norm() / rho.frobenius_norm() < 1e-8);
            }

            #[test]
            fn propagator_is_unitary(seed in any::<u64>(), t in -20.0f64..20.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = random_hermitian(&mut rng, 4);
                prop_assert!(unitarity_defect(&propagator(&h, t).unwrap()) < 1e-10);
            }

            #[test]
            fn permutation_preserves_trace_and_spectrum(seed in any::<u64>(), which in 0usize..6) {
                let perms = [[0,1,2],[0,2,1],[1,0,2],[1,2,0],[2,0,1],[2,1,0]];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rho = random_density(&mut rng, 8);
                let shape = SubsystemShape::uniform(2, 3).unwrap();
                let p = permute_subsystems(&rho, &shape, &perms[which]).unwrap();
                prop_assert!((p.trace() - rho.trace()).norm() < 1e-14);
                let a = herm_eigvals(&rho).unwrap();
                let b = herm_eigvals(&p).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
