//! Random matrices, states and channels for sampling and tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{herm_func, partial_trace, CMatrix, SubsystemShape, C64};

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Ginibre matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| complex_gaussian(rng))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    random_matrix(rng, n).hermitian_part()
}

/// Normalized complex-Gaussian vector (Haar-random pure state).
pub fn random_pure_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Hilbert–Schmidt random full-rank density matrix.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(rng, n);
    let w = &g * &g.adjoint();
    let tr = w.trace().re;
    w.scale(1.0 / tr)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_matrix(rng, n).into_inner();
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] = q[(i, j)] * phase;
        }
    }
    CMatrix::from_inner(out).expect("finite unitary")
}

/// Unit-trace Choi matrix (leg order in, out) of a random CPTP map with the
/// given Kraus rank, obtained by normalizing a Wishart matrix so that its
/// output partial trace is `I/d_in`.
pub fn random_choi<R: Rng + ?Sized>(rng: &mut R, d_in: usize, d_out: usize, rank: usize) -> CMatrix {
    let n = d_in * d_out;
    let g = CMatrix::from_fn(n, rank.max(1), |_, _| complex_gaussian(rng));
    let w = &g * &g.adjoint();
    let shape = SubsystemShape::new(vec![d_in, d_out]).unwrap();
    let s = partial_trace(&w, &shape, &[0]).unwrap();
    let s_inv_sqrt = herm_func(&s, |x| 1.0 / x.sqrt()).unwrap();
    let left = crate::linalg::kron(&s_inv_sqrt, &CMatrix::identity(d_out));
    let j = &(&left * &w) * &left;
    j.scale(1.0 / d_in as f64).hermitian_part()
}
