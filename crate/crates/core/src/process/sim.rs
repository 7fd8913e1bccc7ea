//! Density-matrix propagation over a growing list of tensor factors.

use nalgebra::DMatrix;

use crate::linalg::{kron, maximally_entangled, partial_trace, permute_subsystems, CMatrix, SubsystemShape, C64, ZERO};
use crate::process::channel::LinearMap;

/// `(I_L ⊗ K ⊗ I_R) ρ` for a `t x t` operator `K`.
fn left_apply(k: &CMatrix, rho: &DMatrix<C64>, l: usize, t: usize, r: usize) -> DMatrix<C64> {
    let n = rho.nrows();
    let ncols = rho.ncols();
    debug_assert_eq!(n, l * t * r);
    let kk: Vec<C64> = k.row_major();
    let src = rho.as_slice();
    let mut out = vec![ZERO; n * ncols];
    for c in 0..ncols {
        let col = &src[c * n..(c + 1) * n];
        let dst = &mut out[c * n..(c + 1) * n];
        for li in 0..l {
            for ri in 0..r {
                let base = li * t * r + ri;
                for ti in 0..t {
                    let row = &kk[ti * t..(ti + 1) * t];
                    let mut acc = ZERO;
                    for (u, kv) in row.iter().enumerate() {
                        acc += kv * col[base + u * r];
                    }
                    dst[base + ti * r] = acc;
                }
            }
        }
    }
    DMatrix::from_vec(n, ncols, out)
}

/// A Hermitian operator on an ordered list of tensor factors.
pub(crate) struct MultiState {
    pub rho: CMatrix,
    pub dims: Vec<usize>,
}

impl MultiState {
    pub fn new(rho: CMatrix, dims: Vec<usize>) -> Self {
        debug_assert_eq!(rho.dim(), dims.iter().product::<usize>());
        MultiState { rho, dims }
    }

    /// Applies `map` to the contiguous factors `start..start+len`.
    pub fn apply(&mut self, start: usize, len: usize, map: &LinearMap) {
        let l: usize = self.dims[..start].iter().product();
        let t: usize = self.dims[start..start + len].iter().product();
        let r: usize = self.dims[start + len..].iter().product();
        assert_eq!(map.d_in, t, "map input dimension does not match factor group");
        assert_eq!(map.d_out, t, "only square maps act in place");
        let rho = self.rho.inner();
        let mut acc: Option<DMatrix<C64>> = None;
        for (w, k) in &map.terms {
            let half = left_apply(k, rho, l, t, r).adjoint();
            let mut term = left_apply(k, &half, l, t, r);
            if *w != 1.0 {
                term *= C64::new(*w, 0.0);
            }
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        let n = rho.nrows();
        self.rho = CMatrix::from_inner(acc.unwrap_or_else(|| DMatrix::zeros(n, n)))
            .expect("finite propagation");
    }

    /// Moves the current system factor (second to last) out as a kept leg and
    /// feeds a fresh maximally entangled pair: `[.., s, e] → [.., s, i, s', e]`.
    pub fn open_slot(&mut self, d: usize) {
        let k = self.dims.len();
        let joined = kron(&self.rho, &maximally_entangled(d));
        let mut dims = self.dims.clone();
        dims.push(d);
        dims.push(d);
        let mut perm: Vec<usize> = (0..k - 1).collect();
        perm.extend([k, k + 1, k - 1]);
        let shape = SubsystemShape::new(dims.clone()).unwrap();
        self.rho = permute_subsystems(&joined, &shape, &perm).unwrap();
        self.dims = perm.iter().map(|&p| dims[p]).collect();
    }

    /// Traces out the last factor.
    pub fn trace_last(&mut self) {
        let n = self.dims.len();
        let shape = SubsystemShape::new(self.dims.clone()).unwrap();
        let keep: Vec<usize> = (0..n - 1).collect();
        self.rho = partial_trace(&self.rho, &shape, &keep).unwrap();
        self.dims.pop();
    }

    /// Traces out the second to last factor.
    pub fn trace_second_last(&mut self) {
        let n = self.dims.len();
        let shape = SubsystemShape::new(self.dims.clone()).unwrap();
        let keep: Vec<usize> = (0..n).filter(|&k| k != n - 2).collect();
        self.rho = partial_trace(&self.rho, &shape, &keep).unwrap();
        self.dims.remove(n - 2);
    }
}
