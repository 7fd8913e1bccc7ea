//! Quantum relative entropy and the information monotones of processes.

use crate::error::{Error, Result};
use crate::linalg::{herm_eig, herm_eigvals, kron, kron_all, partial_trace, CMatrix, SubsystemShape};
use crate::process::{Channel, ProcessTensor};

/// Eigenvalues at or below this are treated as zero inside logarithms.
pub const CLAMP: f64 = 1e-12;
/// Mass of the first argument outside the support of the second above which
/// the relative entropy is infinite.
pub const SUPPORT_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelEntropy {
    /// Bits; `f64::INFINITY` when the support condition fails.
    pub value: f64,
    /// Mass of the first argument on eigenvectors of the second with
    /// eigenvalue at or below [`CLAMP`].
    pub support_violation: f64,
    /// Total weight of eigenvalues (of either argument) raised to the clamp.
    pub clamped_mass: f64,
}

impl RelEntropy {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

fn check_state(x: &CMatrix, vals: &[f64], what: &str) -> Result<()> {
    let min = vals.last().copied().unwrap_or(0.0);
    if min < -PSD_TOL {
        return Err(Error::NotPsd(min));
    }
    let tr = x.trace().re;
    if (tr - 1.0).abs() > PSD_TOL {
        return Err(Error::InvalidArgument(format!("{what} has trace {tr}")));
    }
    Ok(())
}

/// `S(ρ‖σ) = tr ρ log₂ρ − tr ρ log₂σ`.
pub fn rel_entropy(rho: &CMatrix, sigma: &CMatrix) -> Result<RelEntropy> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: sigma.dim() });
    }
    let rv = herm_eigvals(rho)?;
    check_state(rho, &rv, "first argument")?;
    let se = herm_eig(sigma)?;
    check_state(sigma, &se.values, "second argument")?;

    let mut clamped = 0.0;
    let mut neg_entropy = 0.0;
    for &l in &rv {
        if l > CLAMP {
            neg_entropy += l * l.log2();
        } else {
            clamped += l.max(0.0);
        }
    }
    // diagonal of ρ in the eigenbasis of σ
    let w = se.vectors.inner();
    let rw = rho.inner() * w;
    let mut cross = 0.0;
    let mut outside = 0.0;
    for (k, &mu) in se.values.iter().enumerate() {
        let p: f64 = (0..w.nrows()).map(|i| (w[(i, k)].conj() * rw[(i, k)]).re).sum();
        if mu > CLAMP {
            cross += p * mu.log2();
        } else {
            outside += p.max(0.0);
            clamped += mu.max(0.0);
            cross += p * CLAMP.log2();
        }
    }
    let value = if outside > SUPPORT_TOL { f64::INFINITY } else { (neg_entropy - cross).max(0.0) };
    Ok(RelEntropy { value, support_violation: outside, clamped_mass: clamped })
}

fn product_process(t: &ProcessTensor, factors: &[CMatrix]) -> Result<ProcessTensor> {
    ProcessTensor::new(kron_all(factors), t.lines().to_vec())
}

/// Product of the constituent-channel marginals on leg pairs `(i_{j−1}, o_j)`.
pub fn mkv_marginal(t: &ProcessTensor) -> Result<ProcessTensor> {
    let factors = t
        .channel_pairs()
        .into_iter()
        .map(|(a, b)| t.leg_marginal(&[a, b]))
        .collect::<Result<Vec<_>>>()?;
    product_process(t, &factors)
}

/// Product of every single-leg marginal.
pub fn full_marginal(t: &ProcessTensor) -> Result<ProcessTensor> {
    let factors = (0..t.n_legs()).map(|k| t.leg_marginal(&[k])).collect::<Result<Vec<_>>>()?;
    product_process(t, &factors)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotoneReport {
    pub i_bits: f64,
    pub m_bits: f64,
    pub n_bits: f64,
    /// Mass outside the reference support; zero for marginal products.
    pub support_violation: f64,
    pub clamped_mass: f64,
}

impl MonotoneReport {
    /// True when some relative entropy was infinite.
    pub fn support_flag(&self) -> bool {
        !(self.i_bits.is_finite() && self.m_bits.is_finite() && self.n_bits.is_finite())
    }

    /// `|I − (M + N)|`.
    pub fn additivity_defect(&self) -> f64 {
        (self.i_bits - self.m_bits - self.n_bits).abs()
    }
}

/// `tr x log₂x` and the magnitude of the negative eigenvalues dropped. No clamp
/// is needed since `λ log λ → 0`.
fn neg_entropy(x: &CMatrix) -> Result<(f64, f64)> {
    let vals = herm_eigvals(x)?;
    check_state(x, &vals, "state")?;
    let mut h = 0.0;
    let mut dropped = 0.0;
    for &l in &vals {
        if l > 0.0 {
            h += l * l.log2();
        } else {
            dropped -= l;
        }
    }
    Ok((h, dropped))
}

/// Total information `I = S(T‖T_marg)`, Markov information
/// `M = S(T_mkv‖T_marg)` and non-Markovianity `N = S(T‖T_mkv)`.
///
/// Both references are products of marginals of `T`, so each relative entropy
/// reduces to a difference of entropies, e.g. `N = Σ S(pair) − S(T)`. This
/// avoids logarithms of the rank-deficient product and keeps `N` accurate
/// well below [`CLAMP`]. The support condition holds automatically, and
/// `clamped_mass` reports the negative eigenvalue mass dropped.
pub fn monotone_report(t: &ProcessTensor) -> Result<MonotoneReport> {
    let (h_t, c_t) = neg_entropy(t.choi())?;
    let mut h_pairs = 0.0;
    let mut clamped = c_t;
    for (a, b) in t.channel_pairs() {
        let (h, c) = neg_entropy(&t.leg_marginal(&[a, b])?)?;
        h_pairs += h;
        clamped = clamped.max(c);
    }
    let mut h_legs = 0.0;
    for k in 0..t.n_legs() {
        let (h, c) = neg_entropy(&t.leg_marginal(&[k])?)?;
        h_legs += h;
        clamped = clamped.max(c);
    }
    Ok(MonotoneReport {
        i_bits: (h_t - h_legs).max(0.0),
        m_bits: (h_pairs - h_legs).max(0.0),
        n_bits: (h_t - h_pairs).max(0.0),
        support_violation: 0.0,
        clamped_mass: clamped,
    })
}

/// Mutual information of a channel's Choi state between its input and output.
pub fn channel_information(c: &Channel) -> Result<RelEntropy> {
    let shape = SubsystemShape::new(vec![c.d_in(), c.d_out()])?;
    let rin = partial_trace(c.choi(), &shape, &[0])?;
    let rout = partial_trace(c.choi(), &shape, &[1])?;
    rel_entropy(c.choi(), &kron(&rin, &rout))
}

/// [`channel_information`] of a process without open slots.
pub fn process_channel_information(t: &ProcessTensor) -> Result<RelEntropy> {
    channel_information(&t.as_channel()?)
}
