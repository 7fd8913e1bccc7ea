use crate::error::{Error, Result};
use crate::linalg::{expm, kron, CMatrix, I};
use crate::process::Channel;

/// GKSL generator `L(ρ) = −i[H, ρ] + Σ_k γ_k (L_k ρ L_k† − ½{L_k† L_k, ρ})`.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    h: CMatrix,
    jumps: Vec<CMatrix>,
    rates: Vec<f64>,
}

impl LindbladGenerator {
    pub fn new(h: CMatrix, jumps: Vec<CMatrix>, rates: Vec<f64>) -> Result<Self> {
        let h = h.hermitized()?;
        let d = h.dim();
        if jumps.len() != rates.len() {
            return Err(Error::InvalidArgument(format!(
                "{} jump operators but {} rates",
                jumps.len(),
                rates.len()
            )));
        }
        for l in &jumps {
            if l.rows() != d || l.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: l.rows() });
            }
        }
        if let Some(&r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative rate {r}")));
        }
        Ok(LindbladGenerator { h, jumps, rates })
    }

    pub fn hamiltonian(h: CMatrix) -> Result<Self> {
        Self::new(h, vec![], vec![])
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Superoperator in the row-major vectorization, `vec(AXB) = (A ⊗ Bᵀ) vec(X)`.
    pub fn superoperator(&self) -> CMatrix {
        let d = self.dim();
        let id = CMatrix::identity(d);
        let comm = &kron(&self.h, &id) - &kron(&id, &self.h.transpose());
        let mut gen = comm.scale_c(-I);
        for (l, &g) in self.jumps.iter().zip(&self.rates) {
            let ldl = &l.adjoint() * l;
            let jump = kron(l, &l.conj());
            let anti = &kron(&ldl, &id) + &kron(&id, &ldl.transpose());
            gen = &gen + &(&jump - &anti.scale(0.5)).scale(g);
        }
        gen
    }
}

/// Exact channel `exp(τ L)`.
pub fn lindblad_segment(g: &LindbladGenerator, tau: f64) -> Result<Channel> {
    if !(tau >= 0.0) {
        return Err(Error::NegativeDuration(tau));
    }
    let d = g.dim();
    if tau == 0.0 {
        return Ok(Channel::identity(d));
    }
    let s = expm(&g.superoperator().scale(tau));
    Channel::from_transfer(d, d, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z, propagator, C64};
    use crate::process::QState;
    use crate::random::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_duration_is_identity() {
        let g = LindbladGenerator::new(pauli_x(), vec![pauli_z()], vec![0.7]).unwrap();
        let c = lindblad_segment(&g, 0.0).unwrap();
        assert!(c.choi().max_abs_diff(Channel::identity(2).choi()) < 1e-15);
        assert!(matches!(lindblad_segment(&g, -1.0), Err(Error::NegativeDuration(_))));
    }

    #[test]
    fn hamiltonian_limit_is_unitary_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = random_hermitian(&mut rng, 4);
        let g = LindbladGenerator::hamiltonian(h.clone()).unwrap();
        let c = lindblad_segment(&g, 0.8).unwrap();
        let u = Channel::from_unitary(&propagator(&h, 0.8).unwrap()).unwrap();
        assert!(c.choi().max_abs_diff(u.choi()) < 1e-9);
    }

    #[test]
    fn dephasing_matches_scalar_ode() {
        let gamma = 0.3;
        let tau = 1.7;
        let g = LindbladGenerator::new(CMatrix::zeros(2, 2), vec![pauli_z()], vec![gamma]).unwrap();
        let c = lindblad_segment(&g, tau).unwrap();
        let plus = QState::pure(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let out = c.apply(&plus).unwrap();
        // RK4 on the coherence equation dρ01/dt = γ(σzρσz − ρ)01
        let f = |x: f64| gamma * (-x - x);
        let (mut x, n) = (0.5f64, 20000);
        let h = tau / n as f64;
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((out.matrix()[(0, 1)].re - x).abs() < 1e-12);
        assert!((x - 0.5 * (-2.0 * gamma * tau).exp()).abs() < 1e-12);
        assert!((out.matrix()[(0, 0)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_generators() {
        assert!(LindbladGenerator::new(pauli_x(), vec![pauli_z()], vec![-0.1]).is_err());
        assert!(LindbladGenerator::new(pauli_x(), vec![CMatrix::identity(3)], vec![0.1]).is_err());
        assert!(LindbladGenerator::new(pauli_x(), vec![pauli_z()], vec![]).is_err());
    }
}
