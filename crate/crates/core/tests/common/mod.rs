#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use multitime::linalg::{op_norm, CMatrix};
use multitime::process::{build_dynamics, Channel, QState, SEDynamics};
use multitime::random::{random_choi, random_density, random_hermitian, random_unitary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random coupling of unit norm on a qubit and a `d_env` environment, mixed
/// initial environment, segment duration uniform in `[0.2, 1.5]`.
pub fn random_dynamics(rng: &mut ChaCha8Rng, d_env: usize, n_segments: usize) -> SEDynamics {
    let h = random_hermitian(rng, 2 * d_env);
    let h = h.scale(1.0 / op_norm(&h));
    let env = QState::new(random_density(rng, d_env)).unwrap();
    let dt = rng.random_range(0.2..1.5);
    build_dynamics(&h, env, n_segments, dt).unwrap()
}

pub fn random_channel(rng: &mut ChaCha8Rng, d: usize) -> Channel {
    let rank = rng.random_range(1..=d * d);
    Channel::from_choi(d, d, random_choi(rng, d, d, rank)).unwrap()
}

pub fn random_unitary_channel(rng: &mut ChaCha8Rng, d: usize) -> Channel {
    Channel::from_unitary(&random_unitary(rng, d)).unwrap()
}

/// `k` distinct slots from `1..=n`, ascending.
pub fn random_slots(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (1..=n).collect();
    for i in 0..all.len() {
        let j = rng.random_range(i..all.len());
        all.swap(i, j);
    }
    let mut s = all[..k].to_vec();
    s.sort_unstable();
    s
}

pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.max_abs_diff(b)
}
