use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{kron, maximally_entangled, propagator, CMatrix};
use crate::process::channel::LinearMap;
use crate::process::sim::MultiState;
use crate::process::tensor::{Line, ProcessTensor};
use crate::process::{Channel, QState};

/// Largest Choi dimension [`SEDynamics::choi_of_process`] will materialize.
pub const MAX_CHOI_DIM: usize = 1 << 16;

/// Fine-grained system–environment dynamics kept in implicit form: an initial
/// environment state, a list of joint segment channels, and any system
/// controls already absorbed at the slots between segments.
///
/// Slot `j` (for `1 <= j < n_segments`) sits between segment `j` and
/// segment `j + 1`.
#[derive(Clone, Debug)]
pub struct SEDynamics {
    d_sys: usize,
    d_env: usize,
    rho_env0: QState,
    segments: Vec<Channel>,
    durations: Vec<f64>,
    controls: BTreeMap<usize, Channel>,
    terminal: Option<Channel>,
}

impl SEDynamics {
    pub fn new(
        d_sys: usize,
        d_env: usize,
        rho_env0: QState,
        segments: Vec<Channel>,
        durations: Vec<f64>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("dynamics needs at least one segment".into()));
        }
        if durations.len() != segments.len() {
            return Err(Error::InvalidArgument(format!(
                "{} durations for {} segments",
                durations.len(),
                segments.len()
            )));
        }
        if let Some(&t) = durations.iter().find(|t| !(**t >= 0.0)) {
            return Err(Error::NegativeDuration(t));
        }
        if rho_env0.dim() != d_env {
            return Err(Error::DimensionMismatch { expected: d_env, found: rho_env0.dim() });
        }
        let d = d_sys * d_env;
        for s in &segments {
            if s.d_in() != d || s.d_out() != d {
                return Err(Error::DimensionMismatch { expected: d, found: s.d_in() });
            }
        }
        Ok(SEDynamics {
            d_sys,
            d_env,
            rho_env0,
            segments,
            durations,
            controls: BTreeMap::new(),
            terminal: None,
        })
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }

    pub fn d_env(&self) -> usize {
        self.d_env
    }

    pub fn rho_env0(&self) -> &QState {
        &self.rho_env0
    }

    pub fn segments(&self) -> &[Channel] {
        &self.segments
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn n_slots(&self) -> usize {
        self.segments.len() - 1
    }

    pub fn inserted_controls(&self) -> &BTreeMap<usize, Channel> {
        &self.controls
    }

    pub fn terminal(&self) -> Option<&Channel> {
        self.terminal.as_ref()
    }

    /// End time of segment `j` (1-based), i.e. the time of slot `j`.
    pub fn slot_time(&self, j: usize) -> f64 {
        self.durations[..j].iter().sum()
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    fn check_slot(&self, slot: usize) -> Result<()> {
        if slot == 0 || slot > self.n_slots() {
            return Err(Error::SlotOutOfRange { slot, max: self.n_slots() });
        }
        Ok(())
    }

    fn check_system_channel(&self, c: &Channel) -> Result<()> {
        if c.d_in() != self.d_sys || c.d_out() != self.d_sys {
            return Err(Error::DimensionMismatch { expected: self.d_sys, found: c.d_in() });
        }
        Ok(())
    }

    /// Absorbs system controls at the given slots. A control landing on a slot
    /// that already holds one is applied after it.
    pub fn insert_controls<'a>(
        &self,
        assignment: impl IntoIterator<Item = (usize, &'a Channel)>,
    ) -> Result<Self> {
        let mut out = self.clone();
        for (slot, c) in assignment {
            self.check_slot(slot)?;
            self.check_system_channel(c)?;
            let merged = match out.controls.get(&slot) {
                Some(old) => Channel::compose(c, old)?,
                None => c.clone(),
            };
            out.controls.insert(slot, merged);
        }
        Ok(out)
    }

    /// Absorbs a system channel applied after the final segment.
    pub fn with_terminal(&self, c: &Channel) -> Result<Self> {
        self.check_system_channel(c)?;
        let mut out = self.clone();
        out.terminal = Some(match &self.terminal {
            Some(old) => Channel::compose(c, old)?,
            None => c.clone(),
        });
        Ok(out)
    }

    /// Validates an ordered open-slot list against the dynamics and the size guard.
    fn check_open_slots(&self, open: &[usize]) -> Result<()> {
        for w in open.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::UnorderedSlots(open.to_vec()));
            }
        }
        for &s in open {
            self.check_slot(s)?;
        }
        let legs = 2 * (open.len() + 1);
        let dim = (self.d_sys as u128).pow(legs as u32);
        if dim > MAX_CHOI_DIM as u128 {
            return Err(Error::TooManyOpenSlots(dim.min(usize::MAX as u128) as usize));
        }
        Ok(())
    }

    /// Runs the dynamics with maximally entangled probes at the initial input
    /// and every open slot. `probe` applies an extra map at one slot, after any
    /// absorbed control there (used to linearize the optimizer objective).
    pub(crate) fn simulate(&self, open: &[usize], probe: Option<(usize, &LinearMap)>) -> CMatrix {
        let d = self.d_sys;
        let n = self.n_segments();
        let mut st = MultiState::new(
            kron(&maximally_entangled(d), self.rho_env0.matrix()),
            vec![d, d, self.d_env],
        );
        let mut open_iter = open.iter().peekable();
        for j in 1..=n {
            let k = st.dims.len() - 2;
            st.apply(k, 2, self.segments[j - 1].map());
            if j < n {
                if let Some(c) = self.controls.get(&j) {
                    st.apply(k, 1, c.map());
                }
                if let Some((ps, map)) = probe {
                    if ps == j {
                        st.apply(k, 1, map);
                    }
                }
                if open_iter.peek() == Some(&&j) {
                    open_iter.next();
                    st.open_slot(d);
                }
            } else if let Some(t) = &self.terminal {
                st.apply(k, 1, t.map());
            }
        }
        st.trace_last();
        st.rho
    }

    /// Choi state of the process with the listed slots left open; every other
    /// slot carries its absorbed control (identity if none). Legs are ordered
    /// chronologically `(i0, o1, i1, ..., o_{m+1})`.
    pub fn choi_of_process(&self, open_slots: &[usize]) -> Result<ProcessTensor> {
        self.check_open_slots(open_slots)?;
        let choi = self.simulate(open_slots, None);
        let times = open_slots.iter().map(|&s| self.slot_time(s)).collect();
        let line = Line { d: self.d_sys, times, span: self.total_time() };
        ProcessTensor::new(choi, vec![line])
    }

    /// Temporal coarse-graining: identities at every slot not in `keep`.
    pub fn coarse_grain(&self, keep: &[usize]) -> Result<ProcessTensor> {
        self.choi_of_process(keep)
    }

    /// The channel obtained by closing every slot.
    pub fn resulting_channel(&self) -> Result<Channel> {
        let choi = self.simulate(&[], None);
        Channel::from_choi(self.d_sys, self.d_sys, choi)
    }

    /// Evolves `sys_input ⊗ rho_env0` through all segments and controls and
    /// returns the reduced environment state.
    pub fn evolve_env(&self, sys_input: &QState) -> Result<QState> {
        if sys_input.dim() != self.d_sys {
            return Err(Error::DimensionMismatch { expected: self.d_sys, found: sys_input.dim() });
        }
        let n = self.n_segments();
        let mut st = MultiState::new(kron(sys_input.matrix(), self.rho_env0.matrix()), vec![self.d_sys, self.d_env]);
        for j in 1..=n {
            st.apply(0, 2, self.segments[j - 1].map());
            if j < n {
                if let Some(c) = self.controls.get(&j) {
                    st.apply(0, 1, c.map());
                }
            } else if let Some(t) = &self.terminal {
                st.apply(0, 1, t.map());
            }
        }
        st.trace_second_last();
        QState::new(st.rho)
    }

    /// Segments `start..end` (0-based, half open) with their interior controls,
    /// started from `rho_env0`. Controls on the block boundaries are dropped.
    pub fn block(&self, start: usize, end: usize, rho_env0: QState) -> Result<Self> {
        if start >= end || end > self.n_segments() {
            return Err(Error::InvalidArgument(format!(
                "block {start}..{end} outside 0..{}",
                self.n_segments()
            )));
        }
        let mut out = SEDynamics::new(
            self.d_sys,
            self.d_env,
            rho_env0,
            self.segments[start..end].to_vec(),
            self.durations[start..end].to_vec(),
        )?;
        for (&slot, c) in self.controls.range(start + 1..end) {
            out.controls.insert(slot - start, c.clone());
        }
        Ok(out)
    }

    /// The joint system–environment channel of the whole dynamics with every
    /// absorbed control in place (terminal excluded).
    pub fn collapse(&self) -> Result<Channel> {
        let id_env = Channel::identity(self.d_env);
        let mut acc = self.segments[0].clone();
        for j in 1..self.n_segments() {
            if let Some(c) = self.controls.get(&j) {
                acc = Channel::compose(&Channel::tensor(c, &id_env), &acc)?;
            }
            acc = Channel::compose(&self.segments[j], &acc)?;
        }
        Ok(acc)
    }

    /// Same dynamics with all absorbed controls and the terminal removed.
    pub fn without_controls(&self) -> Self {
        let mut out = self.clone();
        out.controls.clear();
        out.terminal = None;
        out
    }
}

/// `n_segments` identical unitary segments `exp(−i h dt)`; the system
/// dimension is `dim(h) / dim(rho_env0)`.
pub fn build_dynamics(h_se: &CMatrix, rho_env0: QState, n_segments: usize, dt: f64) -> Result<SEDynamics> {
    let d_env = rho_env0.dim();
    let d = h_se.dim();
    if d_env == 0 || d % d_env != 0 || !h_se.is_square() {
        return Err(Error::DimensionMismatch { expected: d_env, found: d });
    }
    if n_segments == 0 {
        return Err(Error::InvalidArgument("n_segments must be at least 1".into()));
    }
    if !(dt >= 0.0) {
        return Err(Error::NegativeDuration(dt));
    }
    let u = propagator(h_se, dt)?;
    let seg = Channel::from_unitary(&u)?;
    SEDynamics::new(d / d_env, d_env, rho_env0, vec![seg; n_segments], vec![dt; n_segments])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{partial_trace, SubsystemShape};
    use crate::random::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dynamics(seed: u64, d_env: usize, n: usize) -> SEDynamics {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(&mut rng, 2 * d_env);
        let env = QState::new(random_density(&mut rng, d_env)).unwrap();
        build_dynamics(&h, env, n, 0.7).unwrap()
    }

    #[test]
    fn zero_hamiltonian_gives_identity_segments() {
        let dynm = build_dynamics(&CMatrix::zeros(4, 4), QState::maximally_mixed(2), 16, 0.3).unwrap();
        assert_eq!(dynm.n_segments(), 16);
        assert_eq!(dynm.n_slots(), 15);
        for s in dynm.segments() {
            assert!(s.choi().max_abs_diff(Channel::identity(4).choi()) < 1e-15);
        }
    }

    #[test]
    fn segment_is_unitary_channel_of_propagator() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let h = random_hermitian(&mut rng, 4);
        let dynm = build_dynamics(&h, QState::basis(2, 0), 3, 0.25).unwrap();
        let expected = Channel::from_unitary(&propagator(&h, 0.25).unwrap()).unwrap();
        assert!(dynm.segments()[1].choi().max_abs_diff(expected.choi()) < 1e-15);
    }

    #[test]
    fn build_rejects_dimension_mismatch() {
        assert!(build_dynamics(&CMatrix::zeros(5, 5), QState::maximally_mixed(2), 2, 0.1).is_err());
    }

    #[test]
    fn trivial_dynamics_single_and_two_slot() {
        let dynm = build_dynamics(&CMatrix::zeros(2, 2), QState::maximally_mixed(1), 2, 1.0).unwrap();
        let t0 = dynm.choi_of_process(&[]).unwrap();
        assert!(t0.choi().max_abs_diff(&maximally_entangled(2)) < 1e-15);
        let t1 = dynm.choi_of_process(&[1]).unwrap();
        let psi = maximally_entangled(2);
        assert!(t1.choi().max_abs_diff(&kron(&psi, &psi)) < 1e-15);
    }

    #[test]
    fn input_leg_marginal_is_maximally_mixed() {
        let dynm = random_dynamics(42, 2, 2);
        let t = dynm.choi_of_process(&[1]).unwrap();
        let shape = SubsystemShape::uniform(2, 4).unwrap();
        let m = partial_trace(t.choi(), &shape, &[2]).unwrap();
        assert!(m.max_abs_diff(&CMatrix::identity(2).scale(0.5)) < 1e-12);
        t.check_invariants().unwrap();
    }

    #[test]
    fn empty_and_identity_insertions_do_not_change_the_process() {
        let dynm = random_dynamics(43, 2, 4);
        let same = dynm.insert_controls(std::iter::empty()).unwrap();
        let id = Channel::identity(2);
        let with_id = dynm.insert_controls((1..4).map(|s| (s, &id))).unwrap();
        let a = dynm.choi_of_process(&[2]).unwrap();
        assert!(same.choi_of_process(&[2]).unwrap().choi().max_abs_diff(a.choi()) < 1e-15);
        assert!(with_id.choi_of_process(&[2]).unwrap().choi().max_abs_diff(a.choi()) < 1e-13);
    }

    #[test]
    fn insert_controls_errors_and_ordering() {
        let dynm = random_dynamics(44, 2, 3);
        let x = Channel::from_unitary(&crate::linalg::pauli_x()).unwrap();
        let z = Channel::from_unitary(&crate::linalg::pauli_z()).unwrap();
        assert!(matches!(dynm.insert_controls([(3, &x)]), Err(Error::SlotOutOfRange { .. })));
        assert!(matches!(dynm.insert_controls([(0, &x)]), Err(Error::SlotOutOfRange { .. })));
        assert!(dynm.insert_controls([(1, &Channel::identity(4))]).is_err());
        // new after old
        let d2 = dynm.insert_controls([(1, &x)]).unwrap().insert_controls([(1, &z)]).unwrap();
        let zx = Channel::compose(&z, &x).unwrap();
        assert!(d2.inserted_controls()[&1].choi().max_abs_diff(zx.choi()) < 1e-14);
    }

    #[test]
    fn open_slot_guards() {
        let dynm = random_dynamics(45, 2, 12);
        assert!(matches!(
            dynm.choi_of_process(&[1, 2, 3, 4, 5, 6, 7, 8]),
            Err(Error::TooManyOpenSlots(_))
        ));
        assert!(matches!(dynm.choi_of_process(&[3, 2]), Err(Error::UnorderedSlots(_))));
        assert!(matches!(dynm.choi_of_process(&[12]), Err(Error::SlotOutOfRange { .. })));
    }

    #[test]
    fn no_environment_gives_product_of_segment_chois() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let segs: Vec<Channel> =
            (0..3).map(|_| Channel::from_unitary(&random_unitary(&mut rng, 2)).unwrap()).collect();
        let dynm = SEDynamics::new(2, 1, QState::maximally_mixed(1), segs.clone(), vec![1.0; 3]).unwrap();
        let t = dynm.choi_of_process(&[1, 2]).unwrap();
        let expected = kron(&kron(segs[0].choi(), segs[1].choi()), segs[2].choi());
        assert!(t.choi().max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn keep_none_equals_composition_of_all_segment_channels() {
        let dynm = random_dynamics(47, 1, 3);
        let ch = dynm.resulting_channel().unwrap();
        let composed = Channel::compose(
            &dynm.segments()[2],
            &Channel::compose(&dynm.segments()[1], &dynm.segments()[0]).unwrap(),
        )
        .unwrap();
        assert!(ch.choi().max_abs_diff(composed.choi()) < 1e-13);
    }

    #[test]
    fn collapse_and_env_evolution_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let dynm = random_dynamics(48, 2, 4);
        let u = Channel::from_unitary(&random_unitary(&mut rng, 2)).unwrap();
        let with = dynm.insert_controls([(2, &u)]).unwrap();
        let total = with.collapse().unwrap();
        let joint = kron(QState::maximally_mixed(2).matrix(), dynm.rho_env0().matrix());
        let out = total.apply_matrix(&joint);
        let env = partial_trace(&out, &SubsystemShape::uniform(2, 2).unwrap(), &[1]).unwrap();
        let sim = with.evolve_env(&QState::maximally_mixed(2)).unwrap();
        assert!(sim.matrix().max_abs_diff(&env) < 1e-13);
        // a single collapsed segment reproduces the channel of the full dynamics
        let single = SEDynamics::new(2, 2, dynm.rho_env0().clone(), vec![total], vec![4.0]).unwrap();
        let a = single.resulting_channel().unwrap();
        let b = with.resulting_channel().unwrap();
        assert!(a.choi().max_abs_diff(b.choi()) < 1e-13);
    }

    #[test]
    fn block_extracts_interior_controls() {
        let dynm = random_dynamics(49, 2, 8);
        let x = Channel::from_unitary(&crate::linalg::pauli_x()).unwrap();
        let with = dynm.insert_controls([(4, &x), (5, &x), (7, &x)]).unwrap();
        let b = with.block(4, 8, dynm.rho_env0().clone()).unwrap();
        assert_eq!(b.n_segments(), 4);
        assert_eq!(b.inserted_controls().keys().copied().collect::<Vec<_>>(), vec![1, 3]);
    }
}
