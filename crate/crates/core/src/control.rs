//! Pulse channels, (concatenated) dynamical decoupling sequences and
//! measure-and-reprepare controls.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{
    herm_eigvals, kron_all, pauli_x, pauli_y, pauli_z, unitarity_defect, CMatrix,
};
use crate::process::{Channel, QState, SEDynamics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMatrix {
        match self {
            Pauli::I => CMatrix::identity(2),
            Pauli::X => pauli_x(),
            Pauli::Y => pauli_y(),
            Pauli::Z => pauli_z(),
        }
    }

    pub fn channel(self) -> Channel {
        Channel::from_unitary(&self.matrix()).expect("Pauli matrices are unitary")
    }

    /// Parses a string such as `"XZ"` or `"I,I,X,X"`.
    pub fn parse_pattern(s: &str) -> Result<Vec<Pauli>> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| c.to_string().parse())
            .collect()
    }
}

impl FromStr for Pauli {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" => Ok(Pauli::I),
            "X" => Ok(Pauli::X),
            "Y" => Ok(Pauli::Y),
            "Z" => Ok(Pauli::Z),
            other => Err(Error::InvalidArgument(format!("unknown Pauli label {other:?}"))),
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        };
        f.write_str(c)
    }
}

/// A set of unitaries used for decoupling.
#[derive(Clone, Debug)]
pub struct PulseGroup {
    elements: Vec<CMatrix>,
}

impl PulseGroup {
    pub fn new(elements: Vec<CMatrix>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("empty pulse group".into()));
        }
        for u in &elements {
            let defect = unitarity_defect(u);
            if defect > 1e-10 {
                return Err(Error::NotUnitary(defect));
            }
        }
        Ok(PulseGroup { elements })
    }

    /// `{I, σx, σy, σz}`.
    pub fn qubit() -> Self {
        PulseGroup { elements: [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z].map(Pauli::matrix).to_vec() }
    }

    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    /// Group average `(1/|V|) Σ_v v X v†`.
    pub fn twirl(&self, x: &CMatrix) -> CMatrix {
        let mut acc = CMatrix::zeros(x.rows(), x.cols());
        for v in &self.elements {
            acc = &acc + &(&(v * x) * &v.adjoint());
        }
        acc.scale(1.0 / self.elements.len() as f64)
    }
}

impl Default for PulseGroup {
    fn default() -> Self {
        Self::qubit()
    }
}

/// One system channel per slot, plus an optional pulse after the final segment.
#[derive(Clone, Debug, Default)]
pub struct ControlSequence {
    pub slots: BTreeMap<usize, Channel>,
    pub terminal: Option<Channel>,
    pub label: String,
}

impl ControlSequence {
    pub fn new(label: impl Into<String>) -> Self {
        ControlSequence { slots: BTreeMap::new(), terminal: None, label: label.into() }
    }

    /// Identity channels at slots `1..=n_slots`.
    pub fn identity(n_slots: usize, d: usize, label: impl Into<String>) -> Self {
        let mut cs = Self::new(label);
        for s in 1..=n_slots {
            cs.slots.insert(s, Channel::identity(d));
        }
        cs
    }

    pub fn with(mut self, slot: usize, c: Channel) -> Self {
        self.slots.insert(slot, c);
        self
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<&Channel> {
        self.slots.get(&slot)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Channel)> {
        self.slots.iter().map(|(s, c)| (*s, c))
    }

    /// Absorbs the controls into `dynm`; the terminal pulse only if asked.
    pub fn apply_to(&self, dynm: &SEDynamics, include_terminal: bool) -> Result<SEDynamics> {
        let mut out = dynm.insert_controls(self.iter())?;
        if include_terminal {
            if let Some(t) = &self.terminal {
                out = out.with_terminal(t)?;
            }
        }
        Ok(out)
    }

    /// `later ∘ self` slot by slot; slots present in only one rank keep their channel.
    pub fn then(&self, later: &ControlSequence) -> Result<ControlSequence> {
        let mut out = self.clone();
        for (s, c) in later.iter() {
            let merged = match out.slots.get(&s) {
                Some(old) => Channel::compose(c, old)?,
                None => c.clone(),
            };
            out.slots.insert(s, merged);
        }
        out.terminal = match (&self.terminal, &later.terminal) {
            (Some(a), Some(b)) => Some(Channel::compose(b, a)?),
            (a, b) => a.clone().or_else(|| b.clone()),
        };
        Ok(out)
    }
}

fn pattern_at(pattern: &[Pauli], k: usize) -> Pauli {
    pattern[k % pattern.len()]
}

/// Cyclic pattern over slots `1..=n_slots`; the next pulse of the cycle is
/// stored as the terminal pulse when `include_terminal` is set.
pub fn dd_sequence(n_slots: usize, pattern: &[Pauli], include_terminal: bool) -> Result<ControlSequence> {
    if pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    if n_slots == 0 {
        return Err(Error::InvalidArgument("dd sequence needs at least one slot".into()));
    }
    let mut cs = ControlSequence::new("dd");
    for s in 1..=n_slots {
        cs.slots.insert(s, pattern_at(pattern, s - 1).channel());
    }
    if include_terminal {
        cs.terminal = Some(pattern_at(pattern, n_slots).channel());
    }
    Ok(cs)
}

/// Fine DD on every slot, with the coarse pattern composed after the fine
/// pulse at every multiple of `block`. Position `n_fine + 1` (after the last
/// segment) is always stored as the terminal pulse.
pub fn cdd_sequence(
    n_fine: usize,
    block: usize,
    fine_pattern: &[Pauli],
    coarse_pattern: &[Pauli],
) -> Result<ControlSequence> {
    if fine_pattern.is_empty() || coarse_pattern.is_empty() {
        return Err(Error::EmptyPattern);
    }
    if block == 0 || (n_fine + 1) % block != 0 {
        return Err(Error::NonDividingBlock { block, total: n_fine + 1 });
    }
    let mut cs = dd_sequence(n_fine, fine_pattern, true)?;
    cs.label = "cdd".into();
    let n_blocks = (n_fine + 1) / block;
    for k in 1..=n_blocks {
        let coarse = pattern_at(coarse_pattern, k - 1).channel();
        let pos = k * block;
        if pos <= n_fine {
            let fine = &cs.slots[&pos];
            let merged = Channel::compose(&coarse, fine)?;
            cs.slots.insert(pos, merged);
        } else {
            let fine = cs.terminal.as_ref().expect("terminal set above");
            cs.terminal = Some(Channel::compose(&coarse, fine)?);
        }
    }
    Ok(cs)
}

/// `ρ ↦ Σ_a tr(Π_a ρ) π_a`.
pub fn measure_reprepare(povm: &[CMatrix], preps: &[QState]) -> Result<Channel> {
    if povm.is_empty() {
        return Err(Error::InvalidPovm("no effects".into()));
    }
    if povm.len() != preps.len() {
        return Err(Error::InvalidPovm(format!("{} effects but {} states", povm.len(), preps.len())));
    }
    let d = povm[0].dim();
    let d_out = preps[0].dim();
    let mut sum = CMatrix::zeros(d, d);
    let mut choi = CMatrix::zeros(d * d_out, d * d_out);
    for (e, p) in povm.iter().zip(preps) {
        if e.dim() != d || !e.is_square() || p.dim() != d_out {
            return Err(Error::InvalidPovm("inconsistent dimensions".into()));
        }
        let e = e.hermitized().map_err(|_| Error::InvalidPovm("effect not Hermitian".into()))?;
        let min = herm_eigvals(&e)?.last().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::InvalidPovm(format!("effect has eigenvalue {min}")));
        }
        sum = &sum + &e;
        choi = &choi + &kron_all([&e.transpose(), p.matrix()]);
    }
    let err = sum.max_abs_diff(&CMatrix::identity(d));
    if err > 1e-10 {
        return Err(Error::InvalidPovm(format!("effects sum to identity only within {err}")));
    }
    Channel::from_choi(d, d_out, choi.scale(1.0 / d as f64))
}

/// Projective measurement in the computational basis, re-preparing the outcome.
pub fn computational_measure_reprepare(d: usize) -> Channel {
    let effects: Vec<CMatrix> = (0..d).map(|k| QState::basis(d, k).matrix().clone()).collect();
    let preps: Vec<QState> = (0..d).map(|k| QState::basis(d, k)).collect();
    measure_reprepare(&effects, &preps).expect("basis projectors form a POVM")
}
