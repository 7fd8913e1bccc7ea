use crate::error::{Error, Result};
use crate::linalg::{
    herm_eigvals, kron, partial_trace, permute_subsystems, CMatrix, SubsystemShape, C64, ZERO,
};
use crate::process::Channel;

/// Input-leg marginal tolerance.
pub const MARGINAL_TOL: f64 = 1e-9;
/// Causality tolerance.
pub const CAUSALITY_TOL: f64 = 1e-8;

/// One chronological chain of legs `(i0, o1, i1, ..., o_{k+1})` of dimension
/// `d`, with `k = times.len()` open slots. Parallel composition keeps lines
/// side by side; a single-line tensor is an ordinary multitime process.
#[derive(Clone, Debug, PartialEq)]
pub struct Line {
    pub d: usize,
    pub times: Vec<f64>,
    /// Duration covered by the line; used to shift times under sequential composition.
    pub span: f64,
}

impl Line {
    pub fn n_slots(&self) -> usize {
        self.times.len()
    }

    pub fn n_legs(&self) -> usize {
        2 * (self.times.len() + 1)
    }
}

/// Unit-trace Choi state of a multitime process.
///
/// Slots are numbered from 1 across all lines in order; slot `j` local to a
/// line sits on legs `(o_j, i_j)` of that line.
#[derive(Clone, Debug)]
pub struct ProcessTensor {
    choi: CMatrix,
    lines: Vec<Line>,
}

impl ProcessTensor {
    pub fn new(choi: CMatrix, lines: Vec<Line>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::InvalidArgument("process tensor needs at least one line".into()));
        }
        let total: usize = lines.iter().map(|l| l.d.pow(l.n_legs() as u32)).product();
        if !choi.is_square() || choi.dim() != total {
            return Err(Error::DimensionMismatch { expected: total, found: choi.rows() });
        }
        for l in &lines {
            if l.times.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidArgument(format!("slot times not ordered: {:?}", l.times)));
            }
        }
        let choi = choi.hermitized()?;
        let tr = choi.trace().re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::BadTrace(tr));
        }
        Ok(ProcessTensor { choi, lines })
    }

    /// Identity-channel process on one line with no slots.
    pub fn from_channel(c: &Channel, span: f64) -> Result<Self> {
        if c.d_in() != c.d_out() {
            return Err(Error::DimensionMismatch { expected: c.d_in(), found: c.d_out() });
        }
        Self::new(c.choi().clone(), vec![Line { d: c.d_in(), times: vec![], span }])
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// System dimension of the first line.
    pub fn d_sys(&self) -> usize {
        self.lines[0].d
    }

    pub fn n_slots(&self) -> usize {
        self.lines.iter().map(Line::n_slots).sum()
    }

    pub fn times(&self) -> Vec<f64> {
        self.lines.iter().flat_map(|l| l.times.iter().copied()).collect()
    }

    pub fn n_legs(&self) -> usize {
        self.lines.iter().map(Line::n_legs).sum()
    }

    pub fn leg_dims(&self) -> Vec<usize> {
        self.lines.iter().flat_map(|l| std::iter::repeat_n(l.d, l.n_legs())).collect()
    }

    pub fn shape(&self) -> SubsystemShape {
        SubsystemShape::new(self.leg_dims()).expect("nonzero leg dimensions")
    }

    fn line_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.lines.len());
        let mut acc = 0;
        for l in &self.lines {
            off.push(acc);
            acc += l.n_legs();
        }
        off
    }

    /// Line index and line-local slot number of a global slot.
    fn locate_slot(&self, slot: usize) -> Result<(usize, usize)> {
        let mut s = slot;
        if s == 0 {
            return Err(Error::SlotOutOfRange { slot, max: self.n_slots() });
        }
        for (k, l) in self.lines.iter().enumerate() {
            if s <= l.n_slots() {
                return Ok((k, s));
            }
            s -= l.n_slots();
        }
        Err(Error::SlotOutOfRange { slot, max: self.n_slots() })
    }

    /// Global leg indices `(o_j, i_j)` of a slot.
    pub fn slot_legs(&self, slot: usize) -> Result<(usize, usize)> {
        let (line, j) = self.locate_slot(slot)?;
        let off = self.line_offsets()[line];
        Ok((off + 2 * j - 1, off + 2 * j))
    }

    /// Leg pairs `(i_{j−1}, o_j)` of every constituent channel, in order.
    pub fn channel_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (l, off) in self.lines.iter().zip(self.line_offsets()) {
            for j in 0..=l.n_slots() {
                out.push((off + 2 * j, off + 2 * j + 1));
            }
        }
        out
    }

    /// Global indices of the input legs `i_j`.
    pub fn input_legs(&self) -> Vec<usize> {
        (0..self.n_legs()).step_by(2).collect()
    }

    /// Marginal on a set of legs, kept in ascending order.
    pub fn leg_marginal(&self, legs: &[usize]) -> Result<CMatrix> {
        partial_trace(&self.choi, &self.shape(), legs)
    }

    /// Checks positivity, input-leg marginals and causality of every line.
    pub fn check_invariants(&self) -> Result<()> {
        let min = herm_eigvals(&self.choi)?.last().copied().unwrap_or(0.0);
        if min < -1e-10 {
            return Err(Error::NotPsd(min));
        }
        let dims = self.leg_dims();
        for leg in self.input_legs() {
            let m = self.leg_marginal(&[leg])?;
            let err = m.max_abs_diff(&CMatrix::identity(dims[leg]).scale(1.0 / dims[leg] as f64));
            if err > MARGINAL_TOL {
                return Err(Error::NotTracePreserving(err));
            }
        }
        let shape = self.shape();
        for (l, off) in self.lines.iter().zip(self.line_offsets()) {
            let last_out = off + l.n_legs() - 1;
            let last_in = last_out - 1;
            let keep: Vec<usize> = (0..dims.len()).filter(|&k| k != last_out).collect();
            let reduced = partial_trace(&self.choi, &shape, &keep)?;
            let rdims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
            let rshape = SubsystemShape::new(rdims.clone())?;
            let pos = last_in;
            let keep2: Vec<usize> = (0..rdims.len()).filter(|&k| k != pos).collect();
            let earlier = partial_trace(&reduced, &rshape, &keep2)?;
            let mixed = CMatrix::identity(l.d).scale(1.0 / l.d as f64);
            let joined = kron(&earlier, &mixed);
            // move the appended factor back to position `pos`
            let n = rdims.len();
            let mut perm: Vec<usize> = (0..n - 1).collect();
            perm.insert(pos, n - 1);
            let mut jdims: Vec<usize> = keep2.iter().map(|&k| rdims[k]).collect();
            jdims.push(l.d);
            let expected = permute_subsystems(&joined, &SubsystemShape::new(jdims)?, &perm)?;
            let err = reduced.max_abs_diff(&expected);
            if err > CAUSALITY_TOL {
                return Err(Error::NotTracePreserving(err));
            }
        }
        Ok(())
    }

    /// Closes the listed slots with the given channels:
    /// `d^{2|S|} Tr_S[T (I ⊗ A_Sᵀ)]`, where `A_S` is the product of the slot
    /// Choi states placed on legs `(o_j, i_j)`.
    pub fn contract<'a>(&self, controls: impl IntoIterator<Item = (usize, &'a Channel)>) -> Result<ProcessTensor> {
        let mut items: Vec<(usize, &Channel)> = controls.into_iter().collect();
        items.sort_by_key(|(s, _)| *s);
        for w in items.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::UnorderedSlots(items.iter().map(|(s, _)| *s).collect()));
            }
        }
        if items.is_empty() {
            return Ok(self.clone());
        }
        let dims = self.leg_dims();
        let mut closed_legs = Vec::new();
        let mut factor = 1.0;
        let mut a = CMatrix::identity(1);
        for &(slot, c) in &items {
            let (o, i) = self.slot_legs(slot)?;
            let d = dims[o];
            if c.d_in() != d || c.d_out() != d {
                return Err(Error::DimensionMismatch { expected: d, found: c.d_in() });
            }
            closed_legs.push(o);
            closed_legs.push(i);
            factor *= (d * d) as f64;
            a = kron(&a, c.choi());
        }
        let rest: Vec<usize> = (0..dims.len()).filter(|k| !closed_legs.contains(k)).collect();
        let mut perm = rest.clone();
        perm.extend(&closed_legs);
        let p = permute_subsystems(&self.choi, &self.shape(), &perm)?;
        let x = a.dim();
        let r = p.dim() / x;
        let pi = p.inner();
        let ai = a.inner();
        let out = CMatrix::from_fn(r, r, |row, col| {
            let mut acc = ZERO;
            for u in 0..x {
                for v in 0..x {
                    let av = ai[(u, v)];
                    if av != ZERO {
                        acc += pi[(row * x + u, col * x + v)] * av;
                    }
                }
            }
            acc * C64::new(factor, 0.0)
        });
        // drop the closed slots from the line bookkeeping
        let mut lines = self.lines.clone();
        let mut located: Vec<(usize, usize)> =
            items.iter().map(|(s, _)| self.locate_slot(*s)).collect::<Result<_>>()?;
        located.sort_unstable_by(|a, b| b.cmp(a));
        for (line, j) in located {
            lines[line].times.remove(j - 1);
        }
        ProcessTensor::new(out, lines)
    }

    /// Closes the listed slots with identity channels.
    pub fn contract_identity(&self, slots: &[usize]) -> Result<ProcessTensor> {
        let chans: Vec<(usize, Channel)> = slots
            .iter()
            .map(|&s| Ok((s, Channel::identity(self.leg_dims()[self.slot_legs(s)?.0]))))
            .collect::<Result<_>>()?;
        self.contract(chans.iter().map(|(s, c)| (*s, c)))
    }

    /// Independent processes side by side.
    pub fn parallel_compose(a: &ProcessTensor, b: &ProcessTensor) -> ProcessTensor {
        let mut lines = a.lines.clone();
        lines.extend(b.lines.iter().cloned());
        ProcessTensor { choi: kron(&a.choi, &b.choi), lines }
    }

    /// `later` run after `earlier`. The final output of earlier's last line and
    /// the initial input of later's first line become a new open slot.
    pub fn sequential_compose(later: &ProcessTensor, earlier: &ProcessTensor) -> Result<ProcessTensor> {
        let e_last = earlier.lines.last().expect("nonempty lines");
        let l_first = &later.lines[0];
        if e_last.d != l_first.d {
            return Err(Error::DimensionMismatch { expected: e_last.d, found: l_first.d });
        }
        let mut lines = earlier.lines[..earlier.lines.len() - 1].to_vec();
        let mut times = e_last.times.clone();
        times.push(e_last.span);
        times.extend(l_first.times.iter().map(|t| t + e_last.span));
        lines.push(Line { d: e_last.d, times, span: e_last.span + l_first.span });
        lines.extend(later.lines[1..].iter().cloned());
        Ok(ProcessTensor { choi: kron(&earlier.choi, &later.choi), lines })
    }

    /// The channel from all initial inputs to all final outputs of a
    /// process without slots.
    pub fn as_channel(&self) -> Result<Channel> {
        if self.n_slots() != 0 {
            return Err(Error::InvalidArgument(format!(
                "process has {} open slots",
                self.n_slots()
            )));
        }
        let d: usize = self.lines.iter().map(|l| l.d).product();
        if self.lines.len() == 1 {
            return Channel::from_choi(d, d, self.choi.clone());
        }
        let n = self.n_legs();
        let mut perm: Vec<usize> = (0..n).step_by(2).collect();
        perm.extend((1..n).step_by(2));
        let c = permute_subsystems(&self.choi, &self.shape(), &perm)?;
        Channel::from_choi(d, d, c)
    }
}
