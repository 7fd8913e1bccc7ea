//! Binary files for dynamics and process tensors.
//!
//! Every integer is a little-endian `u64`, every real a little-endian `f64`,
//! and every complex matrix is written row by row as `(re, im)` pairs.
//!
//! Dynamics (`MTSEDYN1`): `d_sys`, `d_env`, `n_segments`, the segment durations,
//! the environment state (`d_env²` entries), each segment Choi state, the
//! number of absorbed controls followed by `(slot, choi)` records, and a
//! terminal flag (`0` or `1`) followed by its Choi state if set.
//!
//! Process tensor (`MTPROC01`): the number of lines, then per line `d`,
//! `n_slots`, `span` and the slot times, then the Choi state.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64};
use crate::process::{Channel, Line, ProcessTensor, QState, SEDynamics};

const DYN_MAGIC: &[u8; 8] = b"MTSEDYN1";
const PT_MAGIC: &[u8; 8] = b"MTPROC01";
/// Refuse headers that would allocate absurd matrices.
const MAX_DIM: u64 = 1 << 16;

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_matrix(w: &mut impl Write, m: &CMatrix) -> Result<()> {
    for z in m.row_major() {
        put_f64(w, z.re)?;
        put_f64(w, z.im)?;
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_dim(r: &mut impl Read) -> Result<usize> {
    let v = get_u64(r)?;
    if v == 0 || v > MAX_DIM {
        return Err(Error::Format(format!("dimension {v} out of range")));
    }
    Ok(v as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_matrix(r: &mut impl Read, n: usize) -> Result<CMatrix> {
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re = get_f64(r)?;
        let im = get_f64(r)?;
        entries.push(C64::new(re, im));
    }
    CMatrix::from_row_major(n, n, &entries)
}

fn check_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&b),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

pub fn write_dynamics(w: &mut impl Write, dynm: &SEDynamics) -> Result<()> {
    w.write_all(DYN_MAGIC)?;
    put_u64(w, dynm.d_sys() as u64)?;
    put_u64(w, dynm.d_env() as u64)?;
    put_u64(w, dynm.n_segments() as u64)?;
    for &t in dynm.durations() {
        put_f64(w, t)?;
    }
    put_matrix(w, dynm.rho_env0().matrix())?;
    for s in dynm.segments() {
        put_matrix(w, s.choi())?;
    }
    put_u64(w, dynm.inserted_controls().len() as u64)?;
    for (&slot, c) in dynm.inserted_controls() {
        put_u64(w, slot as u64)?;
        put_matrix(w, c.choi())?;
    }
    match dynm.terminal() {
        Some(t) => {
            put_u64(w, 1)?;
            put_matrix(w, t.choi())?;
        }
        None => put_u64(w, 0)?,
    }
    Ok(())
}

pub fn read_dynamics(r: &mut impl Read) -> Result<SEDynamics> {
    check_magic(r, DYN_MAGIC)?;
    let d_sys = get_dim(r)?;
    let d_env = get_dim(r)?;
    let n = get_dim(r)?;
    let durations = (0..n).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
    let env = QState::new(get_matrix(r, d_env)?)?;
    let d = d_sys * d_env;
    let segments = (0..n)
        .map(|_| Channel::from_choi(d, d, get_matrix(r, d * d)?))
        .collect::<Result<Vec<_>>>()?;
    let mut dynm = SEDynamics::new(d_sys, d_env, env, segments, durations)?;
    let n_controls = get_u64(r)?;
    if n_controls > n as u64 {
        return Err(Error::Format(format!("{n_controls} controls for {n} segments")));
    }
    let mut controls = Vec::new();
    for _ in 0..n_controls {
        let slot = get_u64(r)? as usize;
        controls.push((slot, Channel::from_choi(d_sys, d_sys, get_matrix(r, d_sys * d_sys)?)?));
    }
    dynm = dynm.insert_controls(controls.iter().map(|(s, c)| (*s, c)))?;
    match get_u64(r)? {
        0 => {}
        1 => {
            let t = Channel::from_choi(d_sys, d_sys, get_matrix(r, d_sys * d_sys)?)?;
            dynm = dynm.with_terminal(&t)?;
        }
        f => return Err(Error::Format(format!("bad terminal flag {f}"))),
    }
    Ok(dynm)
}

pub fn write_process(w: &mut impl Write, t: &ProcessTensor) -> Result<()> {
    w.write_all(PT_MAGIC)?;
    put_u64(w, t.lines().len() as u64)?;
    for l in t.lines() {
        put_u64(w, l.d as u64)?;
        put_u64(w, l.n_slots() as u64)?;
        put_f64(w, l.span)?;
        for &x in &l.times {
            put_f64(w, x)?;
        }
    }
    put_matrix(w, t.choi())
}

pub fn read_process(r: &mut impl Read) -> Result<ProcessTensor> {
    check_magic(r, PT_MAGIC)?;
    let n_lines = get_dim(r)?;
    let mut lines = Vec::with_capacity(n_lines);
    let mut total: u64 = 1;
    for _ in 0..n_lines {
        let d = get_dim(r)?;
        let k = get_u64(r)?;
        if k > 64 {
            return Err(Error::Format(format!("{k} slots on one line")));
        }
        let span = get_f64(r)?;
        let times = (0..k).map(|_| get_f64(r)).collect::<Result<Vec<_>>>()?;
        total = total.saturating_mul((d as u64).saturating_pow(2 * (k as u32 + 1)));
        lines.push(Line { d, times, span });
    }
    if total > MAX_DIM {
        return Err(Error::Format(format!("process dimension {total} too large")));
    }
    let choi = get_matrix(r, total as usize)?;
    ProcessTensor::new(choi, lines)
}

pub fn save_dynamics(path: &std::path::Path, dynm: &SEDynamics) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_dynamics(&mut f, dynm)?;
    f.flush()?;
    Ok(())
}

pub fn load_dynamics(path: &std::path::Path) -> Result<SEDynamics> {
    read_dynamics(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_process(path: &std::path::Path, t: &ProcessTensor) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_process(&mut f, t)?;
    f.flush()?;
    Ok(())
}

pub fn load_process(path: &std::path::Path) -> Result<ProcessTensor> {
    read_process(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
