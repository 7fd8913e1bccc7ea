//! The noise-reduction study: random system–environment models, a sweep over
//! segment durations, strategy comparison and CSV/JSON output.
//!
//! Seeds: `splitmix64` is the SplitMix64 finalizer. A model is seeded by
//! `splitmix64(splitmix64(master_seed) ^ sample_id)` and a task
//! `(sample, dt, strategy)` by folding `h ← splitmix64(h ^ x)` over
//! `sample_id, dt_index, strategy_index` starting from `splitmix64(master_seed)`.
//! Each seed drives a `ChaCha8Rng`.

mod config;
mod summary;

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{log_grid, DtGrid, ExperimentConfig, Strategy};
pub use summary::{find, mean_band, moving_average, summarize, SummaryRow, METRICS};

use crate::control::{cdd_sequence, dd_sequence, ControlSequence, Pauli};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, CMatrix, C64};
use crate::monotones::{channel_information, monotone_report};
use crate::optimizer::{default_inits, modd, odd_best, top_eigenpair, SeesawOptions};
use crate::process::{build_dynamics, QState, SEDynamics};
use crate::random::random_pure_vector;

pub const DD_PATTERN: [Pauli; 2] = [Pauli::X, Pauli::Z];

/// Raw CSV header, in column order.
pub const HEADER: [&str; 14] = [
    "sample_id",
    "dt",
    "strategy",
    "i_channel_bits",
    "i_coarse_bits",
    "m_coarse_bits",
    "n_coarse_bits",
    "delta_i_bits",
    "delta_m_bits",
    "delta_n_bits",
    "lambda_max",
    "seesaw_sweeps",
    "support_flag",
    "wall_ms",
];

const SUMMARY_HEADER: [&str; 8] = ["dt", "strategy", "metric", "count", "mean", "band", "smooth_mean", "smooth_band"];

pub fn splitmix64(z: u64) -> u64 {
    let z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn model_seed(master_seed: u64, sample_id: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ sample_id)
}

pub fn task_seed(master_seed: u64, sample_id: u64, dt_index: u64, strategy_index: u64) -> u64 {
    [sample_id, dt_index, strategy_index].iter().fold(splitmix64(master_seed), |h, &x| splitmix64(h ^ x))
}

/// Random coupling `H = (K + K†)/‖K + K†‖` with `K` uniform on `[0, 1]`
/// entrywise, and a Haar-random pure environment state.
pub fn sample_model(
    master_seed: u64,
    sample_id: u64,
    d_sys: usize,
    d_env: usize,
    complex_k: bool,
) -> Result<(CMatrix, QState)> {
    if d_sys == 0 || d_env == 0 {
        return Err(Error::InvalidArgument("dimensions must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed(master_seed, sample_id));
    let n = d_sys * d_env;
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re: f64 = rng.random();
        let im: f64 = if complex_k { rng.random() } else { 0.0 };
        entries.push(C64::new(re, im));
    }
    let k = CMatrix::from_row_major(n, n, &entries)?;
    let h = &k + &k.adjoint();
    let norm = op_norm(&h);
    let h = if norm > 0.0 { h.scale(1.0 / norm) } else { h };
    let env = QState::pure(&random_pure_vector(&mut rng, d_env))?;
    Ok((h, env))
}

/// One row of the raw table. Missing values (infinite entropies, failed
/// optimizations) are `None` and written as empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: u64,
    pub dt: f64,
    pub strategy: Strategy,
    pub i_channel_bits: Option<f64>,
    pub i_coarse_bits: Option<f64>,
    pub m_coarse_bits: Option<f64>,
    pub n_coarse_bits: Option<f64>,
    pub delta_i_bits: Option<f64>,
    pub delta_m_bits: Option<f64>,
    pub delta_n_bits: Option<f64>,
    pub lambda_max: Option<f64>,
    pub seesaw_sweeps: Option<usize>,
    pub support_flag: u8,
    pub wall_ms: Option<f64>,
}

impl RunRecord {
    fn empty(sample_id: u64, dt: f64, strategy: Strategy) -> Self {
        RunRecord {
            sample_id,
            dt,
            strategy,
            i_channel_bits: None,
            i_coarse_bits: None,
            m_coarse_bits: None,
            n_coarse_bits: None,
            delta_i_bits: None,
            delta_m_bits: None,
            delta_n_bits: None,
            lambda_max: None,
            seesaw_sweeps: None,
            support_flag: 0,
            wall_ms: None,
        }
    }
}

/// Per-run settings shared by every task of a sweep.
#[derive(Clone, Debug)]
pub struct RunSettings {
    pub coarse_keep: Vec<usize>,
    pub seesaw: SeesawOptions,
    pub cdd_block: usize,
    pub modd_block: usize,
    pub record_wall_time: bool,
}

impl From<&ExperimentConfig> for RunSettings {
    fn from(cfg: &ExperimentConfig) -> Self {
        RunSettings {
            coarse_keep: cfg.coarse_keep.clone(),
            seesaw: cfg.seesaw(),
            cdd_block: cfg.cdd_block,
            modd_block: cfg.modd_block,
            record_wall_time: cfg.record_wall_time,
        }
    }
}

/// Controls chosen by a strategy.
#[derive(Clone, Debug)]
pub struct Plan {
    pub controls: ControlSequence,
    pub sweeps: Option<usize>,
    /// See-saw objective history (the coarse stage for MODD).
    pub history: Option<Vec<f64>>,
}

pub fn strategy_controls(dynm: &SEDynamics, strategy: Strategy, settings: &RunSettings) -> Result<Plan> {
    let n = dynm.n_slots();
    let plain = |controls| Plan { controls, sweeps: None, history: None };
    Ok(match strategy {
        Strategy::Ref => plain(ControlSequence::new("ref")),
        Strategy::Dd => plain(dd_sequence(n, &DD_PATTERN, true)?),
        Strategy::Cdd => plain(cdd_sequence(n, settings.cdd_block, &DD_PATTERN, &DD_PATTERN)?),
        Strategy::Odd => {
            let slots: Vec<usize> = (1..=n).collect();
            let tr = odd_best(dynm, &slots, &default_inits(&slots, dynm.d_sys(), "odd"), &settings.seesaw)?;
            Plan { sweeps: Some(tr.sweeps()), history: Some(tr.objective_history.clone()), controls: tr.controls }
        }
        Strategy::Modd => {
            let r = modd(dynm, settings.modd_block, &settings.seesaw)?;
            let sweeps = r.fine.iter().map(|t| t.sweeps()).sum::<usize>() + r.coarse.sweeps();
            Plan { sweeps: Some(sweeps), history: Some(r.coarse.objective_history.clone()), controls: r.controls }
        }
    })
}

/// A finished run: the row, the see-saw history if any, and the first error.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub history: Option<Vec<f64>>,
    pub error: Option<String>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn delta(x: Option<f64>, base: Option<f64>) -> Option<f64> {
    Some(x? - base?)
}

/// Runs one strategy on `dynm` and fills in every metric it can. Deltas are
/// taken against `reference`, or against the run itself when `None`.
pub fn run_strategy(
    sample_id: u64,
    dt: f64,
    dynm: &SEDynamics,
    strategy: Strategy,
    settings: &RunSettings,
    reference: Option<&RunRecord>,
) -> RunOutcome {
    let start = Instant::now();
    let mut rec = RunRecord::empty(sample_id, dt, strategy);
    let mut history = None;
    let mut infinite = false;
    let result = (|| -> Result<()> {
        let plan = strategy_controls(dynm, strategy, settings)?;
        rec.seesaw_sweeps = plan.sweeps;
        history = plan.history;
        let controlled = plan.controls.apply_to(dynm, false)?;
        let channel = controlled.resulting_channel()?;
        rec.lambda_max = Some(top_eigenpair(channel.choi())?.0);
        let info = channel_information(&channel)?;
        infinite |= !info.is_finite();
        rec.i_channel_bits = finite(info.value);
        let report = monotone_report(&controlled.coarse_grain(&settings.coarse_keep)?)?;
        infinite |= report.support_flag();
        rec.i_coarse_bits = finite(report.i_bits);
        rec.m_coarse_bits = finite(report.m_bits);
        rec.n_coarse_bits = finite(report.n_bits);
        Ok(())
    })();
    let base = reference.unwrap_or(&rec).clone();
    rec.delta_i_bits = delta(rec.i_coarse_bits, base.i_coarse_bits);
    rec.delta_m_bits = delta(rec.m_coarse_bits, base.m_coarse_bits);
    rec.delta_n_bits = delta(rec.n_coarse_bits, base.n_coarse_bits);
    rec.support_flag = u8::from(infinite || base.support_flag == 1);
    if settings.record_wall_time {
        rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    RunOutcome { record: rec, history, error: result.err().map(|e| e.to_string()) }
}

/// A run whose optimizer or metric evaluation raised an error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub sample_id: u64,
    pub dt: f64,
    pub strategy: Strategy,
    pub message: String,
}

/// All strategies of one (sample, dt) pair, in sorted strategy order. The
/// reference run is always performed since the deltas need it.
pub fn run_group(
    cfg: &ExperimentConfig,
    settings: &RunSettings,
    sample_id: u64,
    dt_index: usize,
) -> Result<Vec<RunOutcome>> {
    let dt = cfg.dt_grid.values()[dt_index];
    let (h, env) = sample_model(cfg.master_seed, sample_id, 2, cfg.d_env, cfg.complex_k)?;
    let dynm = build_dynamics(&h, env, cfg.n_segments, dt)?;
    let reference = run_strategy(sample_id, dt, &dynm, Strategy::Ref, settings, None);
    let mut out = Vec::new();
    for s in cfg.sorted_strategies() {
        if s == Strategy::Ref {
            out.push(reference.clone());
        } else {
            out.push(run_strategy(sample_id, dt, &dynm, s, settings, Some(&reference.record)));
        }
    }
    Ok(out)
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        (a.sample_id, a.dt, a.strategy)
            .partial_cmp(&(b.sample_id, b.dt, b.strategy))
            .expect("dt values are finite")
    });
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, records: &[RunRecord]) -> Result<()> {
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a complete raw table; the file is replaced atomically.
pub fn write_raw_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv_writer(File::create(&tmp)?);
        w.write_record(HEADER)?;
        write_rows(&mut w, records)?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a raw table, skipping rows that do not parse (a torn final line
/// after an interrupted run).
pub fn read_raw_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Format(format!("unexpected CSV header {header:?}")));
    }
    Ok(r.deserialize::<RunRecord>().filter_map(|x| x.ok()).collect())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv_writer(File::create(path)?);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SweepOptions {
    pub threads: Option<usize>,
    pub resume: bool,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
    /// Rows taken over from an earlier partial run.
    pub resumed: usize,
}

/// Groups still to be computed, and the complete groups of `existing`.
fn plan_groups(cfg: &ExperimentConfig, existing: Vec<RunRecord>) -> (Vec<(u64, usize)>, Vec<RunRecord>) {
    let grid = cfg.dt_grid.values();
    let strategies = cfg.sorted_strategies();
    let mut by_group: BTreeMap<(u64, usize), BTreeMap<Strategy, RunRecord>> = BTreeMap::new();
    for r in existing {
        let Some(k) = grid.iter().position(|&dt| dt == r.dt) else { continue };
        if r.sample_id < cfg.ensemble as u64 && strategies.contains(&r.strategy) {
            by_group.entry((r.sample_id, k)).or_default().entry(r.strategy).or_insert(r);
        }
    }
    let mut kept = Vec::new();
    let mut done = HashSet::new();
    for (key, rows) in by_group {
        if rows.len() == strategies.len() {
            done.insert(key);
            kept.extend(rows.into_values());
        }
    }
    let todo = (0..cfg.ensemble as u64)
        .flat_map(|s| (0..grid.len()).map(move |k| (s, k)))
        .filter(|key| !done.contains(key))
        .collect();
    (todo, kept)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn dump_history(dir: &Path, rec: &RunRecord, dt_index: usize, history: &[f64]) -> Result<()> {
    let name = format!("s{:04}_dt{:03}_{}.txt", rec.sample_id, dt_index, rec.strategy);
    let mut f = std::io::BufWriter::new(File::create(dir.join(name))?);
    for v in history {
        writeln!(f, "{v}")?;
    }
    f.flush()?;
    Ok(())
}

/// Runs `groups` on a worker pool, handing each finished group to `sink`.
fn run_groups(
    cfg: &ExperimentConfig,
    groups: &[(u64, usize)],
    threads: Option<usize>,
    sink: &(dyn Fn(&[RunRecord]) -> Result<()> + Sync),
) -> Result<(Vec<RunRecord>, Vec<Failure>)> {
    let settings = RunSettings::from(cfg);
    if let Some(dir) = &cfg.trace_dir {
        std::fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<Vec<RunOutcome>>> = pool(threads)?.install(|| {
        groups
            .par_iter()
            .map(|&(s, k)| {
                let outs = run_group(cfg, &settings, s, k)?;
                if let Some(dir) = &cfg.trace_dir {
                    for o in &outs {
                        if let Some(h) = &o.history {
                            dump_history(dir, &o.record, k, h)?;
                        }
                    }
                }
                let recs: Vec<RunRecord> = outs.iter().map(|o| o.record.clone()).collect();
                sink(&recs)?;
                Ok(outs)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for group in results {
        for o in group? {
            if let Some(message) = o.error {
                let r = &o.record;
                failures.push(Failure { sample_id: r.sample_id, dt: r.dt, strategy: r.strategy, message });
            }
            records.push(o.record);
        }
    }
    failures.sort_by(|a, b| {
        (a.sample_id, a.dt, a.strategy).partial_cmp(&(b.sample_id, b.dt, b.strategy)).expect("finite")
    });
    Ok((records, failures))
}

/// The whole sweep in memory, without touching the filesystem.
pub fn sweep_records(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<SweepResult> {
    cfg.validate()?;
    let (groups, _) = plan_groups(cfg, Vec::new());
    let (mut records, failures) = run_groups(cfg, &groups, threads, &|_| Ok(()))?;
    sort_records(&mut records);
    let summary = summarize(&records, &cfg.dt_grid.values(), &cfg.sorted_strategies(), cfg.smoothing_window);
    Ok(SweepResult { records, summary, failures, resumed: 0 })
}

/// Output paths derived from the raw CSV path unless the config overrides them.
pub fn output_paths(cfg: &ExperimentConfig, out: &Path) -> (PathBuf, PathBuf) {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let dir = out.parent().unwrap_or(Path::new(""));
    let summary = cfg.summary_path.clone().unwrap_or_else(|| dir.join(format!("{stem}.summary.csv")));
    let meta = cfg.metadata_path.clone().unwrap_or_else(|| dir.join(format!("{stem}.meta.json")));
    (summary, meta)
}

/// Runs the sweep, appending finished groups to `out` as they complete and
/// rewriting it sorted at the end. With `resume`, complete groups already in
/// `out` are kept and not recomputed.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, opts: SweepOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let started = chrono::Utc::now();
    let existing = if opts.resume && out.exists() { read_raw_csv(out)? } else { Vec::new() };
    let (groups, mut kept) = plan_groups(cfg, existing);
    sort_records(&mut kept);
    let resumed = kept.len();
    write_raw_csv(out, &kept)?;

    let file = OpenOptions::new().append(true).open(out)?;
    let writer = Mutex::new(csv_writer(file));
    let sink = |recs: &[RunRecord]| -> Result<()> {
        let mut w = writer.lock().expect("writer lock");
        write_rows(&mut w, recs)
    };
    let (new, failures) = run_groups(cfg, &groups, opts.threads, &sink)?;
    drop(writer);

    let mut records = kept;
    records.extend(new);
    sort_records(&mut records);
    write_raw_csv(out, &records)?;
    let grid = cfg.dt_grid.values();
    let summary = summarize(&records, &grid, &cfg.sorted_strategies(), cfg.smoothing_window);
    let (summary_path, meta_path) = output_paths(cfg, out);
    write_summary_csv(&summary_path, &summary)?;

    let excluded: BTreeMap<&str, usize> =
        METRICS.iter().map(|&m| (m, records.iter().filter(|r| r.metric(m).is_none()).count())).collect();
    let task_seeds: Vec<serde_json::Value> = (0..cfg.ensemble as u64)
        .flat_map(|s| (0..grid.len()).map(move |k| (s, k)))
        .flat_map(|(s, k)| {
            cfg.sorted_strategies().into_iter().map(move |st| {
                serde_json::json!({
                    "sample_id": s,
                    "dt_index": k,
                    "strategy": st,
                    "seed": task_seed(cfg.master_seed, s, k as u64, st.index()),
                })
            })
        })
        .collect();
    let model_seeds: Vec<u64> = (0..cfg.ensemble as u64).map(|s| model_seed(cfg.master_seed, s)).collect();
    let meta = serde_json::json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "started": started.to_rfc3339(),
        "finished": chrono::Utc::now().to_rfc3339(),
        "config": cfg,
        "dt_grid": grid,
        "raw_csv": out,
        "summary_csv": summary_path,
        "rows": records.len(),
        "resumed_rows": resumed,
        "excluded": excluded,
        "failures": failures,
        "model_seeds": model_seeds,
        "task_seeds": task_seeds,
    });
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(SweepResult { records, summary, failures, resumed })
}
