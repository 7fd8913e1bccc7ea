use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::SeesawOptions;

/// Control strategy compared in the sweep. The declaration order is the
/// order rows are sorted in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Ref,
    Dd,
    Cdd,
    Odd,
    Modd,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Ref, Strategy::Dd, Strategy::Cdd, Strategy::Odd, Strategy::Modd];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Ref => "ref",
            Strategy::Dd => "dd",
            Strategy::Cdd => "cdd",
            Strategy::Odd => "odd",
            Strategy::Modd => "modd",
        }
    }

    pub fn index(self) -> u64 {
        self as u64
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.label() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// Either an explicit list of durations or a log-spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtGrid {
    List(Vec<f64>),
    Log { min: f64, max: f64, points: usize },
}

impl Default for DtGrid {
    fn default() -> Self {
        DtGrid::Log { min: 1e-2, max: 1e1, points: 40 }
    }
}

/// `points` values from `min` to `max`, equally spaced in `log10`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![min],
        _ => {
            let (a, b) = (min.log10(), max.log10());
            let mut v: Vec<f64> =
                (0..points).map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64)).collect();
            v[0] = min;
            v[points - 1] = max;
            v
        }
    }
}

impl DtGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            DtGrid::List(v) => v.clone(),
            DtGrid::Log { min, max, points } => log_grid(*min, *max, *points),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub ensemble: usize,
    pub d_env: usize,
    pub n_segments: usize,
    /// Slots left open in the coarse-grained process.
    pub coarse_keep: Vec<usize>,
    pub dt_grid: DtGrid,
    pub strategies: Vec<Strategy>,
    pub smoothing_window: usize,
    pub max_sweeps: usize,
    pub seesaw_tol: f64,
    pub unitary_only: bool,
    /// Block length of the concatenated sequence, in segments.
    pub cdd_block: usize,
    /// Block length of the multitimescale optimizer, in segments.
    pub modd_block: usize,
    /// Adds an independent uniform imaginary part to the coupling matrix.
    pub complex_k: bool,
    /// Fills the `wall_ms` column; the CSV is then no longer reproducible.
    pub record_wall_time: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata_path: Option<PathBuf>,
    /// Directory for per-run see-saw objective histories.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 1,
            ensemble: 20,
            d_env: 2,
            n_segments: 16,
            coarse_keep: vec![4, 8, 12],
            dt_grid: DtGrid::default(),
            strategies: Strategy::ALL.to_vec(),
            smoothing_window: 5,
            max_sweeps: 200,
            seesaw_tol: 1e-7,
            unitary_only: false,
            cdd_block: 4,
            modd_block: 4,
            complex_k: false,
            record_wall_time: false,
            summary_path: None,
            metadata_path: None,
            trace_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn seesaw(&self) -> SeesawOptions {
        SeesawOptions { max_sweeps: self.max_sweeps, tol: self.seesaw_tol, unitary_only: self.unitary_only }
    }

    /// The strategies in sorted order without repeats.
    pub fn sorted_strategies(&self) -> Vec<Strategy> {
        let mut s = self.strategies.clone();
        s.sort();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ensemble == 0 {
            return bad("ensemble must be at least 1".into());
        }
        if self.d_env == 0 {
            return bad("d_env must be at least 1".into());
        }
        if self.n_segments < 2 {
            return bad("n_segments must be at least 2".into());
        }
        let dts = self.dt_grid.values();
        if dts.is_empty() {
            return bad("dt_grid is empty".into());
        }
        if let Some(dt) = dts.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return bad(format!("dt values must be positive, got {dt}"));
        }
        if dts.windows(2).any(|w| w[0] >= w[1]) {
            return bad("dt_grid must be strictly increasing".into());
        }
        if self.coarse_keep.windows(2).any(|w| w[0] >= w[1]) {
            return bad("coarse_keep must be strictly increasing".into());
        }
        if let Some(s) = self.coarse_keep.iter().find(|&&s| s == 0 || s >= self.n_segments) {
            return bad(format!("coarse_keep slot {s} outside 1..{}", self.n_segments - 1));
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected".into());
        }
        if self.smoothing_window == 0 || self.smoothing_window % 2 == 0 {
            return bad("smoothing_window must be odd".into());
        }
        if !(self.seesaw_tol >= 0.0) {
            return bad("seesaw_tol must be non-negative".into());
        }
        if self.strategies.contains(&Strategy::Cdd)
            && (self.cdd_block == 0 || self.n_segments % self.cdd_block != 0)
        {
            return bad(format!("cdd_block {} does not divide n_segments {}", self.cdd_block, self.n_segments));
        }
        if self.strategies.contains(&Strategy::Modd)
            && (self.modd_block == 0 || self.n_segments % self.modd_block != 0)
        {
            return bad(format!("modd_block {} does not divide n_segments {}", self.modd_block, self.n_segments));
        }
        Ok(())
    }
}
