use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use multitime::experiment::{self, ExperimentConfig, SweepOptions};
use multitime::monotones::{channel_information, monotone_report};
use multitime::optimizer::{default_inits, lambda_max, modd, odd_best, SeesawOptions};
use multitime::process::container::{load_dynamics, save_dynamics, save_process};
use multitime::process::build_dynamics;
use multitime::Result;

#[derive(Parser)]
#[command(name = "multitime", version, about = "Process-tensor noise simulation and optimal dynamical decoupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Odd,
    Modd,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy comparison over an ensemble and a dt grid.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Raw CSV; the summary table and metadata go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        /// Keep complete groups already present in the output.
        #[arg(long)]
        resume: bool,
    },
    /// Write a random model from the sweep ensemble as a dynamics file.
    Sample {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        id: u64,
        #[arg(long, default_value_t = 2)]
        d_env: usize,
        #[arg(long, default_value_t = 16)]
        n_segments: usize,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        complex_k: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// I, M and N of the coarse-grained process, plus the channel information.
    Monotones {
        #[arg(long)]
        dynamics: PathBuf,
        /// Slots kept open, comma separated; empty closes every slot.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        keep: Vec<usize>,
        /// Also write the coarse-grained process tensor.
        #[arg(long)]
        save_process: Option<PathBuf>,
    },
    /// Optimize the controls of a dynamics file.
    Optimize {
        #[arg(long)]
        dynamics: PathBuf,
        /// Slots to optimize (odd mode), comma separated; defaults to all.
        #[arg(long, value_delimiter = ',')]
        slots: Vec<usize>,
        #[arg(long, value_enum, default_value = "odd")]
        mode: Mode,
        /// Block length in segments (modd mode).
        #[arg(long, default_value_t = 4)]
        block: usize,
        #[arg(long, default_value_t = 200)]
        max_sweeps: usize,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long)]
        unitary_only: bool,
        /// One objective value per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Dynamics file with the optimized controls absorbed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fmt_bits(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { config, out, threads, resume } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = experiment::sweep(&cfg, &out, SweepOptions { threads, resume })?;
            let (summary, meta) = experiment::output_paths(&cfg, &out);
            println!(
                "{} rows ({} resumed), {} failures; summary {}, metadata {}",
                r.records.len(),
                r.resumed,
                r.failures.len(),
                summary.display(),
                meta.display()
            );
            for f in &r.failures {
                eprintln!("sample {} dt {} {}: {}", f.sample_id, f.dt, f.strategy, f.message);
            }
        }
        Command::Sample { seed, id, d_env, n_segments, dt, complex_k, out } => {
            let (h, env) = experiment::sample_model(seed, id, 2, d_env, complex_k)?;
            save_dynamics(&out, &build_dynamics(&h, env, n_segments, dt)?)?;
        }
        Command::Monotones { dynamics, keep, save_process: target } => {
            let dynm = load_dynamics(&dynamics)?;
            let t = dynm.coarse_grain(&keep)?;
            if let Some(p) = target {
                save_process(&p, &t)?;
            }
            let rep = monotone_report(&t)?;
            let info = channel_information(&dynm.resulting_channel()?)?;
            let out = json!({
                "keep": keep,
                "i_channel_bits": fmt_bits(info.value),
                "i_bits": fmt_bits(rep.i_bits),
                "m_bits": fmt_bits(rep.m_bits),
                "n_bits": fmt_bits(rep.n_bits),
                "support_flag": rep.support_flag() || !info.is_finite(),
                "support_violation": rep.support_violation,
                "clamped_mass": rep.clamped_mass,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Optimize { dynamics, slots, mode, block, max_sweeps, tol, unitary_only, trace, out } => {
            let dynm = load_dynamics(&dynamics)?;
            let opts = SeesawOptions { max_sweeps, tol, unitary_only };
            let reference = lambda_max(&dynm, &multitime::control::ControlSequence::new("ref"))?;
            let (controls, history, sweeps) = match mode {
                Mode::Odd => {
                    let slots = if slots.is_empty() { (1..=dynm.n_slots()).collect() } else { slots };
                    let tr = odd_best(&dynm, &slots, &default_inits(&slots, dynm.d_sys(), "odd"), &opts)?;
                    let sweeps = tr.sweeps();
                    (tr.controls, tr.objective_history, sweeps)
                }
                Mode::Modd => {
                    let r = modd(&dynm, block, &opts)?;
                    let sweeps = r.fine.iter().map(|t| t.sweeps()).sum::<usize>() + r.coarse.sweeps();
                    (r.controls, r.coarse.objective_history, sweeps)
                }
            };
            if let Some(p) = trace {
                let text: String = history.iter().map(|v| format!("{v}\n")).collect();
                std::fs::write(p, text)?;
            }
            let controlled = controls.apply_to(&dynm, false)?;
            if let Some(p) = out {
                save_dynamics(&p, &controlled)?;
            }
            let info = channel_information(&controlled.resulting_channel()?)?;
            let report = json!({
                "mode": controls.label,
                "slots": controls.iter().map(|(s, _)| s).collect::<Vec<_>>(),
                "lambda_max_ref": reference,
                "lambda_max": lambda_max(&dynm, &controls)?,
                "i_channel_bits": fmt_bits(info.value),
                "sweeps": sweeps,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
