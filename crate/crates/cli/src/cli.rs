//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sfq_core::{PopulationBasis, SweepParam};

use crate::commands::{self, Cardinal, CompareArgs, ScanArgs, SequenceSource, SimulateArgs, DEFAULT_SCAN_POINTS};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "sfq", version, about = "Bipolar SFQ pulse-sequence design for transmon qubits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SequenceArgs {
    /// Sequence text file (`+-0`, or comma-separated 1/-1/0).
    #[arg(long)]
    pub sequence: Option<PathBuf>,
    /// Take the best sequence from a `report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl SequenceArgs {
    fn source(&self) -> SequenceSource {
        match (&self.sequence, &self.report) {
            (Some(p), _) => SequenceSource::Text(p.clone()),
            (None, Some(p)) => SequenceSource::Report(p.clone()),
            (None, None) => unreachable!("clap enforces the group"),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BasisArg {
    Eigen,
    Fock,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a sequence matching the configured pulse angle.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Population traces and leakage of a sequence.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seq: SequenceArgs,
        /// Initial cardinal state (x+, x-, y+, y-, z+, z-) or `all`.
        #[arg(long, default_value = "z+")]
        initial: String,
        #[arg(long, value_enum, default_value = "eigen")]
        basis: BasisArg,
        /// Pulse angle (rad); defaults to the transmon's.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Infidelity versus parameter detuning.
    Scan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        seq: SequenceArgs,
        /// Sweep all four parameters.
        #[arg(long, conflicts_with = "param")]
        all: bool,
        /// Parameter to sweep (f01, mu, f_clock, theta); repeatable.
        #[arg(long)]
        param: Vec<SweepParam>,
        /// Grid points (odd).
        #[arg(long, default_value_t = DEFAULT_SCAN_POINTS)]
        points: usize,
        /// Half-range of the detuning grid, overriding the per-parameter default.
        #[arg(long)]
        half_range: Option<f64>,
    },
    /// Thresholded-sinusoid seed of a given length.
    Seed {
        #[command(flatten)]
        common: Common,
        /// Number of clock slots.
        #[arg(long)]
        length: usize,
    },
    /// Three-pulse pi/2 experiment with rectangular, Gaussian and tabulated pulses.
    PulseCompare {
        #[command(flatten)]
        common: Common,
        /// Measured waveform, `time_ns,amplitude` CSV.
        #[arg(long)]
        tabulated: Option<PathBuf>,
        /// Rectangular pulse width (ns).
        #[arg(long, default_value_t = CompareArgs::default().width)]
        width: f64,
        /// Gaussian standard deviation (ns).
        #[arg(long, default_value_t = CompareArgs::default().sigma)]
        sigma: f64,
        /// Integration step (ns).
        #[arg(long, default_value_t = CompareArgs::default().dt)]
        dt: f64,
    },
    /// Optimize many configs in parallel, one directory per run.
    Batch {
        /// Config files; repeatable.
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Also take every `*.json` in this directory.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Root directory; each run writes to a subdirectory named after its config.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn load(common: &Common) -> CliResult<(RunConfig, PathBuf)> {
    let cfg = RunConfig::load(&common.config)?;
    let out = out_dir(common, &cfg);
    Ok((cfg, out))
}

fn announce(out: &Path) {
    println!("wrote {}", out.display());
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Optimize { common } => {
            let (cfg, out) = load(&common)?;
            let report = commands::optimize(&cfg, &out)?;
            println!("{}", commands::summarize(&report));
            println!("{}", report.best_seq);
            announce(&out);
            commands::check_accepted(&report)
        }
        Command::Simulate { common, seq, initial, basis, theta } => {
            let (cfg, out) = load(&common)?;
            let initial = if initial == "all" {
                Cardinal::ALL.to_vec()
            } else {
                vec![initial.parse::<Cardinal>().map_err(CliError::Usage)?]
            };
            let basis = match basis {
                BasisArg::Eigen => PopulationBasis::Eigen,
                BasisArg::Fock => PopulationBasis::Fock,
            };
            let args = SimulateArgs { sequence: seq.source(), initial, basis, theta };
            let s = commands::simulate(&cfg, &args, &out)?;
            for r in &s.runs {
                println!("{}: max W2 {:.3e}, final W2 {:.3e}, final leakage {:.3e}", r.initial, r.max_w2, r.final_w2, r.final_leakage);
            }
            announce(&out);
            Ok(())
        }
        Command::Scan { common, seq, all, param, points, half_range } => {
            let (cfg, out) = load(&common)?;
            let params = if all { SweepParam::ALL.to_vec() } else { param };
            let args = ScanArgs { sequence: seq.source(), params, points, half_range };
            let s = commands::scan(&cfg, &args, &out)?;
            for e in &s.sweeps {
                let w = match &e.window {
                    Some(w) => format!("[{:.6}, {:.6}] half-width {:.3e}", w.lo, w.hi, w.half_width()),
                    None => "none".into(),
                };
                println!("{}: centre 1-F {:.3e}, window {}", e.parameter, e.center_infidelity, w);
            }
            announce(&out);
            Ok(())
        }
        Command::Seed { common, length } => {
            let (cfg, out) = load(&common)?;
            let seq = commands::seed(&cfg, length, &out)?;
            println!("{seq}");
            announce(&out);
            Ok(())
        }
        Command::PulseCompare { common, tabulated, width, sigma, dt } => {
            let (cfg, out) = load(&common)?;
            let args = CompareArgs { tabulated, width, sigma, dt };
            let s = commands::pulse_compare(&cfg, &args, &out)?;
            for e in &s.shapes {
                println!("{}: W0 {:.6} W1 {:.6} W2 {:.3e} (max diff vs rectangular {:.2e})",
                    e.kind, e.final_populations[0], e.final_populations[1], e.final_populations[2], e.max_delta_vs_rectangular);
            }
            println!("delta vs rectangular propagator norm: {:.3e}", s.propagator_norm_delta_vs_rect);
            announce(&out);
            Ok(())
        }
        Command::Batch { mut config, dir, out } => {
            if let Some(dir) = dir {
                config.extend(commands::configs_in(&dir)?);
            }
            let entries = commands::batch(&config, &out)?;
            for e in &entries {
                match (&e.error, e.accepted) {
                    (Some(err), _) => println!("{}: error: {err}", e.name),
                    (None, Some(acc)) => println!(
                        "{}: accepted {acc} M {} 1-F {:.3e} gate time {:.3} ns",
                        e.name,
                        e.length.unwrap_or(0),
                        e.infidelity.unwrap_or(f64::NAN),
                        e.gate_time.unwrap_or(f64::NAN)
                    ),
                    _ => {}
                }
            }
            announce(&out);
            match commands::batch_exit_code(&entries) {
                0 => Ok(()),
                1 => Err(CliError::NotAccepted("some runs were not accepted".into())),
                _ => Err(CliError::Usage("some configs could not be run".into())),
            }
        }
    }
}
