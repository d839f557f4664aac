//! Subcommand implementations. Each takes a parsed config plus its own
//! arguments, writes into `out`, and returns what it wrote for the caller
//! to summarize.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sfq_core::fidelity::cardinal_states;
use sfq_core::format;
use sfq_core::linalg::operator_norm;
use sfq_core::propagation::{build_propagators, evolve_sequence, three_pulse_comparison, DEFAULT_PULSE_WIDTH};
use sfq_core::robustness::{sweep, Window, WINDOW_THRESHOLD};
use sfq_core::seqopt::{make_seed, optimize_for_theta, seed_waveform};
use sfq_core::{OptimizationReport, PopulationBasis, PulseShape, SweepParam, SweepSpec, TritSequence};

use crate::config::{ParamsBlock, RunConfig};
use crate::error::{CliError, CliResult, Context};

pub const REPORT_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------- files

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_csv(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> sfq_core::Result<()>) -> CliResult<()> {
    let mut w = create(path)?;
    f(&mut w).context(|| format!("writing {}", path.display()))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `report.json`: the parameter block plus every report field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub params: ParamsBlock,
    #[serde(flatten)]
    pub report: OptimizationReport,
}

impl ReportFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let file: ReportFile = serde_json::from_str(&text).map_err(|e| CliError::Config {
            file: path.display().to_string(),
            key: "<report>".into(),
            reason: e.to_string(),
        })?;
        if file.format_version != REPORT_FORMAT_VERSION {
            return Err(CliError::Config {
                file: path.display().to_string(),
                key: "format_version".into(),
                reason: format!("unsupported version {}", file.format_version),
            });
        }
        Ok(file)
    }
}

/// Where a sequence comes from: a text file or a previous report.
#[derive(Clone, Debug)]
pub enum SequenceSource {
    Text(PathBuf),
    Report(PathBuf),
}

impl SequenceSource {
    /// Loads the sequence on the config's clock. A report written for a
    /// different clock is rejected.
    pub fn load(&self, cfg: &RunConfig) -> CliResult<TritSequence> {
        match self {
            SequenceSource::Text(path) => format::parse_sequence(&read_text(path)?, cfg.f_clock())
                .context(|| format!("reading sequence {}", path.display())),
            SequenceSource::Report(path) => {
                let seq = ReportFile::load(path)?.report.best_seq;
                if seq.f_clock() != cfg.f_clock() {
                    return Err(CliError::core(
                        format!("sequence from {}", path.display()),
                        sfq_core::Error::ClockMismatch { sequence_ghz: seq.f_clock(), propagators_ghz: cfg.f_clock() },
                    ));
                }
                Ok(seq)
            }
        }
    }
}

// ---------------------------------------------------------------- optimize

#[derive(Clone, Debug, Serialize)]
struct RunInfo {
    elapsed_s: f64,
    threads: usize,
}

/// Runs the length-adaptive search. The report is written whether or not
/// it was accepted; `report.json` holds no timing data so repeated runs are
/// byte-identical (timing goes to `run_info.json`).
pub fn optimize(cfg: &RunConfig, out: &Path) -> CliResult<OptimizationReport> {
    ensure_dir(out)?;
    let start = Instant::now();
    let report = optimize_for_theta(&cfg.transmon, cfg.f_clock(), &cfg.shape, &cfg.gate, &cfg.seed, &cfg.optimizer)
        .context(|| "optimize".into())?;
    let file = ReportFile { format_version: REPORT_FORMAT_VERSION, params: cfg.params(), report };
    write_json(&out.join("report.json"), &file)?;
    let seq_path = out.join("sequence.txt");
    let mut w = create(&seq_path)?;
    format::write_sequence(&mut w, &file.report.best_seq).and_then(|_| w.flush()).map_err(|e| CliError::io(&seq_path, e))?;
    write_csv(&out.join("fidelity_history.csv"), |w| format::write_history(w, &file.report.fidelity_history))?;
    let info = RunInfo { elapsed_s: start.elapsed().as_secs_f64(), threads: rayon::current_num_threads() };
    write_json(&out.join("run_info.json"), &info)?;
    Ok(file.report)
}

pub fn summarize(r: &OptimizationReport) -> String {
    format!(
        "accepted {} | M {} | theta* {:.6} rad (target {:.6}) | 1-F {:.3e} | leakage {:.2e} | gate time {:.3} ns",
        r.accepted, r.length, r.theta_star, r.theta_desired, r.infidelity, r.leakage, r.gate_time
    )
}

pub fn check_accepted(r: &OptimizationReport) -> CliResult<()> {
    if r.accepted {
        Ok(())
    } else {
        Err(CliError::NotAccepted(format!(
            "best run has M = {}, theta* = {:.6} (target {:.6}), 1-F = {:.3e}",
            r.length, r.theta_star, r.theta_desired, r.infidelity
        )))
    }
}

// ---------------------------------------------------------------- simulate

/// Cardinal initial state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cardinal {
    #[serde(rename = "x+")]
    XPlus,
    #[serde(rename = "x-")]
    XMinus,
    #[serde(rename = "y+")]
    YPlus,
    #[serde(rename = "y-")]
    YMinus,
    #[serde(rename = "z+")]
    ZPlus,
    #[serde(rename = "z-")]
    ZMinus,
}

impl Cardinal {
    /// Same order as `cardinal_states`.
    pub const ALL: [Cardinal; 6] =
        [Cardinal::XPlus, Cardinal::XMinus, Cardinal::YPlus, Cardinal::YMinus, Cardinal::ZPlus, Cardinal::ZMinus];

    pub fn label(self) -> &'static str {
        ["x+", "x-", "y+", "y-", "z+", "z-"][self.index()]
    }

    fn index(self) -> usize {
        Cardinal::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Cardinal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.replace('\u{2212}', "-");
        Cardinal::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| format!("unknown initial state {s:?} (x+, x-, y+, y-, z+, z-)"))
    }
}

#[derive(Clone, Debug)]
pub struct SimulateArgs {
    pub sequence: SequenceSource,
    /// One file per entry; a single entry writes `populations.csv`.
    pub initial: Vec<Cardinal>,
    pub basis: PopulationBasis,
    /// Overrides the transmon's pulse angle.
    pub theta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageRun {
    pub initial: Cardinal,
    pub populations_file: String,
    /// Largest `W_2` at any slot boundary.
    pub max_w2: f64,
    pub final_w2: f64,
    /// `1 - W_0 - W_1` at the end.
    pub final_leakage: f64,
    pub max_leakage: f64,
    /// Largest `|sum_m W_m - 1|` over all retained levels, not only W0..W5.
    pub max_norm_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageSummary {
    pub basis: PopulationBasis,
    pub theta: f64,
    pub length: usize,
    pub gate_time: f64,
    pub runs: Vec<LeakageRun>,
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs, out: &Path) -> CliResult<LeakageSummary> {
    if args.initial.is_empty() {
        return Err(CliError::Usage("at least one initial state is required".into()));
    }
    let seq = args.sequence.load(cfg)?;
    let theta = args.theta.unwrap_or(cfg.transmon.theta);
    let model = cfg.model()?;
    let props = build_propagators(&model, cfg.f_clock(), &cfg.shape, theta).context(|| "building propagators".into())?;
    let states = cardinal_states(model.dim());
    ensure_dir(out)?;
    let mut runs = Vec::new();
    for &initial in &args.initial {
        let trace = evolve_sequence(&props, &seq, &states[initial.index()], Some(args.basis))
            .context(|| format!("evolving from {initial}"))?;
        let name =
            if args.initial.len() == 1 { "populations.csv".to_string() } else { format!("populations_{initial}.csv") };
        write_csv(&out.join(&name), |w| format::write_trace(w, &trace))?;
        let leak = |p: &Vec<f64>| (1.0 - p[0] - p[1]).max(0.0);
        runs.push(LeakageRun {
            initial,
            populations_file: name,
            max_w2: trace.max_population(2),
            final_w2: trace.final_population(2),
            final_leakage: leak(trace.populations.last().unwrap()),
            max_leakage: trace.populations.iter().map(leak).fold(0.0, f64::max),
            max_norm_defect: trace.max_norm_defect(),
        });
    }
    let summary = LeakageSummary { basis: args.basis, theta, length: seq.len(), gate_time: seq.gate_time(), runs };
    write_json(&out.join("leakage.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- scan

pub const DEFAULT_SCAN_POINTS: usize = 41;

#[derive(Clone, Debug)]
pub struct ScanArgs {
    pub sequence: SequenceSource,
    pub params: Vec<SweepParam>,
    pub points: usize,
    /// Overrides every parameter's default half-range.
    pub half_range: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub parameter: SweepParam,
    pub file: String,
    pub center: f64,
    pub half_range: f64,
    pub points: usize,
    pub center_infidelity: f64,
    pub min_infidelity: f64,
    /// Detuning of the grid minimum from the centre.
    pub argmin_offset: f64,
    pub window: Option<Window>,
    pub window_half_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub threshold: f64,
    pub theta: f64,
    pub length: usize,
    pub sweeps: Vec<ScanEntry>,
}

pub fn scan(cfg: &RunConfig, args: &ScanArgs, out: &Path) -> CliResult<ScanSummary> {
    if args.params.is_empty() {
        return Err(CliError::Usage("choose parameters with --param or --all".into()));
    }
    let seq = args.sequence.load(cfg)?;
    ensure_dir(out)?;
    let mut sweeps = Vec::new();
    for &parameter in &args.params {
        let spec = SweepSpec {
            parameter,
            center: parameter.value(&cfg.transmon, cfg.f_clock()),
            half_range: args.half_range.unwrap_or(parameter.default_half_range()),
            points: args.points,
        };
        let r = sweep(&seq, &cfg.transmon, &cfg.shape, &cfg.gate, &spec, None)
            .context(|| format!("sweeping {parameter}"))?;
        let file = format!("sweep_{parameter}.csv");
        write_csv(&out.join(&file), |w| format::write_sweep(w, &r))?;
        let k = r.argmin();
        sweeps.push(ScanEntry {
            parameter,
            file,
            center: spec.center,
            half_range: spec.half_range,
            points: spec.points,
            center_infidelity: r.center_infidelity,
            min_infidelity: r.infidelity[k],
            argmin_offset: r.grid[k] - spec.center,
            window_half_width: r.window.as_ref().map(Window::half_width),
            window: r.window,
        });
    }
    let summary = ScanSummary { threshold: WINDOW_THRESHOLD, theta: cfg.transmon.theta, length: seq.len(), sweeps };
    write_json(&out.join("windows.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- seed

pub const WAVEFORM_SAMPLES_PER_SLOT: usize = 16;

pub fn seed(cfg: &RunConfig, length: usize, out: &Path) -> CliResult<TritSequence> {
    if length == 0 {
        return Err(CliError::Usage("--length must be at least 1".into()));
    }
    let seq = make_seed(&cfg.transmon, cfg.f_clock(), length, &cfg.seed).context(|| "seed".into())?;
    ensure_dir(out)?;
    let seq_path = out.join("sequence.txt");
    let mut w = create(&seq_path)?;
    format::write_sequence(&mut w, &seq).and_then(|_| w.flush()).map_err(|e| CliError::io(&seq_path, e))?;
    let wave = seed_waveform(&cfg.transmon, cfg.f_clock(), length, &cfg.seed, WAVEFORM_SAMPLES_PER_SLOT);
    write_csv(&out.join("seed_waveform.csv"), |w| format::write_seed_waveform(w, &wave))?;
    Ok(seq)
}

// ---------------------------------------------------------------- pulse-compare

#[derive(Clone, Debug)]
pub struct CompareArgs {
    pub tabulated: Option<PathBuf>,
    /// Rectangular width (ns).
    pub width: f64,
    /// Gaussian standard deviation (ns).
    pub sigma: f64,
    /// Integration step (ns).
    pub dt: f64,
}

impl Default for CompareArgs {
    fn default() -> Self {
        Self { tabulated: None, width: 0.004, sigma: 0.001, dt: 1e-5 }
    }
}

/// Agreement level for the final populations of different shapes.
pub const SHAPE_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeEntry {
    pub kind: String,
    pub trace_file: String,
    /// `W_0..W_5` after the third slot.
    pub final_populations: Vec<f64>,
    /// Largest `|W_m - W_m(rectangular)|`.
    pub max_delta_vs_rectangular: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub f01: f64,
    pub theta: f64,
    pub dt: f64,
    pub shapes: Vec<ShapeEntry>,
    /// Final populations of the same train with instantaneous kicks.
    pub delta_final_populations: Vec<f64>,
    pub max_delta_shaped_vs_delta: f64,
    /// Operator-norm distance of the "+" slot propagators at the config's
    /// clock: delta kick vs a narrow rectangle.
    pub rect_width_for_norm: f64,
    pub propagator_norm_delta_vs_rect: f64,
    pub tolerance: f64,
    pub consistent: bool,
}

pub fn pulse_compare(cfg: &RunConfig, args: &CompareArgs, out: &Path) -> CliResult<CompareSummary> {
    let mut shapes = vec![PulseShape::Rectangular { width: args.width }, PulseShape::Gaussian { sigma: args.sigma }];
    if let Some(path) = &args.tabulated {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        shapes.push(format::read_tabulated(file).context(|| format!("reading {}", path.display()))?);
    }
    for s in &shapes {
        s.validate().context(|| format!("{} pulse", s.kind()))?;
    }
    let model = cfg.model()?;
    let runs = three_pulse_comparison(&model, &shapes, args.dt).context(|| "three-pulse run".into())?;
    ensure_dir(out)?;

    let finals: Vec<Vec<f64>> = runs.iter().map(|r| r.trace.final_populations()[..6].to_vec()).collect();
    let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let mut entries = Vec::new();
    for (run, fin) in runs.iter().zip(&finals) {
        let trace_file = format!("trace_{}.csv", run.shape.kind());
        write_csv(&out.join(&trace_file), |w| format::write_trace(w, &run.trace))?;
        entries.push(ShapeEntry {
            kind: run.shape.kind().into(),
            trace_file,
            final_populations: fin.clone(),
            max_delta_vs_rectangular: max_diff(fin, &finals[0]),
        });
    }

    // The same three pulses as kicks, through the slot propagators.
    let f01 = cfg.transmon.f01;
    let theta = std::f64::consts::PI / 6.0;
    let kicks = build_propagators(&model, f01, &PulseShape::Delta, theta).context(|| "delta propagators".into())?;
    let train = TritSequence::parse("+++", f01).context(|| "three-pulse train".into())?;
    let ground = sfq_core::propagation::basis_state(model.dim(), 0);
    let delta_trace = evolve_sequence(&kicks, &train, &ground, None).context(|| "delta train".into())?;
    let delta_final = delta_trace.final_populations()[..6].to_vec();
    let max_delta_shaped_vs_delta = finals.iter().map(|f| max_diff(f, &delta_final)).fold(0.0, f64::max);

    let rect = PulseShape::Rectangular { width: DEFAULT_PULSE_WIDTH };
    let theta_cfg = cfg.transmon.theta;
    let a = build_propagators(&model, cfg.f_clock(), &PulseShape::Delta, theta_cfg).context(|| "delta propagators".into())?;
    let b = build_propagators(&model, cfg.f_clock(), &rect, theta_cfg).context(|| "rectangular propagators".into())?;
    let norm = operator_norm(&(&a.u_plus - &b.u_plus)).max(operator_norm(&(&a.u_minus - &b.u_minus)));

    let consistent = entries.iter().all(|e| e.max_delta_vs_rectangular < SHAPE_TOLERANCE);
    let summary = CompareSummary {
        f01,
        theta,
        dt: args.dt,
        shapes: entries,
        delta_final_populations: delta_final,
        max_delta_shaped_vs_delta,
        rect_width_for_norm: DEFAULT_PULSE_WIDTH,
        propagator_norm_delta_vs_rect: norm,
        tolerance: SHAPE_TOLERANCE,
        consistent,
    };
    write_json(&out.join("compare.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- batch

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub name: String,
    pub config: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infidelity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_time: Option<f64>,
}

/// Config files in `dir` (`*.json`, sorted).
pub fn configs_in(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

/// Optimizes every config into `out/<file stem>/`, in parallel. Returns one
/// entry per config in input order; `batch_summary.json` holds the same.
pub fn batch(configs: &[PathBuf], out: &Path) -> CliResult<Vec<BatchEntry>> {
    if configs.is_empty() {
        return Err(CliError::Usage("no config files given".into()));
    }
    let mut names: Vec<String> =
        configs.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect();
    let mut seen = std::collections::HashSet::new();
    for name in &mut names {
        // Same stem from different directories: keep run directories apart.
        let base = name.clone();
        let mut k = 2;
        while !seen.insert(name.clone()) {
            *name = format!("{base}_{k}");
            k += 1;
        }
    }
    ensure_dir(out)?;
    let entries: Vec<BatchEntry> = configs
        .par_iter()
        .zip(names.par_iter())
        .map(|(path, name)| {
            let mut entry = BatchEntry {
                name: name.clone(),
                config: path.display().to_string(),
                exit_code: 0,
                error: None,
                accepted: None,
                length: None,
                theta_star: None,
                infidelity: None,
                gate_time: None,
            };
            let run = RunConfig::load(path).and_then(|cfg| optimize(&cfg, &out.join(name)));
            match run {
                Ok(r) => {
                    log::info!("{name}: {}", summarize(&r));
                    entry.exit_code = if r.accepted { 0 } else { crate::error::EXIT_FAILED };
                    entry.accepted = Some(r.accepted);
                    entry.length = Some(r.length);
                    entry.theta_star = Some(r.theta_star);
                    entry.infidelity = Some(r.infidelity);
                    entry.gate_time = Some(r.gate_time);
                }
                Err(e) => {
                    log::error!("{name}: {e}");
                    entry.exit_code = e.exit_code();
                    entry.error = Some(e.to_string());
                }
            }
            entry
        })
        .collect();
    write_json(&out.join("batch_summary.json"), &entries)?;
    Ok(entries)
}

/// Worst exit code of a batch: input errors dominate failures.
pub fn batch_exit_code(entries: &[BatchEntry]) -> i32 {
    entries.iter().map(|e| e.exit_code).max().unwrap_or(0)
}
