//! Threshold-seeded greedy search over ternary pulse sequences.
//!
//! A seed is made by thresholding a sinusoid at the qubit frequency sampled on
//! the clock grid. Each generation scores all `2M` single-symbol mutations
//! (each at its own best pulse angle by default) and keeps the best child
//! while it improves. The outer loop walks the sequence length until the
//! optimal angle matches the hardware angle.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fidelity::{FidelityResult, GateEvaluator, GateSpec, SlotOps, ThetaSearch, ZCorrection};
use crate::model::{build_static, StaticModel, TransmonParams};
use crate::propagation::{PulseShape, Trit, TritSequence};
use crate::{Error, Result};

/// Thresholded-sinusoid seed parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    /// Seed sinusoid amplitude (GHz); only the ratio to the threshold matters.
    pub eps0: f64,
    /// Threshold as a fraction of `eps0`, in (0, 1].
    pub a_th: f64,
    /// Carrier phase (rad). `-pi/2` makes the first pulses negative, which
    /// rotate about +Y in this sign convention.
    pub phase0: f64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { eps0: 0.052, a_th: 0.5, phase0: -PI / 2.0 }
    }
}

impl SeedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return Err(Error::invalid("eps0", format!("must be positive, got {}", self.eps0)));
        }
        if !(self.a_th > 0.0 && self.a_th <= 1.0) {
            return Err(Error::invalid("a_th", format!("must lie in (0, 1], got {}", self.a_th)));
        }
        if !self.phase0.is_finite() {
            return Err(Error::invalid("phase0", "must be finite"));
        }
        Ok(())
    }

    pub fn with_threshold(&self, a_th: f64) -> Self {
        Self { a_th, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaMode {
    /// Every candidate is scored at its own optimal angle.
    #[default]
    PerCandidate,
    /// Candidates are scored at the parent's angle; the winner is re-optimized.
    PerGeneration,
    /// Everything is scored at `theta_desired`; no angle search in the loop.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Hardware pulse angle to match (rad). Defaults to the transmon's `theta`.
    pub theta_desired: Option<f64>,
    pub angle_tol: f64,
    pub max_generations: usize,
    pub beam_width: usize,
    /// Number of evolve runs the length search may spend.
    pub max_length_steps: usize,
    pub theta_mode: ThetaMode,
    /// Starting length; estimated from the seed's pulse efficiency if absent.
    pub initial_length: Option<usize>,
    pub z_correction: ZCorrection,
    pub theta_search: ThetaSearch,
    /// Score candidates on the rayon pool. Results are identical either way.
    pub parallel: bool,
    /// When no single mutation improves, also try changing two symbols at
    /// most this many slots apart (0 disables). Lets a pulse move by a slot
    /// without passing through a worse intermediate.
    pub pair_window: usize,
    /// Extra acceptance bar on `1 - F` at the matched angle.
    pub max_infidelity: Option<f64>,
    /// Gains at or below this are treated as ties with the parent (rounding
    /// noise near F = 1 would otherwise keep the loop moving).
    pub min_improvement: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            theta_desired: None,
            angle_tol: 1e-4,
            max_generations: 1000,
            beam_width: 1,
            max_length_steps: 40,
            theta_mode: ThetaMode::PerCandidate,
            initial_length: None,
            z_correction: ZCorrection::Post,
            theta_search: ThetaSearch::default(),
            parallel: true,
            max_infidelity: None,
            pair_window: 0,
            min_improvement: 1e-14,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_improvement >= 0.0) {
            return Err(Error::invalid("min_improvement", "must be non-negative"));
        }
        if !(self.angle_tol > 0.0) {
            return Err(Error::invalid("angle_tol", format!("must be positive, got {}", self.angle_tol)));
        }
        if self.beam_width == 0 {
            return Err(Error::invalid("beam_width", "must be at least 1"));
        }
        if self.max_length_steps == 0 {
            return Err(Error::invalid("max_length_steps", "must be at least 1"));
        }
        if let Some(t) = self.theta_desired {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("theta_desired", format!("must be positive, got {t}")));
            }
        }
        if self.initial_length == Some(0) {
            return Err(Error::invalid("initial_length", "must be at least 1"));
        }
        let s = &self.theta_search;
        if !(s.lo_factor > 0.0 && s.lo_factor < 1.0 && s.hi_factor > 1.0 && s.tol > 0.0 && s.grid_points >= 3) {
            return Err(Error::invalid("theta_search", "need 0 < lo_factor < 1 < hi_factor, tol > 0, grid_points >= 3"));
        }
        Ok(())
    }

    pub fn target(&self, p: &TransmonParams) -> f64 {
        self.theta_desired.unwrap_or(p.theta)
    }
}

fn seed_signal(p: &TransmonParams, cfg: &SeedConfig, t: f64) -> f64 {
    cfg.eps0 * (2.0 * PI * p.f01 * t + cfg.phase0).sin()
}

/// Samples the seed sinusoid at slot starts and thresholds it (strictly).
pub fn make_seed(p: &TransmonParams, f_clock: f64, m: usize, cfg: &SeedConfig) -> Result<TritSequence> {
    cfg.validate()?;
    if !(f_clock > p.f01) {
        return Err(Error::invalid("f_clock", format!("seed needs f_clock > f01 ({} GHz), got {f_clock}", p.f01)));
    }
    let th = cfg.a_th * cfg.eps0;
    let symbols = (0..m)
        .map(|k| {
            let s = seed_signal(p, cfg, k as f64 / f_clock);
            if s > th {
                Trit::Plus
            } else if s < -th {
                Trit::Minus
            } else {
                Trit::Zero
            }
        })
        .collect();
    TritSequence::new(symbols, f_clock)
}

/// `(t_ns, signal, threshold)` on a fine grid covering `m` slots, for plotting.
pub fn seed_waveform(p: &TransmonParams, f_clock: f64, m: usize, cfg: &SeedConfig, per_slot: usize) -> Vec<(f64, f64, f64)> {
    let n = m * per_slot.max(1);
    (0..n)
        .map(|k| {
            let t = k as f64 / (f_clock * per_slot.max(1) as f64);
            (t, seed_signal(p, cfg, t), cfg.a_th * cfg.eps0)
        })
        .collect()
}

/// Effective number of full-strength pulses: each pulse counts by the
/// projection of its rotation axis (in the qubit frame) on the drive axis.
fn overlap_weight(seq: &TritSequence, f01: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (k, t) in seq.symbols().iter().enumerate() {
        let phase = 2.0 * PI * f01 * k as f64 / seq.f_clock();
        let v = t.value() as f64;
        c += v * phase.cos();
        s += v * phase.sin();
    }
    c.hypot(s)
}

/// First-call bracket centre for the angle search: the gate angle divided by
/// the overlap-weighted pulse count.
pub fn theta_hint(seq: &TritSequence, f01: f64, gate: &GateSpec) -> f64 {
    let w = overlap_weight(seq, f01).max(0.5).max(0.25 * seq.pulse_count() as f64);
    gate.angle.abs() / w
}

/// Length at which the seed's overlap-weighted pulse count matches
/// `angle / theta_desired`.
pub fn estimate_length(p: &TransmonParams, f_clock: f64, seed: &SeedConfig, gate: &GateSpec, theta_desired: f64) -> Result<usize> {
    let probe = 1000;
    let w = overlap_weight(&make_seed(p, f_clock, probe, seed)?, p.f01) / probe as f64;
    if w <= 0.0 {
        return Err(Error::invalid("a_th", "seed contains no pulses"));
    }
    Ok(((gate.angle.abs() / (theta_desired * w)).round() as usize).max(1))
}

/// All `2M` single-symbol mutations: position ascending, then replacement
/// symbol ascending.
pub fn mutations(seq: &TritSequence) -> Vec<TritSequence> {
    mutation_moves(seq).into_iter().map(|(i, t)| seq.with_symbol(i, t)).collect()
}

fn mutation_moves(seq: &TritSequence) -> Vec<(usize, Trit)> {
    seq.symbols()
        .iter()
        .enumerate()
        .flat_map(|(i, &cur)| Trit::ALL.into_iter().filter(move |&t| t != cur).map(move |t| (i, t)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub seq: TritSequence,
    pub theta: f64,
    pub result: FidelityResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOutcome {
    pub best: Scored,
    /// Best fidelity per generation, starting with the seed's.
    pub history: Vec<f64>,
    pub generations: usize,
    /// True when `max_generations` ran out while children still improved.
    pub capped: bool,
    pub evaluations: usize,
}

/// Shared scoring state for one optimization.
pub struct Search {
    ev: GateEvaluator,
    f01: f64,
    cfg: OptimizerConfig,
    evaluations: AtomicUsize,
}

impl Search {
    pub fn new(model: &StaticModel, f_clock: f64, shape: &PulseShape, gate: &GateSpec, cfg: &OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let ev = GateEvaluator::new(model, f_clock, shape, gate)?
            .with_z(cfg.z_correction)
            .with_search(cfg.theta_search.clone());
        Ok(Self { ev, f01: model.params.f01, cfg: cfg.clone(), evaluations: AtomicUsize::new(0) })
    }

    pub fn evaluator(&self) -> &GateEvaluator {
        &self.ev
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Scores a sequence at its optimal angle. `None` when the angle search
    /// finds no interior maximum (or the sequence has no pulses).
    pub fn score(&self, seq: &TritSequence, hint: f64) -> Result<Option<Scored>> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match self.ev.optimal_theta(seq, hint) {
            Ok((theta, result)) => Ok(Some(Scored { seq: seq.clone(), theta, result })),
            Err(Error::NoBracket { .. } | Error::EmptySequence) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn fixed_theta(&self) -> Result<Option<f64>> {
        match (self.cfg.theta_mode, self.cfg.theta_desired) {
            (ThetaMode::Fixed, Some(t)) => Ok(Some(t)),
            (ThetaMode::Fixed, None) => Err(Error::invalid("theta_desired", "required when theta_mode is fixed")),
            _ => Ok(None),
        }
    }

    fn score_at(&self, seq: &TritSequence, theta: f64, ops: &SlotOps) -> Scored {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        Scored { seq: seq.clone(), theta, result: self.ev.fidelity_with(ops, seq) }
    }

    fn map<T: Send, U: Send>(&self, items: Vec<T>, f: impl Fn(T) -> U + Sync + Send) -> Vec<U> {
        if self.cfg.parallel {
            items.into_par_iter().map(f).collect()
        } else {
            items.into_iter().map(f).collect()
        }
    }

    /// Greedy evolution from `seed` until no child beats the best parent.
    pub fn evolve(&self, seed: &TritSequence) -> Result<EvolveOutcome> {
        let start = self.evaluations();
        let first = match self.fixed_theta()? {
            Some(theta) => self.score_at(seed, theta, &self.ev.slot_ops(theta)?),
            None => {
                let hint = theta_hint(seed, self.f01, &self.ev.gate);
                self.evaluations.fetch_add(1, Ordering::Relaxed);
                let (theta, result) = self.ev.optimal_theta(seed, hint)?;
                Scored { seq: seed.clone(), theta, result }
            }
        };
        let width = self.cfg.beam_width;
        let mut beam = vec![first];
        let mut history = vec![beam[0].result.fidelity];
        let mut generations = 0;
        let mut capped = true;
        while generations < self.cfg.max_generations {
            generations += 1;
            let mut ranked = self.ranked(&beam, false)?;
            if !self.improves(&ranked, &beam) && self.cfg.pair_window > 0 {
                ranked = self.ranked(&beam, true)?;
            }
            if !self.improves(&ranked, &beam) {
                capped = false;
                break;
            }
            let top = &ranked[0].1;
            debug!("generation {generations}: F = {:.10} theta = {:.6}", top.result.fidelity, top.theta);
            history.push(top.result.fidelity);
            beam = ranked.into_iter().take(width).map(|(_, s)| s).collect();
        }
        Ok(EvolveOutcome {
            best: beam.swap_remove(0),
            history,
            generations,
            capped,
            evaluations: self.evaluations() - start,
        })
    }

    fn improves(&self, ranked: &[(usize, Scored)], beam: &[Scored]) -> bool {
        ranked.first().is_some_and(|(_, top)| top.result.fidelity > beam[0].result.fidelity + self.cfg.min_improvement)
    }

    /// Children sorted best-first; equal fidelities keep enumeration order.
    fn ranked(&self, beam: &[Scored], pairs: bool) -> Result<Vec<(usize, Scored)>> {
        let mut ranked: Vec<(usize, Scored)> = self.generation(beam, pairs)?.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.result.fidelity.total_cmp(&a.1.result.fidelity).then(a.0.cmp(&b.0)));
        Ok(ranked)
    }

    /// Scores every distinct mutation of every beam member, in enumeration
    /// order (beam rank, position, symbol; for pairs, first then second).
    fn generation(&self, beam: &[Scored], pairs: bool) -> Result<Vec<Scored>> {
        let mut seen: HashSet<String> = beam.iter().map(|s| s.seq.to_string()).collect();
        let mut jobs = Vec::new();
        for (b, parent) in beam.iter().enumerate() {
            let moves = mutation_moves(&parent.seq);
            for (k, &(i, t)) in moves.iter().enumerate() {
                let child = parent.seq.with_symbol(i, t);
                if !pairs {
                    if seen.insert(child.to_string()) {
                        jobs.push((b, child));
                    }
                    continue;
                }
                for &(j, u) in &moves[k + 1..] {
                    if j == i {
                        continue;
                    }
                    if j - i > self.cfg.pair_window {
                        break;
                    }
                    let both = child.with_symbol(j, u);
                    if seen.insert(both.to_string()) {
                        jobs.push((b, both));
                    }
                }
            }
        }
        let scored: Vec<Result<Option<Scored>>> = match self.cfg.theta_mode {
            ThetaMode::PerCandidate => self.map(jobs, |(b, child)| self.score(&child, beam[b].theta)),
            ThetaMode::Fixed => {
                let ops = self.ev.slot_ops(beam[0].theta)?;
                self.map(jobs, |(_, child)| Ok(Some(self.score_at(&child, beam[0].theta, &ops))))
            }
            ThetaMode::PerGeneration => {
                let ops = beam.iter().map(|p| self.ev.slot_ops(p.theta)).collect::<Result<Vec<_>>>()?;
                let fixed: Vec<(usize, Scored)> = self.map(jobs, |(b, child)| {
                    self.evaluations.fetch_add(1, Ordering::Relaxed);
                    let result = self.ev.fidelity_with(&ops[b], &child);
                    (b, Scored { seq: child, theta: beam[b].theta, result })
                });
                let mut order: Vec<usize> = (0..fixed.len()).collect();
                order.sort_by(|&x, &y| fixed[y].1.result.fidelity.total_cmp(&fixed[x].1.result.fidelity).then(x.cmp(&y)));
                // Only the provisional winners get their angle re-optimized.
                order.truncate(beam.len());
                order.sort_unstable();
                order.into_iter().map(|k| self.score(&fixed[k].1.seq, fixed[k].1.theta)).collect()
            }
        };
        let mut out = Vec::new();
        for s in scored {
            if let Some(s) = s? {
                out.push(s);
            }
        }
        Ok(out)
    }
}

/// One-shot evolution from `seed`.
pub fn evolve(
    seed: &TritSequence,
    model: &StaticModel,
    shape: &PulseShape,
    gate: &GateSpec,
    cfg: &OptimizerConfig,
) -> Result<EvolveOutcome> {
    Search::new(model, seed.f_clock(), shape, gate, cfg)?.evolve(seed)
}

/// Two-point linear interpolation of the seed threshold (fractions of
/// `eps0`) hitting `theta_desired`, clamped to (0, 1].
pub fn threshold_interpolation(a_min: f64, a_max: f64, theta_min: f64, theta_max: f64, theta_desired: f64) -> Result<f64> {
    if theta_max == theta_min {
        return Err(Error::DegenerateInterpolation { theta: theta_min });
    }
    let a = a_min + (theta_desired - theta_min) * (a_max - a_min) / (theta_max - theta_min);
    Ok(a.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Lowest threshold fraction used for interpolation.
pub const A_MIN: f64 = 0.01;

/// Evolves seeds thresholded at `A_MIN` and at the highest threshold that
/// still leaves a pulse (at most 1), then interpolates for `theta_desired`.
pub fn interpolate_threshold(search: &Search, p: &TransmonParams, m: usize, seed: &SeedConfig, theta_desired: f64) -> Result<f64> {
    let f_clock = search.ev.f_clock();
    let lo = search.evolve(&make_seed(p, f_clock, m, &seed.with_threshold(A_MIN))?)?;
    let a_max = highest_threshold(p, f_clock, m, seed);
    let hi = search.evolve(&make_seed(p, f_clock, m, &seed.with_threshold(a_max))?)?;
    threshold_interpolation(A_MIN, a_max, lo.best.theta, hi.best.theta, theta_desired)
}

fn highest_threshold(p: &TransmonParams, f_clock: f64, m: usize, seed: &SeedConfig) -> f64 {
    // The strict threshold at the sampled peak would drop every pulse.
    let peak = (0..m)
        .map(|k| (seed_signal(p, seed, k as f64 / f_clock) / seed.eps0).abs())
        .fold(0.0, f64::max);
    (0.98 * peak).clamp(A_MIN, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthTrial {
    pub length: usize,
    /// How the seed was made: `threshold`, `interpolated` or `reuse`.
    pub seed: String,
    /// Seed threshold; absent for reused seeds.
    pub a_th: Option<f64>,
    pub theta_star: f64,
    pub infidelity: f64,
    pub generations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_seq: TritSequence,
    pub length: usize,
    pub theta_star: f64,
    pub theta_desired: f64,
    /// At `theta_star`.
    pub infidelity: f64,
    /// The same sequence at exactly `theta_desired`.
    pub infidelity_at_desired: f64,
    pub phi_z: f64,
    pub leakage: f64,
    pub gate_time: f64,
    /// Angle within `angle_tol` (and infidelity within `max_infidelity`, if set).
    pub accepted: bool,
    /// The reported run hit `max_generations`.
    pub generations_capped: bool,
    pub fidelity_history: Vec<f64>,
    pub length_history: Vec<LengthTrial>,
    pub evaluations: usize,
}

impl OptimizationReport {
    /// `Err(LengthSearchExhausted)` unless accepted.
    pub fn into_result(self, tol: f64) -> Result<Self> {
        if self.accepted {
            Ok(self)
        } else {
            Err(Error::LengthSearchExhausted { desired: self.theta_desired, tol, steps: self.length_history.len() })
        }
    }
}

struct Run {
    outcome: EvolveOutcome,
    /// Optimal angle and fidelity of the evolved sequence.
    theta: f64,
    result: FidelityResult,
    trial: LengthTrial,
}

struct LengthSearch<'a> {
    search: Search,
    p: &'a TransmonParams,
    seed: &'a SeedConfig,
    target: f64,
    tol: f64,
    max_infidelity: Option<f64>,
    runs: Vec<Run>,
    seen: HashSet<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Verdict {
    Accept,
    /// Angle too large, or matched with too much error: add slots.
    Longer,
    Shorter,
}

impl LengthSearch<'_> {
    fn budget_left(&self) -> bool {
        self.runs.len() < self.search.cfg.max_length_steps
    }

    fn verdict(&self, theta: f64, infidelity: f64) -> Verdict {
        if !theta.is_finite() {
            return Verdict::Longer;
        }
        if (theta - self.target).abs() <= self.tol {
            match self.max_infidelity {
                Some(max) if infidelity > max => Verdict::Longer,
                _ => Verdict::Accept,
            }
        } else if theta > self.target {
            Verdict::Longer
        } else {
            Verdict::Shorter
        }
    }

    fn accepted(&self) -> Option<usize> {
        self.runs.iter().position(|r| self.verdict(r.theta, r.result.infidelity()) == Verdict::Accept)
    }

    /// Evolves `seed_seq` unless it was already tried; `None` when skipped.
    fn run(&mut self, seed_seq: TritSequence, source: &str, a_th: Option<f64>) -> Result<Option<Verdict>> {
        if seed_seq.pulse_count() == 0 || !self.seen.insert(seed_seq.to_string()) {
            return Ok(None);
        }
        let outcome = self.search.evolve(&seed_seq)?;
        let (theta, result) = if self.search.cfg.theta_mode == ThetaMode::Fixed {
            match self.search.ev.optimal_theta(&outcome.best.seq, self.target) {
                Ok(x) => x,
                Err(Error::NoBracket { .. }) => (f64::NAN, outcome.best.result),
                Err(e) => return Err(e),
            }
        } else {
            (outcome.best.theta, outcome.best.result)
        };
        let trial = LengthTrial {
            length: seed_seq.len(),
            seed: source.to_string(),
            a_th,
            theta_star: theta,
            infidelity: result.infidelity(),
            generations: outcome.generations,
        };
        info!(
            "M = {} ({source}, a_th = {a_th:?}): theta* = {theta:.6}, 1-F = {:.3e}, {} generations",
            trial.length, trial.infidelity, trial.generations
        );
        let v = self.verdict(theta, result.infidelity());
        self.runs.push(Run { outcome, theta, result, trial });
        Ok(Some(v))
    }

    fn threshold_run(&mut self, m: usize, a_th: f64, source: &str) -> Result<Option<Verdict>> {
        let seq = make_seed(self.p, self.search.ev.f_clock(), m, &self.seed.with_threshold(a_th))?;
        self.run(seq, source, Some(a_th))
    }

    /// Walks M by one slot at a time until accepted or the verdicts of two
    /// neighbouring lengths point at each other.
    fn walk(&mut self, m0: usize) -> Result<Option<(usize, usize)>> {
        let mut m = m0;
        let mut wants: BTreeMap<usize, Verdict> = BTreeMap::new();
        while self.budget_left() {
            let v = match self.threshold_run(m, self.seed.a_th, "threshold")? {
                Some(v) => v,
                // an empty or repeated seed: keep walking towards longer sequences
                None => Verdict::Longer,
            };
            if v == Verdict::Accept {
                return Ok(None);
            }
            wants.insert(m, v);
            let next = if v == Verdict::Longer { m + 1 } else { m - 1 };
            if next == 0 {
                return Ok(None);
            }
            if let Some(&w) = wants.get(&next) {
                if w != v {
                    return Ok(Some((m.min(next), m.max(next))));
                }
            }
            m = next;
        }
        Ok(None)
    }

    fn distance(&self, m: usize) -> f64 {
        self.runs
            .iter()
            .filter(|r| r.trial.length == m)
            .map(|r| (r.theta - self.target).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Breaks a 2-cycle: interpolated thresholds at both lengths, then reuse
    /// of earlier good sequences, a threshold scan, and finally lengths
    /// further out on both sides.
    fn refine(&mut self, (a, b): (usize, usize)) -> Result<()> {
        let order = if self.distance(a) <= self.distance(b) { [a, b] } else { [b, a] };
        macro_rules! attempt {
            ($e:expr) => {
                if !self.budget_left() {
                    return Ok(());
                }
                if $e? == Some(Verdict::Accept) {
                    return Ok(());
                }
            };
        }
        for m in order {
            if !self.budget_left() {
                return Ok(());
            }
            let a_opt = match interpolate_threshold(&self.search, self.p, m, self.seed, self.target) {
                Ok(x) => x,
                Err(Error::DegenerateInterpolation { .. }) => continue,
                Err(e) => return Err(e),
            };
            attempt!(self.threshold_run(m, a_opt, "interpolated"));
        }
        let mut pool: Vec<(f64, TritSequence)> =
            self.runs.iter().map(|r| (r.result.infidelity(), r.outcome.best.seq.clone())).collect();
        pool.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, seq) in pool.into_iter().take(3) {
            for m in order {
                attempt!(self.run(resize(&seq, m), "reuse", None));
            }
        }
        for k in 1..=3 {
            for a_th in [self.seed.a_th - 0.1 * k as f64, self.seed.a_th + 0.1 * k as f64] {
                if a_th > A_MIN && a_th < 1.0 {
                    for m in order {
                        attempt!(self.threshold_run(m, a_th, "threshold"));
                    }
                }
            }
        }
        for k in 1.. {
            attempt!(self.threshold_run(b + k, self.seed.a_th, "threshold"));
            if a > k {
                attempt!(self.threshold_run(a - k, self.seed.a_th, "threshold"));
            }
        }
        Ok(())
    }
}

/// Trims trailing slots or pads with free slots.
fn resize(seq: &TritSequence, m: usize) -> TritSequence {
    if m >= seq.len() {
        seq.padded(m - seq.len())
    } else {
        TritSequence::new(seq.symbols()[..m].to_vec(), seq.f_clock()).expect("m >= 1")
    }
}

/// Full search: walk the sequence length (longer when `theta*` is too large),
/// and when neighbouring lengths straddle the target, re-seed with an
/// interpolated threshold, then with earlier good sequences.
///
/// `max_infidelity`, when set, is an additional acceptance bar. A report is
/// returned in every case; `accepted` is false when the step budget ran out,
/// and the report then describes the best run (matched angle first, then
/// lowest infidelity; otherwise closest angle).
pub fn optimize_for_theta(
    p: &TransmonParams,
    f_clock: f64,
    shape: &PulseShape,
    gate: &GateSpec,
    seed: &SeedConfig,
    cfg: &OptimizerConfig,
) -> Result<OptimizationReport> {
    p.validate()?;
    seed.validate()?;
    let target = cfg.target(p);
    let cfg = OptimizerConfig { theta_desired: Some(target), ..cfg.clone() };
    cfg.validate()?;
    let model = build_static(p)?;
    let search = Search::new(&model, f_clock, shape, gate, &cfg)?;
    let m0 = match cfg.initial_length {
        Some(m) => m,
        None => estimate_length(p, f_clock, seed, gate, target)?,
    };
    let mut ls = LengthSearch {
        search,
        p,
        seed,
        target,
        tol: cfg.angle_tol,
        max_infidelity: cfg.max_infidelity,
        runs: Vec::new(),
        seen: HashSet::new(),
    };
    if let Some(pair) = ls.walk(m0)? {
        ls.refine(pair)?;
    }
    if ls.runs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let pick = ls.accepted().unwrap_or_else(|| {
        let key = |r: &Run| {
            let matched = (r.theta - target).abs() <= cfg.angle_tol;
            (!matched, if matched { r.result.infidelity() } else { (r.theta - target).abs() })
        };
        (0..ls.runs.len())
            .min_by(|&x, &y| {
                let (kx, ky) = (key(&ls.runs[x]), key(&ls.runs[y]));
                kx.0.cmp(&ky.0).then(kx.1.total_cmp(&ky.1))
            })
            .expect("at least one run")
    });
    let run = &ls.runs[pick];
    let seq = &run.outcome.best.seq;
    let at_desired = ls.search.ev.fidelity(seq, target)?;
    Ok(OptimizationReport {
        best_seq: seq.clone(),
        length: seq.len(),
        theta_star: run.theta,
        theta_desired: target,
        infidelity: run.result.infidelity().max(0.0),
        infidelity_at_desired: at_desired.infidelity().max(0.0),
        phi_z: run.result.phi_z,
        leakage: run.result.leakage,
        gate_time: seq.gate_time(),
        accepted: ls.verdict(run.theta, run.result.infidelity()) == Verdict::Accept,
        generations_capped: run.outcome.capped,
        fidelity_history: run.outcome.history.clone(),
        length_history: ls.runs.iter().map(|r| r.trial.clone()).collect(),
        evaluations: ls.search.evaluations(),
    })
}
