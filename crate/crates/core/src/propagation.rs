//! Slot propagators, sequence evolution and the fine-step integrator.
//!
//! A sequence of `M` trits occupies `M` clock slots of length `T_g = 1/f_clock`.
//! Each pulse sits at the start of its slot and the remainder of the slot is
//! free evolution, so a full slot is `F(T_g - tau_p) P_s` with `P_s` the
//! pulse-region propagator. All matrices live in the eigenbasis of `H0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, CVector, HermitianEigen, C64, I, ZERO};
use crate::model::StaticModel;
use crate::{Error, Result};

/// Default rectangular pulse width in ns (0.01 ps).
pub const DEFAULT_PULSE_WIDTH: f64 = 1e-5;
/// Largest step accepted by [`integrate_shaped`].
pub const MAX_INTEGRATION_STEP: f64 = 1e-4;
/// Number of levels exported in population traces.
pub const TRACE_LEVELS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trit {
    Minus,
    Zero,
    Plus,
}

impl Trit {
    pub const ALL: [Trit; 3] = [Trit::Minus, Trit::Zero, Trit::Plus];

    pub fn value(self) -> i8 {
        match self {
            Trit::Minus => -1,
            Trit::Zero => 0,
            Trit::Plus => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Trit::Minus),
            0 => Some(Trit::Zero),
            1 => Some(Trit::Plus),
            _ => None,
        }
    }

    pub fn negated(self) -> Self {
        match self {
            Trit::Minus => Trit::Plus,
            Trit::Zero => Trit::Zero,
            Trit::Plus => Trit::Minus,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Trit::Minus => '-',
            Trit::Zero => '0',
            Trit::Plus => '+',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '-' => Some(Trit::Minus),
            '0' => Some(Trit::Zero),
            '+' => Some(Trit::Plus),
            _ => None,
        }
    }
}

/// Ordered trit symbols, one per clock slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SequenceRepr", try_from = "SequenceRepr")]
pub struct TritSequence {
    symbols: Vec<Trit>,
    /// Clock frequency in GHz.
    f_clock: f64,
}

/// Serialized form: symbols as one `+-0` string.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRepr {
    symbols: String,
    f_clock: f64,
}

impl From<TritSequence> for SequenceRepr {
    fn from(seq: TritSequence) -> Self {
        Self { symbols: seq.to_string(), f_clock: seq.f_clock }
    }
}

impl TryFrom<SequenceRepr> for TritSequence {
    type Error = Error;

    fn try_from(r: SequenceRepr) -> Result<Self> {
        Self::parse(&r.symbols, r.f_clock)
    }
}

impl TritSequence {
    pub fn new(symbols: Vec<Trit>, f_clock: f64) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("symbols", "a sequence needs at least one slot"));
        }
        if !(f_clock > 0.0 && f_clock.is_finite()) {
            return Err(Error::invalid("f_clock", format!("must be positive, got {f_clock}")));
        }
        Ok(Self { symbols, f_clock })
    }

    pub fn from_values(values: &[i64], f_clock: f64) -> Result<Self> {
        let symbols = values
            .iter()
            .map(|&v| Trit::from_value(v).ok_or_else(|| Error::invalid("symbols", format!("{v} is not a trit"))))
            .collect::<Result<_>>()?;
        Self::new(symbols, f_clock)
    }

    /// Parses the compact `+-0` form.
    pub fn parse(text: &str, f_clock: f64) -> Result<Self> {
        let symbols = text
            .trim()
            .chars()
            .map(|c| Trit::from_char(c).ok_or_else(|| Error::invalid("symbols", format!("unexpected character {c:?}"))))
            .collect::<Result<_>>()?;
        Self::new(symbols, f_clock)
    }

    pub fn symbols(&self) -> &[Trit] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn f_clock(&self) -> f64 {
        self.f_clock
    }

    /// Slot period in ns.
    pub fn slot_period(&self) -> f64 {
        1.0 / self.f_clock
    }

    /// `(M - 1) T_g` in ns: from the first pulse to the last.
    pub fn gate_time(&self) -> f64 {
        (self.symbols.len() - 1) as f64 / self.f_clock
    }

    pub fn pulse_count(&self) -> usize {
        self.symbols.iter().filter(|&&s| s != Trit::Zero).count()
    }

    pub fn negated(&self) -> Self {
        Self { symbols: self.symbols.iter().map(|s| s.negated()).collect(), f_clock: self.f_clock }
    }

    pub fn with_symbol(&self, index: usize, symbol: Trit) -> Self {
        let mut symbols = self.symbols.clone();
        symbols[index] = symbol;
        Self { symbols, f_clock: self.f_clock }
    }

    pub fn with_clock(&self, f_clock: f64) -> Result<Self> {
        Self::new(self.symbols.clone(), f_clock)
    }

    /// Appends `n` empty slots.
    pub fn padded(&self, n: usize) -> Self {
        let mut symbols = self.symbols.clone();
        symbols.extend(std::iter::repeat_n(Trit::Zero, n));
        Self { symbols, f_clock: self.f_clock }
    }
}

impl fmt::Display for TritSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.symbols {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

/// Time profile of a single SFQ pulse. Every shape is normalized to unit
/// area; a pulse of rotation angle `theta` has `eps(t) = (theta/2) g(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PulseShape {
    /// Instantaneous kick.
    Delta,
    /// Constant amplitude over `width` ns.
    Rectangular { width: f64 },
    /// Gaussian of standard deviation `sigma` ns, truncated at +-4 sigma and
    /// centred `4 sigma` after the slot start.
    Gaussian { sigma: f64 },
    /// Linearly interpolated samples `(time ns, amplitude)`; rescaled to unit
    /// area and shifted to start at the slot start.
    Tabulated { samples: Vec<(f64, f64)> },
}

impl Default for PulseShape {
    fn default() -> Self {
        PulseShape::Rectangular { width: DEFAULT_PULSE_WIDTH }
    }
}

const GAUSS_HALF_WIDTH: f64 = 4.0;
/// erf(4 / sqrt 2): mass of a unit Gaussian within +-4 sigma.
const ERF_GAUSS_HALF_WIDTH: f64 = 0.999_936_657_516_333_6;
const SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    /// Right limit: intervals closed on the left.
    After,
    /// Left limit: intervals closed on the right.
    Before,
}

impl PulseShape {
    pub fn kind(&self) -> &'static str {
        match self {
            PulseShape::Delta => "delta",
            PulseShape::Rectangular { .. } => "rectangular",
            PulseShape::Gaussian { .. } => "gaussian",
            PulseShape::Tabulated { .. } => "tabulated",
        }
    }

    /// Duration of the nonzero part in ns.
    pub fn support(&self) -> f64 {
        match self {
            PulseShape::Delta => 0.0,
            PulseShape::Rectangular { width } => *width,
            PulseShape::Gaussian { sigma } => 2.0 * GAUSS_HALF_WIDTH * sigma,
            PulseShape::Tabulated { samples } => match (samples.first(), samples.last()) {
                (Some(a), Some(b)) => b.0 - a.0,
                _ => 0.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PulseShape::Delta => Ok(()),
            PulseShape::Rectangular { width } if *width > 0.0 && width.is_finite() => Ok(()),
            PulseShape::Rectangular { width } => Err(Error::invalid("width", format!("must be positive, got {width}"))),
            PulseShape::Gaussian { sigma } if *sigma > 0.0 && sigma.is_finite() => Ok(()),
            PulseShape::Gaussian { sigma } => Err(Error::invalid("sigma", format!("must be positive, got {sigma}"))),
            PulseShape::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::invalid("samples", "need at least two samples"));
                }
                if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::invalid("samples", "times must be strictly increasing"));
                }
                if samples.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
                    return Err(Error::invalid("samples", "non-finite sample"));
                }
                if !(self.raw_area().abs() > 0.0) {
                    return Err(Error::invalid("samples", "pulse has zero area"));
                }
                Ok(())
            }
        }
    }

    fn raw_area(&self) -> f64 {
        match self {
            PulseShape::Tabulated { samples } => {
                samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
            }
            PulseShape::Gaussian { sigma } => sigma * (2.0 * PI).sqrt() * ERF_GAUSS_HALF_WIDTH,
            PulseShape::Rectangular { width } => *width,
            PulseShape::Delta => 1.0,
        }
    }

    /// Unit-area envelope at offset `tau` from the pulse start.
    #[cfg(test)]
    pub(crate) fn envelope(&self, tau: f64, side: Side) -> f64 {
        self.envelope_with_area(tau, side, self.raw_area())
    }

    pub(crate) fn envelope_with_area(&self, tau: f64, side: Side, area: f64) -> f64 {
        let support = self.support();
        let inside = match side {
            Side::After => tau >= 0.0 && tau < support * (1.0 - SNAP),
            Side::Before => tau > support * SNAP && tau <= support * (1.0 + SNAP),
        };
        match self {
            PulseShape::Delta => 0.0,
            PulseShape::Rectangular { width } => {
                if inside {
                    1.0 / width
                } else {
                    0.0
                }
            }
            _ if !(0.0..=support).contains(&tau) => 0.0,
            PulseShape::Gaussian { sigma } => {
                let x = (tau - GAUSS_HALF_WIDTH * sigma) / sigma;
                (-0.5 * x * x).exp() / area
            }
            PulseShape::Tabulated { samples } => {
                let t = samples[0].0 + tau;
                let k = samples.partition_point(|s| s.0 <= t).clamp(1, samples.len() - 1);
                let (a, b) = (samples[k - 1], samples[k]);
                let v = a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0);
                v / area
            }
        }
    }
}

/// Which basis population traces are reported in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationBasis {
    #[default]
    Eigen,
    Fock,
}

/// Cached slot propagators at fixed parameters, in the eigenbasis of `H0`.
#[derive(Clone, Debug)]
pub struct PropagatorSet {
    pub u_free: CMatrix,
    pub u_plus: CMatrix,
    pub u_minus: CMatrix,
    /// Propagators over the pulse region only.
    pub pulse_plus: CMatrix,
    pub pulse_minus: CMatrix,
    pub f_clock: f64,
    pub theta: f64,
    pub params_hash: u64,
    eigvecs: CMatrix,
}

/// Builds the pulse-region propagators `(P_+, P_-)` and the free
/// propagator over the rest of the slot, all in the eigenbasis.
pub(crate) struct SlotBuilder {
    energies: Vec<f64>,
    drive: CMatrix,
    /// `i (a - a^dag)` in the eigenbasis, diagonalized once.
    kick: HermitianEigen,
    shape: PulseShape,
    slot: f64,
}

impl SlotBuilder {
    pub(crate) fn new(model: &StaticModel, f_clock: f64, shape: &PulseShape) -> Result<Self> {
        if !(f_clock > 0.0 && f_clock.is_finite()) {
            return Err(Error::invalid("f_clock", format!("must be positive, got {f_clock}")));
        }
        shape.validate()?;
        let slot = 1.0 / f_clock;
        if shape.support() >= slot {
            return Err(Error::PulseTooWide { support_ns: shape.support(), slot_ns: slot });
        }
        let kick = HermitianEigen::new(&(model.pulse_generator() * I))?;
        Ok(Self {
            energies: model.eigvals.clone(),
            drive: model.drive_eigen(),
            kick,
            shape: shape.clone(),
            slot,
        })
    }

    pub(crate) fn free_diag(&self, t: f64) -> Vec<C64> {
        self.energies.iter().map(|e| C64::from_polar(1.0, -e * t)).collect()
    }

    fn driven(&self, eps: f64, t: f64) -> Result<CMatrix> {
        let mut h = &self.drive * C64::new(eps, 0.0);
        for (k, e) in self.energies.iter().enumerate() {
            h[(k, k)] += e;
        }
        linalg::expm_hermitian(&h, t)
    }

    /// Pulse-region propagator for a pulse of signed angle `angle`.
    pub(crate) fn pulse(&self, angle: f64) -> Result<CMatrix> {
        if !angle.is_finite() {
            return Err(Error::NonFiniteDrive);
        }
        match &self.shape {
            // exp((angle/2)(a - a^dag)) = exp(-i (angle/2) [i (a - a^dag)])
            PulseShape::Delta => Ok(self.kick.propagator(angle / 2.0)),
            PulseShape::Rectangular { width } => {
                let eps = angle / (2.0 * width);
                if !eps.is_finite() {
                    return Err(Error::NonFiniteDrive);
                }
                self.driven(eps, *width)
            }
            shape => {
                // Exponential midpoint rule over fine sub-steps.
                let support = shape.support();
                let n = 400;
                let h = support / n as f64;
                let area = shape.raw_area();
                let mut u = CMatrix::identity(self.energies.len(), self.energies.len());
                for k in 0..n {
                    let eps = 0.5 * angle * shape.envelope_with_area((k as f64 + 0.5) * h, Side::After, area);
                    u = self.driven(eps, h)? * u;
                }
                Ok(u)
            }
        }
    }

    pub(crate) fn rest(&self) -> Vec<C64> {
        self.free_diag(self.slot - self.shape.support())
    }
}

fn apply_diag_left(d: &[C64], m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (i, z) in d.iter().enumerate() {
        for j in 0..m.ncols() {
            out[(i, j)] *= z;
        }
    }
    out
}

fn fnv1a(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

pub(crate) fn fingerprint(model: &StaticModel, f_clock: f64, shape: &PulseShape, theta: f64) -> u64 {
    let p = &model.params;
    let mut words = vec![p.f01.to_bits(), p.mu_mag.to_bits(), p.dim as u64, f_clock.to_bits(), theta.to_bits()];
    match shape {
        PulseShape::Delta => words.push(0),
        PulseShape::Rectangular { width } => words.extend([1, width.to_bits()]),
        PulseShape::Gaussian { sigma } => words.extend([2, sigma.to_bits()]),
        PulseShape::Tabulated { samples } => {
            words.push(3);
            for (t, a) in samples {
                words.extend([t.to_bits(), a.to_bits()]);
            }
        }
    }
    fnv1a(&words)
}

/// Builds the three slot propagators for `theta` at clock `f_clock`.
pub fn build_propagators(model: &StaticModel, f_clock: f64, shape: &PulseShape, theta: f64) -> Result<PropagatorSet> {
    if !theta.is_finite() {
        return Err(Error::NonFiniteDrive);
    }
    if theta < 0.0 {
        return Err(Error::invalid("theta", format!("must be non-negative, got {theta}")));
    }
    let builder = SlotBuilder::new(model, f_clock, shape)?;
    let pulse_plus = builder.pulse(theta)?;
    let pulse_minus = builder.pulse(-theta)?;
    let rest = builder.rest();
    let u_free = CMatrix::from_diagonal(&CVector::from_vec(builder.free_diag(builder.slot)));
    Ok(PropagatorSet {
        u_plus: apply_diag_left(&rest, &pulse_plus),
        u_minus: apply_diag_left(&rest, &pulse_minus),
        u_free,
        pulse_plus,
        pulse_minus,
        f_clock,
        theta,
        params_hash: fingerprint(model, f_clock, shape, theta),
        eigvecs: model.eigvecs.clone(),
    })
}

impl PropagatorSet {
    pub fn dim(&self) -> usize {
        self.u_free.nrows()
    }

    pub fn slot(&self, t: Trit) -> &CMatrix {
        match t {
            Trit::Minus => &self.u_minus,
            Trit::Zero => &self.u_free,
            Trit::Plus => &self.u_plus,
        }
    }

    fn check_clock(&self, seq: &TritSequence) -> Result<()> {
        if (seq.f_clock() - self.f_clock).abs() > 1e-12 * self.f_clock {
            return Err(Error::ClockMismatch { sequence_ghz: seq.f_clock(), propagators_ghz: self.f_clock });
        }
        Ok(())
    }

    fn populations(&self, psi: &CVector, basis: PopulationBasis) -> Vec<f64> {
        match basis {
            PopulationBasis::Eigen => psi.iter().map(|z| z.norm_sqr()).collect(),
            PopulationBasis::Fock => (&self.eigvecs * psi).iter().map(|z| z.norm_sqr()).collect(),
        }
    }
}

/// Populations over time of one evolution.
#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    /// Sample times in ns.
    pub times: Vec<f64>,
    /// `populations[i][m]` is `W_m` at `times[i]`, for every retained level.
    pub populations: Vec<Vec<f64>>,
    pub basis: PopulationBasis,
    /// Final amplitudes in the eigenbasis.
    pub final_state: CVector,
    pub final_unitary: Option<CMatrix>,
}

impl EvolutionTrace {
    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn max_population(&self, level: usize) -> f64 {
        self.populations.iter().map(|w| w.get(level).copied().unwrap_or(0.0)).fold(0.0, f64::max)
    }

    pub fn final_population(&self, level: usize) -> f64 {
        self.final_populations().get(level).copied().unwrap_or(0.0)
    }

    /// Largest `|sum_m W_m - 1|` over the recorded samples.
    pub fn max_norm_defect(&self) -> f64 {
        self.populations.iter().map(|w| (w.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn check_normalized(initial: &CVector, dim: usize) -> Result<()> {
    if initial.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, actual: initial.len() });
    }
    let norm = initial.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized { norm });
    }
    Ok(())
}

/// Applies the slot propagators in order. With `record` set, populations
/// are stored at `t = 0` and after every slot.
pub fn evolve_sequence(
    props: &PropagatorSet,
    seq: &TritSequence,
    initial: &CVector,
    record: Option<PopulationBasis>,
) -> Result<EvolutionTrace> {
    props.check_clock(seq)?;
    check_normalized(initial, props.dim())?;
    let basis = record.unwrap_or_default();
    let mut psi = initial.clone();
    let mut times = Vec::new();
    let mut populations = Vec::new();
    if record.is_some() {
        times.push(0.0);
        populations.push(props.populations(&psi, basis));
    }
    let period = seq.slot_period();
    for (k, &s) in seq.symbols().iter().enumerate() {
        psi = props.slot(s) * psi;
        if record.is_some() {
            times.push((k + 1) as f64 * period);
            populations.push(props.populations(&psi, basis));
        }
    }
    if record.is_none() {
        times.push(seq.len() as f64 * period);
        populations.push(props.populations(&psi, basis));
    }
    Ok(EvolutionTrace { times, populations, basis, final_state: psi, final_unitary: None })
}

/// Time-ordered product of the slot propagators.
pub fn sequence_unitary(props: &PropagatorSet, seq: &TritSequence) -> Result<CMatrix> {
    props.check_clock(seq)?;
    let d = props.dim();
    let mut u = CMatrix::identity(d, d);
    for &s in seq.symbols() {
        u = props.slot(s) * u;
    }
    Ok(u)
}

/// A drive `eps(t)` in rad/ns sampled for a fixed-step fourth-order
/// integrator: for step `n` the values at the step start (right limit),
/// midpoint, and step end (left limit).
#[derive(Clone, Debug)]
pub struct SampledDrive {
    pub dt: f64,
    pub samples: Vec<[f64; 3]>,
}

impl SampledDrive {
    pub fn from_fn(dt: f64, steps: usize, eps: impl Fn(f64) -> f64) -> Self {
        let samples = (0..steps)
            .map(|n| {
                let t = n as f64 * dt;
                [eps(t), eps(t + 0.5 * dt), eps(t + dt)]
            })
            .collect();
        Self { dt, samples }
    }

    pub fn zero(dt: f64, steps: usize) -> Self {
        Self { dt, samples: vec![[0.0; 3]; steps] }
    }

    /// Pulse train of `seq` with each pulse at its slot start, covering all
    /// `M` slots. Rectangular edges that fall on step boundaries are exact.
    pub fn from_sequence(seq: &TritSequence, shape: &PulseShape, theta: f64, dt: f64) -> Result<Self> {
        if matches!(shape, PulseShape::Delta) {
            return Err(Error::invalid("shape", "a delta pulse cannot be sampled on a time grid"));
        }
        shape.validate()?;
        let period = seq.slot_period();
        if shape.support() >= period {
            return Err(Error::PulseTooWide { support_ns: shape.support(), slot_ns: period });
        }
        let total = seq.len() as f64 * period;
        let steps = (total / dt - SNAP * total / dt).ceil() as usize;
        let area = shape.raw_area();
        let eps = |t: f64, side: Side| -> f64 {
            let x = t / period;
            let mut k = x.round();
            if (x - k).abs() > SNAP * x.max(1.0) {
                k = x.floor();
            } else if side == Side::Before {
                // Exactly on a slot boundary, the left limit belongs to the previous slot.
                k -= 1.0;
            }
            if k < 0.0 || k as usize >= seq.len() {
                return 0.0;
            }
            let sign = seq.symbols()[k as usize].value() as f64;
            if sign == 0.0 {
                return 0.0;
            }
            let mut tau = t - k * period;
            if tau.abs() < SNAP * period {
                tau = 0.0;
            }
            0.5 * theta * sign * shape.envelope_with_area(tau, side, area)
        };
        let samples = (0..steps)
            .map(|n| {
                let t = n as f64 * dt;
                [eps(t, Side::After), eps(t + 0.5 * dt, Side::After), eps(t + dt, Side::Before)]
            })
            .collect();
        Ok(Self { dt, samples })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }
}

/// Fixed-step fourth-order Runge-Kutta integration of
/// `i d/dt psi = (H0 + eps(t) D) psi` in the eigenbasis. Populations are
/// recorded every `record_every` steps (and at the end).
pub fn integrate_shaped(
    model: &StaticModel,
    drive: &SampledDrive,
    initial: &CVector,
    record_every: Option<usize>,
    basis: PopulationBasis,
) -> Result<EvolutionTrace> {
    let dt = drive.dt;
    if !(dt > 0.0) || dt > MAX_INTEGRATION_STEP * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt_ns: dt, reason: format!("must be in (0, {MAX_INTEGRATION_STEP}] ns") });
    }
    let d = model.dim();
    check_normalized(initial, d)?;
    let energies = &model.eigvals;
    let drive_op = linalg::to_row_major(&model.drive_eigen());

    let rhs = |psi: &[C64], eps: f64, out: &mut [C64]| {
        linalg::matvec_into(&drive_op, psi, out);
        for k in 0..d {
            // -i (E psi + eps D psi)
            let z = psi[k] * energies[k] + out[k] * eps;
            out[k] = C64::new(z.im, -z.re);
        }
    };

    let pops = |psi: &[C64]| -> Vec<f64> {
        match basis {
            PopulationBasis::Eigen => psi.iter().map(|z| z.norm_sqr()).collect(),
            PopulationBasis::Fock => {
                let v = CVector::from_column_slice(psi);
                (&model.eigvecs * v).iter().map(|z| z.norm_sqr()).collect()
            }
        }
    };

    let mut psi: Vec<C64> = initial.iter().copied().collect();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; d], vec![ZERO; d], vec![ZERO; d], vec![ZERO; d], vec![ZERO; d]);
    let mut times = vec![0.0];
    let mut populations = vec![pops(&psi)];
    for (n, [e0, em, e1]) in drive.samples.iter().copied().enumerate() {
        rhs(&psi, e0, &mut k1);
        for k in 0..d {
            tmp[k] = psi[k] + k1[k] * (0.5 * dt);
        }
        rhs(&tmp, em, &mut k2);
        for k in 0..d {
            tmp[k] = psi[k] + k2[k] * (0.5 * dt);
        }
        rhs(&tmp, em, &mut k3);
        for k in 0..d {
            tmp[k] = psi[k] + k3[k] * dt;
        }
        rhs(&tmp, e1, &mut k4);
        for k in 0..d {
            psi[k] += (k1[k] + (k2[k] + k3[k]) * 2.0 + k4[k]) * (dt / 6.0);
        }
        let last = n + 1 == drive.samples.len();
        if record_every.is_some_and(|r| (n + 1) % r.max(1) == 0) || last {
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-7 {
                return Err(Error::StepTooLarge {
                    dt_ns: dt,
                    reason: format!("norm drifted to {norm} by t = {} ns", (n + 1) as f64 * dt),
                });
            }
            if record_every.is_some() || last {
                times.push((n + 1) as f64 * dt);
                populations.push(pops(&psi));
            }
        }
    }
    if record_every.is_none() {
        // keep only the endpoints
        times = vec![0.0, drive.duration()];
        populations = vec![populations[0].clone(), populations.last().cloned().unwrap_or_default()];
    }
    Ok(EvolutionTrace {
        times,
        populations,
        basis,
        final_state: CVector::from_vec(psi),
        final_unitary: None,
    })
}

/// Basis vector `|k>` in dimension `dim`.
pub fn basis_state(dim: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[k] = C64::new(1.0, 0.0);
    v
}

/// Final populations of a resonant three-pulse pi/2 rotation under each
/// given shape, integrated on a `dt` grid from the ground state.
#[derive(Clone, Debug)]
pub struct ShapeRun {
    pub shape: PulseShape,
    pub trace: EvolutionTrace,
}

/// Three equal pulses at `f_clock = f01` with `theta = pi/6` each: the
/// shape-comparison experiment. Returns one trace per shape.
pub fn three_pulse_comparison(model: &StaticModel, shapes: &[PulseShape], dt: f64) -> Result<Vec<ShapeRun>> {
    let f = model.params.f01;
    let seq = TritSequence::new(vec![Trit::Plus; 3], f)?;
    let theta = PI / 6.0;
    let record = ((0.002 / dt).round() as usize).max(1);
    shapes
        .iter()
        .map(|shape| {
            let drive = SampledDrive::from_sequence(&seq, shape, theta, dt)?;
            let trace =
                integrate_shaped(model, &drive, &basis_state(model.dim(), 0), Some(record), PopulationBasis::Eigen)?;
            Ok(ShapeRun { shape: shape.clone(), trace })
        })
        .collect()
}

impl FromStr for TritSequence {
    type Err = Error;

    /// Parses `+-0` text without a clock; the clock is set to 1 GHz and is
    /// expected to be replaced with [`TritSequence::with_clock`].
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 1.0)
    }
}
