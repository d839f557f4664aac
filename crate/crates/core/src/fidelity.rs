//! Six-state average gate fidelity, virtual-Z correction, and the optimal
//! single-pulse angle of a fixed sequence.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, CVector, C64, ONE, ZERO};
use crate::model::StaticModel;
use crate::propagation::{PulseShape, SlotBuilder, Trit, TritSequence};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Target rotation `exp(-i (angle/2) sigma_axis)` on the computational pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub axis: Axis,
    pub angle: f64,
}

impl Default for GateSpec {
    fn default() -> Self {
        Self { axis: Axis::Y, angle: PI / 2.0 }
    }
}

pub type Block = [[C64; 2]; 2];

impl GateSpec {
    pub fn new(axis: Axis, angle: f64) -> Self {
        Self { axis, angle }
    }

    pub fn matrix(&self) -> Block {
        let (c, s) = ((self.angle / 2.0).cos(), (self.angle / 2.0).sin());
        match self.axis {
            Axis::X => [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]],
            Axis::Y => [[C64::new(c, 0.0), C64::new(-s, 0.0)], [C64::new(s, 0.0), C64::new(c, 0.0)]],
        }
    }
}

/// Where the free virtual-Z phase is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZCorrection {
    None,
    /// `Z(phi)` after the sequence.
    #[default]
    Post,
    /// `Z(phi) U Z(phi_pre)`.
    PrePost,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub fidelity: f64,
    /// Post-sequence phase `Z(phi) = diag(1, e^{i phi})`, in [-pi, pi].
    pub phi_z: f64,
    /// Pre-sequence phase; zero unless [`ZCorrection::PrePost`].
    pub phi_pre: f64,
    /// `1 - ||P U P||_F^2 / 2`: population lost from the computational pair,
    /// averaged over its two basis inputs.
    pub leakage: f64,
}

impl FidelityResult {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.fidelity
    }
}

/// The six cardinal states `|x+->, |y+->, |z+->` as 2-vectors.
pub fn cardinal_pairs() -> [[C64; 2]; 6] {
    let h = FRAC_1_SQRT_2;
    [
        [C64::new(h, 0.0), C64::new(h, 0.0)],
        [C64::new(h, 0.0), C64::new(-h, 0.0)],
        [C64::new(h, 0.0), C64::new(0.0, h)],
        [C64::new(h, 0.0), C64::new(0.0, -h)],
        [ONE, ZERO],
        [ZERO, ONE],
    ]
}

/// Cardinal states embedded in `dim` levels (zero above level 1).
pub fn cardinal_states(dim: usize) -> Vec<CVector> {
    cardinal_pairs()
        .iter()
        .map(|p| {
            let mut v = CVector::zeros(dim);
            v[0] = p[0];
            v[1] = p[1];
            v
        })
        .collect()
}

fn apply(m: &Block, v: &[C64; 2]) -> [C64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `(c0, c)` with `6 <F>(phi) = c0 + 2 Re(c e^{i phi})` for post-correction
/// `Z(phi)` applied to `block`.
fn harmonic_terms(block: &Block, target: &Block) -> (f64, C64) {
    let mut c0 = 0.0;
    let mut c = ZERO;
    for alpha in cardinal_pairs() {
        let v = apply(block, &alpha);
        let g = apply(target, &alpha);
        let a = v[0].conj() * g[0];
        let b = v[1].conj() * g[1];
        c0 += a.norm_sqr() + b.norm_sqr();
        c += a * b.conj();
    }
    (c0, c)
}

fn fidelity_at(block: &Block, target: &Block, phi: f64) -> f64 {
    let (c0, c) = harmonic_terms(block, target);
    (c0 + 2.0 * (c * C64::from_polar(1.0, phi)).re) / 6.0
}

fn with_pre_phase(block: &Block, phi: f64) -> Block {
    let z = C64::from_polar(1.0, phi);
    [[block[0][0], block[0][1] * z], [block[1][0], block[1][1] * z]]
}

fn best_post(block: &Block, target: &Block) -> (f64, f64) {
    let (c0, c) = harmonic_terms(block, target);
    if c.norm() == 0.0 {
        return (c0 / 6.0, 0.0);
    }
    let phi = -c.arg();
    ((c0 + 2.0 * c.norm()) / 6.0, phi)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (b - a).abs() > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn wrap(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Fidelity of a projected 2x2 block against `gate`.
pub fn block_fidelity(block: &Block, gate: &GateSpec, z: ZCorrection) -> FidelityResult {
    let target = gate.matrix();
    let mass: f64 = block.iter().flatten().map(|z| z.norm_sqr()).sum();
    let leakage = (1.0 - mass / 2.0).max(0.0);
    let (fidelity, phi_z, phi_pre) = match z {
        ZCorrection::None => (fidelity_at(block, &target, 0.0), 0.0, 0.0),
        ZCorrection::Post => {
            let (f, phi) = best_post(block, &target);
            (f, phi, 0.0)
        }
        ZCorrection::PrePost => {
            let eval = |pre: f64| best_post(&with_pre_phase(block, pre), &target).0;
            let n = 72;
            let step = 2.0 * PI / n as f64;
            let best = (0..n)
                .map(|k| -PI + k as f64 * step)
                .map(|p| (p, eval(p)))
                .fold((0.0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            let (pre, _) = golden_max(eval, best.0 - step, best.0 + step, 1e-10);
            let (f, post) = best_post(&with_pre_phase(block, pre), &target);
            (f, post, wrap(pre))
        }
    };
    FidelityResult { fidelity: fidelity.clamp(0.0, 1.0), phi_z: wrap(phi_z), phi_pre, leakage }
}

fn project(u: &CMatrix) -> Block {
    [[u[(0, 0)], u[(0, 1)]], [u[(1, 0)], u[(1, 1)]]]
}

/// Six-state average fidelity of the computational block of `u_full`
/// (eigenbasis) against `gate`, optionally with the best post-sequence
/// virtual Z. The block is not renormalized, so leakage lowers fidelity.
pub fn average_fidelity(u_full: &CMatrix, gate: &GateSpec, optimize_z: bool) -> FidelityResult {
    let z = if optimize_z { ZCorrection::Post } else { ZCorrection::None };
    block_fidelity(&project(u_full), gate, z)
}

pub fn average_fidelity_with(u_full: &CMatrix, gate: &GateSpec, z: ZCorrection) -> FidelityResult {
    block_fidelity(&project(u_full), gate, z)
}

/// Bracket and tolerance of the single-pulse angle search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaSearch {
    /// Bracket `[lo_factor, hi_factor] * hint`.
    pub lo_factor: f64,
    pub hi_factor: f64,
    /// Coarse samples used to locate the maximum before refinement.
    pub grid_points: usize,
    /// Golden-section termination width in rad.
    pub tol: f64,
}

impl Default for ThetaSearch {
    fn default() -> Self {
        Self { lo_factor: 0.5, hi_factor: 2.0, grid_points: 9, tol: 1e-7 }
    }
}

/// Slot operators at one pulse angle, ready for column propagation.
pub struct SlotOps {
    free: Vec<C64>,
    plus: Vec<C64>,
    minus: Vec<C64>,
}

/// Scores sequences quickly: only the two computational columns are
/// propagated, and the delta-pulse generator is diagonalized once.
pub struct GateEvaluator {
    builder: SlotBuilder,
    dim: usize,
    f_clock: f64,
    pub gate: GateSpec,
    pub z: ZCorrection,
    pub search: ThetaSearch,
}

impl GateEvaluator {
    pub fn new(model: &StaticModel, f_clock: f64, shape: &PulseShape, gate: &GateSpec) -> Result<Self> {
        Ok(Self {
            builder: SlotBuilder::new(model, f_clock, shape)?,
            dim: model.dim(),
            f_clock,
            gate: gate.clone(),
            z: ZCorrection::Post,
            search: ThetaSearch::default(),
        })
    }

    pub fn with_z(mut self, z: ZCorrection) -> Self {
        self.z = z;
        self
    }

    pub fn with_search(mut self, search: ThetaSearch) -> Self {
        self.search = search;
        self
    }

    pub fn f_clock(&self) -> f64 {
        self.f_clock
    }

    pub fn slot_ops(&self, theta: f64) -> Result<SlotOps> {
        let rest = self.builder.rest();
        let full = |pulse: CMatrix| -> Vec<C64> {
            let mut m = linalg::to_row_major(&pulse);
            for (i, z) in rest.iter().enumerate() {
                for v in &mut m[i * self.dim..(i + 1) * self.dim] {
                    *v *= z;
                }
            }
            m
        };
        Ok(SlotOps {
            free: self.builder.free_diag(1.0 / self.f_clock),
            plus: full(self.builder.pulse(theta)?),
            minus: full(self.builder.pulse(-theta)?),
        })
    }

    /// Computational block of the sequence unitary.
    pub fn block(&self, ops: &SlotOps, seq: &TritSequence) -> Block {
        let d = self.dim;
        let mut cols = [vec![ZERO; d], vec![ZERO; d]];
        cols[0][0] = ONE;
        cols[1][1] = ONE;
        let mut scratch = vec![ZERO; d];
        for &s in seq.symbols() {
            for col in cols.iter_mut() {
                match s {
                    Trit::Zero => {
                        for (x, f) in col.iter_mut().zip(&ops.free) {
                            *x *= f;
                        }
                    }
                    Trit::Plus | Trit::Minus => {
                        let m = if s == Trit::Plus { &ops.plus } else { &ops.minus };
                        linalg::matvec_into(m, col, &mut scratch);
                        col.copy_from_slice(&scratch);
                    }
                }
            }
        }
        [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]
    }

    pub fn fidelity_with(&self, ops: &SlotOps, seq: &TritSequence) -> FidelityResult {
        block_fidelity(&self.block(ops, seq), &self.gate, self.z)
    }

    pub fn fidelity(&self, seq: &TritSequence, theta: f64) -> Result<FidelityResult> {
        self.check(seq)?;
        Ok(self.fidelity_with(&self.slot_ops(theta)?, seq))
    }

    fn check(&self, seq: &TritSequence) -> Result<()> {
        if (seq.f_clock() - self.f_clock).abs() > 1e-12 * self.f_clock {
            return Err(Error::ClockMismatch { sequence_ghz: seq.f_clock(), propagators_ghz: self.f_clock });
        }
        Ok(())
    }

    /// Maximizes fidelity over the single-pulse angle: a coarse grid on the
    /// bracket around `hint` (widened once if the best point is on an edge),
    /// then golden-section refinement between the best point's neighbours.
    pub fn optimal_theta(&self, seq: &TritSequence, hint: f64) -> Result<(f64, FidelityResult)> {
        self.check(seq)?;
        if seq.pulse_count() == 0 {
            return Err(Error::EmptySequence);
        }
        if !(hint > 0.0 && hint.is_finite()) {
            return Err(Error::invalid("theta_hint", format!("must be positive, got {hint}")));
        }
        let eval = |theta: f64| -> Result<f64> { Ok(self.fidelity(seq, theta)?.fidelity) };
        let n = self.search.grid_points.max(3);
        let (mut lo, mut hi) = (hint * self.search.lo_factor, hint * self.search.hi_factor);
        for attempt in 0..2 {
            let grid: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
            let values = grid.iter().map(|&t| eval(t)).collect::<Result<Vec<_>>>()?;
            let mut best = 0;
            for (k, v) in values.iter().enumerate() {
                if *v > values[best] {
                    best = k;
                }
            }
            if best == 0 || best == n - 1 {
                if attempt == 0 {
                    lo /= 2.0;
                    hi *= 2.0;
                    continue;
                }
                return Err(Error::NoBracket { lo, hi });
            }
            // Errors cannot occur inside the bracket once the grid evaluated.
            let f = |t: f64| eval(t).unwrap_or(f64::NEG_INFINITY);
            let (mut theta, mut value) = golden_max(&f, grid[best - 1], grid[best + 1], self.search.tol);
            if value < values[best] {
                (theta, value) = (grid[best], values[best]);
            }
            // Parabolic polish: golden section alone leaves ~tol^2 in F.
            let h = 10.0 * self.search.tol;
            let (fm, fp) = (f(theta - h), f(theta + h));
            let curv = fp - 2.0 * value + fm;
            if curv < 0.0 {
                let vertex = theta - 0.5 * h * (fp - fm) / curv;
                if (vertex - theta).abs() < h && f(vertex) > value {
                    theta = vertex;
                }
            }
            return Ok((theta, self.fidelity(seq, theta)?));
        }
        unreachable!("bracket loop returns on its second pass")
    }
}

/// One-shot form of [`GateEvaluator::optimal_theta`].
pub fn optimal_theta(
    seq: &TritSequence,
    model: &StaticModel,
    shape: &PulseShape,
    gate: &GateSpec,
    theta_hint: f64,
) -> Result<(f64, FidelityResult)> {
    GateEvaluator::new(model, seq.f_clock(), shape, gate)?.optimal_theta(seq, theta_hint)
}

/// Embeds a 2x2 block into a `dim x dim` unitary (identity above).
pub fn embed_block(block: &Block, dim: usize) -> CMatrix {
    let mut u = CMatrix::identity(dim, dim);
    for i in 0..2 {
        for j in 0..2 {
            u[(i, j)] = block[i][j];
        }
    }
    u
}

/// `Z(phi)` on the computational pair.
pub fn virtual_z(phi: f64) -> Block {
    [[ONE, ZERO], [ZERO, C64::from_polar(1.0, phi)]]
}
