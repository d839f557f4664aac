//! Infidelity versus detuning of one parameter around a fixed solution.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fidelity::{block_fidelity, virtual_z, GateEvaluator, GateSpec, ZCorrection};
use crate::model::{build_static, TransmonParams};
use crate::propagation::{PulseShape, TritSequence};
use crate::{Error, Result};

/// Infidelity level that defines a tolerance window.
pub const WINDOW_THRESHOLD: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    F01,
    Mu,
    FClock,
    Theta,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [SweepParam::Theta, SweepParam::F01, SweepParam::Mu, SweepParam::FClock];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::F01 => "f01",
            SweepParam::Mu => "mu",
            SweepParam::FClock => "f_clock",
            SweepParam::Theta => "theta",
        }
    }

    /// Default half-range around a Table-1-like solution (GHz or rad).
    pub fn default_half_range(self) -> f64 {
        match self {
            SweepParam::F01 => 0.02,
            SweepParam::Mu => 0.1,
            SweepParam::FClock => 0.4,
            SweepParam::Theta => 0.012,
        }
    }

    pub fn value(self, p: &TransmonParams, f_clock: f64) -> f64 {
        match self {
            SweepParam::F01 => p.f01,
            SweepParam::Mu => p.mu_mag,
            SweepParam::FClock => f_clock,
            SweepParam::Theta => p.theta,
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid("parameter", format!("unknown sweep parameter {s:?} (f01, mu, f_clock, theta)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub center: f64,
    pub half_range: f64,
    /// Odd, so the centre is sampled.
    pub points: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 3 || self.points % 2 == 0 {
            return Err(Error::invalid("points", format!("must be odd and at least 3, got {}", self.points)));
        }
        if !(self.half_range > 0.0 && self.half_range.is_finite()) {
            return Err(Error::invalid("half_range", format!("must be positive, got {}", self.half_range)));
        }
        if !self.center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.points;
        let h = (n - 1) / 2;
        (0..n).map(|k| self.center + self.half_range * (k as f64 - h as f64) / h as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    /// The interval reached the edge of the grid on the low / high side.
    pub clipped_lo: bool,
    pub clipped_hi: bool,
}

impl Window {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.width()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub grid: Vec<f64>,
    pub infidelity: Vec<f64>,
    pub center_infidelity: f64,
    /// Interval around the grid minimum where infidelity stays below
    /// [`WINDOW_THRESHOLD`]; `None` if even the minimum is above it.
    pub window: Option<Window>,
}

impl SweepResult {
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (k, v) in self.infidelity.iter().enumerate() {
            if *v < self.infidelity[best] {
                best = k;
            }
        }
        best
    }
}

/// Crossing of `threshold` between grid points `a` and `b`.
fn crossing(x: &[f64], y: &[f64], a: usize, b: usize, threshold: f64) -> f64 {
    let t = (threshold - y[a]) / (y[b] - y[a]);
    x[a] + t * (x[b] - x[a])
}

/// Contiguous sub-threshold interval around the minimum of `y`, with
/// endpoints linearly interpolated between grid points.
pub fn extract_window(x: &[f64], y: &[f64], threshold: f64) -> Option<Window> {
    let best = (0..y.len()).min_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    if !(y[best] < threshold) {
        return None;
    }
    let mut l = best;
    while l > 0 && y[l - 1] < threshold {
        l -= 1;
    }
    let mut r = best;
    while r + 1 < y.len() && y[r + 1] < threshold {
        r += 1;
    }
    let (lo, clipped_lo) = if l == 0 { (x[0], true) } else { (crossing(x, y, l - 1, l, threshold), false) };
    let (hi, clipped_hi) = if r + 1 == y.len() { (x[r], true) } else { (crossing(x, y, r, r + 1, threshold), false) };
    Some(Window { lo, hi, clipped_lo, clipped_hi })
}

/// Evaluates `seq` over a detuning grid of one parameter. `base.theta` is
/// the pulse angle used everywhere except in theta sweeps. The virtual Z is
/// re-optimized per point unless `frozen_phi` pins it.
pub fn sweep(
    seq: &TritSequence,
    base: &TransmonParams,
    shape: &PulseShape,
    gate: &GateSpec,
    spec: &SweepSpec,
    frozen_phi: Option<f64>,
) -> Result<SweepResult> {
    spec.validate()?;
    let grid = spec.grid();
    let point = |v: f64| -> Result<f64> {
        let mut p = base.clone();
        let mut f_clock = seq.f_clock();
        match spec.parameter {
            SweepParam::F01 => p.f01 = v,
            SweepParam::Mu => p.mu_mag = v,
            SweepParam::FClock => f_clock = v,
            SweepParam::Theta => p.theta = v,
        }
        if p.theta < 0.0 || p.mu_mag < 0.0 {
            return Err(Error::invalid(spec.parameter.name(), format!("detuned value {v} is negative")));
        }
        let model = build_static(&p)?;
        let seq = seq.with_clock(f_clock)?;
        let z = if frozen_phi.is_some() { ZCorrection::None } else { ZCorrection::Post };
        let ev = GateEvaluator::new(&model, f_clock, shape, gate)?.with_z(z);
        let ops = ev.slot_ops(p.theta)?;
        let mut block = ev.block(&ops, &seq);
        if let Some(phi) = frozen_phi {
            let zb = virtual_z(phi);
            block = [[block[0][0], block[0][1]], [zb[1][1] * block[1][0], zb[1][1] * block[1][1]]];
        }
        Ok(block_fidelity(&block, gate, z).infidelity().max(0.0))
    };
    let infidelity = grid.par_iter().map(|&v| point(v)).collect::<Result<Vec<_>>>()?;
    let center_infidelity = infidelity[grid.len() / 2];
    let window = extract_window(&grid, &infidelity, WINDOW_THRESHOLD);
    Ok(SweepResult { parameter: spec.parameter, grid, infidelity, center_infidelity, window })
}
