//! Truncated transmon model.
//!
//! The static Hamiltonian in the Fock basis is
//!
//! ```text
//! H0 = w_h a^dag a + k (a + a^dag)^4,      k = -2 pi mu / 12
//! ```
//!
//! with the drive coupling through `D = i (a - a^dag)`. The quartic
//! coefficient is negative (`-E_C/12` to leading order). Both coefficients
//! are solved for so that the dressed spectrum has its 0 -> 1 gap at
//! `2 pi f01` and anharmonicity `-2 pi mu`: `f01` is the transition a pulse
//! train has to be resonant with and `mu` is the level-2 detuning that sets
//! leakage. Frequencies are configured in GHz and converted to rad/ns
//! internally (hbar = 1, times in ns).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, HermitianEigen, C64, I, ZERO};
use crate::{Error, Result};

/// Magnetic flux quantum h/2e in Wb.
pub const FLUX_QUANTUM: f64 = 2.067_833_848e-15;
/// Reduced Planck constant in J s.
pub const HBAR: f64 = 1.054_571_817e-34;

const FEMTO: f64 = 1e-15;
const GIGA: f64 = 1e9;

pub const DEFAULT_DIM: usize = 10;
/// Smallest truncation accepted by [`TransmonParams::validate`]: levels
/// 0..=5 are reported, so six must exist.
pub const MIN_DIM: usize = 6;

/// Circuit-level description of a capacitively driven transmon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitParams {
    /// Josephson energy E_J/h in GHz.
    pub e_j: f64,
    /// Charging energy E_C/h in GHz.
    pub e_c: f64,
    /// Drive coupling capacitance in fF.
    pub c_c: f64,
    /// Shunt capacitance in fF.
    pub c_q: f64,
    /// Effective offset charge. Carried for completeness; the drive enters
    /// through the pulse amplitude instead.
    #[serde(default)]
    pub n_g: f64,
}

impl CircuitParams {
    /// Harmonic (plasma) frequency sqrt(8 E_J E_C) in GHz.
    pub fn plasma_frequency(&self) -> f64 {
        (8.0 * self.e_j * self.e_c).sqrt()
    }

    /// Single-pulse Bloch rotation `C_C Phi0 sqrt(w_p / (2 hbar C_Q))`.
    pub fn pulse_angle(&self) -> f64 {
        pulse_angle(self.c_c, self.c_q, self.plasma_frequency())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_j", self.e_j), ("e_c", self.e_c), ("c_c", self.c_c), ("c_q", self.c_q)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.e_j / self.e_c < 20.0 {
            log::warn!(
                "E_J/E_C = {:.2} is below the transmon regime (>= 20); the quartic model is inaccurate",
                self.e_j / self.e_c
            );
        }
        Ok(())
    }
}

/// `C_C Phi0 sqrt(w_p / (2 hbar C_Q))` with capacitances in fF and `f_p` in GHz.
pub fn pulse_angle(c_c_ff: f64, c_q_ff: f64, f_p_ghz: f64) -> f64 {
    let omega = 2.0 * PI * f_p_ghz * GIGA;
    c_c_ff * FEMTO * FLUX_QUANTUM * (omega / (2.0 * HBAR * c_q_ff * FEMTO)).sqrt()
}

/// Coupling capacitance (fF) that produces `theta` for a given shunt
/// capacitance and plasma frequency. Inverse of [`pulse_angle`] in `c_c`.
pub fn coupling_for_angle(theta: f64, c_q_ff: f64, f_p_ghz: f64) -> f64 {
    theta / pulse_angle(1.0, c_q_ff, f_p_ghz)
}

/// Effective single-qubit model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonParams {
    /// Qubit 0 -> 1 transition frequency in GHz.
    pub f01: f64,
    /// Anharmonicity magnitude in GHz.
    pub mu_mag: f64,
    /// Single-pulse rotation angle in rad.
    pub theta: f64,
    /// Number of Fock levels kept.
    #[serde(default = "default_dim")]
    pub dim: usize,
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

impl TransmonParams {
    pub fn new(f01: f64, mu_mag: f64, theta: f64) -> Self {
        Self { f01, mu_mag, theta, dim: DEFAULT_DIM }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// Checks the physical operating range. The numerical routines accept a
    /// wider range (harmonic `mu_mag = 0`, two-level truncations) so that the
    /// analytic limits stay testable; configuration input goes through here.
    pub fn validate(&self) -> Result<()> {
        if !(1.0..=20.0).contains(&self.f01) {
            return Err(Error::invalid("f01", format!("{} GHz outside [1, 20]", self.f01)));
        }
        if !(self.mu_mag > 0.0 && self.mu_mag.is_finite()) {
            return Err(Error::invalid("mu_mag", format!("must be positive, got {}", self.mu_mag)));
        }
        if !(self.theta > 0.0 && self.theta < 0.2) {
            return Err(Error::invalid("theta", format!("{} rad outside (0, 0.2)", self.theta)));
        }
        if self.dim < MIN_DIM {
            return Err(Error::invalid("dim", format!("{} < {MIN_DIM}", self.dim)));
        }
        Ok(())
    }

    pub(crate) fn check_numeric(&self) -> Result<()> {
        if !(self.f01 > 0.0 && self.f01.is_finite()) {
            return Err(Error::invalid("f01", format!("must be positive, got {}", self.f01)));
        }
        if !(self.mu_mag >= 0.0 && self.mu_mag.is_finite()) {
            return Err(Error::invalid("mu_mag", format!("must be non-negative, got {}", self.mu_mag)));
        }
        if self.dim < 2 {
            return Err(Error::invalid("dim", "at least two levels are required"));
        }
        Ok(())
    }

    /// Angular qubit frequency in rad/ns.
    pub fn omega01(&self) -> f64 {
        2.0 * PI * self.f01
    }
}

/// Circuit parameters to effective parameters: `f01 = sqrt(8 E_J E_C) - E_C`,
/// `mu = E_C`, and the single-pulse angle from the coupling capacitance.
pub fn derive_effective(circ: &CircuitParams) -> Result<TransmonParams> {
    circ.validate()?;
    Ok(TransmonParams {
        f01: circ.plasma_frequency() - circ.e_c,
        mu_mag: circ.e_c,
        theta: circ.pulse_angle(),
        dim: DEFAULT_DIM,
    })
}

/// Inverse of [`derive_effective`] for the energies: `(E_J, E_C)`.
pub fn circuit_energies(p: &TransmonParams) -> (f64, f64) {
    let e_c = p.mu_mag;
    let f_p = p.f01 + p.mu_mag;
    (f_p * f_p / (8.0 * e_c), e_c)
}

/// Undriven Hamiltonian, drive operator and eigenbasis.
#[derive(Clone, Debug)]
pub struct StaticModel {
    pub params: TransmonParams,
    /// Harmonic coefficient in rad/ns after pinning.
    pub omega_harmonic: f64,
    /// Coefficient of `(a + a^dag)^4` in rad/ns (non-positive).
    pub quartic: f64,
    /// Undriven Hamiltonian in the Fock basis, rad/ns.
    pub h0: CMatrix,
    /// `i (a - a^dag)` in the Fock basis, scaled by [`Self::drive_scale`].
    pub drive_op: CMatrix,
    /// `1 / |<0|i (a - a^dag)|1>|` between dressed states: a lone pulse of
    /// angle theta then rotates the qubit pair by exactly theta.
    pub drive_scale: f64,
    /// Ascending eigenvalues of `h0`, rad/ns.
    pub eigvals: Vec<f64>,
    /// Eigenvectors of `h0` as columns.
    pub eigvecs: CMatrix,
}

pub(crate) fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub(crate) fn number_op(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO })
}

/// `(a + a^dag)^4` restricted to the lowest `dim` Fock states. Built in a
/// space four levels larger so the retained block carries the exact matrix
/// elements rather than those of a power of the truncated operator.
pub(crate) fn quartic_op(dim: usize) -> CMatrix {
    let big = dim + 4;
    let a = annihilation(big);
    let x = &a + a.adjoint();
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    x4.view((0, 0), (dim, dim)).into_owned()
}

pub fn drive_operator(dim: usize) -> CMatrix {
    let a = annihilation(dim);
    (&a - a.adjoint()) * I
}

fn hamiltonian(omega_h: f64, quartic: f64, n: &CMatrix, x4: &CMatrix) -> CMatrix {
    n * C64::new(omega_h, 0.0) + x4 * C64::new(quartic, 0.0)
}

/// Builds the undriven Hamiltonian and diagonalizes it.
///
/// `(w_h, k)` are solved by Newton iteration (Hellmann-Feynman gradients) so
/// that the dressed spectrum has `E1 - E0 = 2 pi f01` and
/// `(E2 - E1) - (E1 - E0) = -2 pi mu` exactly. With fewer than three levels
/// only the gap is pinned and `k = -2 pi mu / 12`.
pub fn build_static(p: &TransmonParams) -> Result<StaticModel> {
    p.check_numeric()?;
    let dim = p.dim;
    let n = number_op(dim);
    let x4 = quartic_op(dim);
    let target_gap = p.omega01();
    let target_anh = -2.0 * PI * p.mu_mag;
    let pin_anh = dim >= 3 && p.mu_mag > 0.0;
    let mut quartic = -2.0 * PI * p.mu_mag / 12.0;
    let mut omega_h = 2.0 * PI * (p.f01 + p.mu_mag);

    let mut h0 = hamiltonian(omega_h, quartic, &n, &x4);
    let mut eig = HermitianEigen::new(&h0)?;
    if p.mu_mag > 0.0 {
        let mut converged = false;
        for _ in 0..100 {
            let e = &eig.values;
            let r_gap = (e[1] - e[0]) - target_gap;
            let r_anh = if pin_anh { (e[2] - 2.0 * e[1] + e[0]) - target_anh } else { 0.0 };
            if r_gap.abs() <= 1e-13 * target_gap && r_anh.abs() <= 1e-12 * target_gap {
                converged = true;
                break;
            }
            let expect = |op: &CMatrix, k: usize| -> f64 {
                let v = eig.vectors.column(k);
                (v.adjoint() * op * v)[(0, 0)].re
            };
            let (n0, n1) = (expect(&n, 0), expect(&n, 1));
            if pin_anh {
                let n2 = expect(&n, 2);
                let (q0, q1, q2) = (expect(&x4, 0), expect(&x4, 1), expect(&x4, 2));
                // rows: gap, anharmonicity; columns: d/dw_h, d/dk
                let (a, b) = (n1 - n0, q1 - q0);
                let (c, d) = (n2 - 2.0 * n1 + n0, q2 - 2.0 * q1 + q0);
                let det = a * d - b * c;
                if !(det.abs() > 1e-12) {
                    return Err(Error::Diagonalization("singular Jacobian while pinning spectrum".into()));
                }
                omega_h -= (d * r_gap - b * r_anh) / det;
                quartic -= (a * r_anh - c * r_gap) / det;
            } else {
                omega_h -= r_gap / (n1 - n0);
            }
            h0 = hamiltonian(omega_h, quartic, &n, &x4);
            eig = HermitianEigen::new(&h0)?;
        }
        if !converged || !(quartic < 0.0) {
            return Err(Error::Diagonalization(format!(
                "could not pin f01 = {} GHz, mu = {} GHz at dim = {dim}",
                p.f01, p.mu_mag
            )));
        }
    }

    if !eig.values.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Diagonalization("spectrum is degenerate".into()));
    }
    // The truncated quartic is unbounded below; past a few tens of levels
    // spurious states drop into the low spectrum.
    for k in 0..dim.min(6) {
        if eig.vectors[(k, k)].norm_sqr() < 0.5 {
            return Err(Error::Diagonalization(format!(
                "eigenstate {k} is not dominated by Fock state {k}; truncation dim = {dim} too large for the quartic model"
            )));
        }
    }
    let raw = drive_operator(dim);
    let d01 = (eig.vectors.column(0).adjoint() * &raw * eig.vectors.column(1))[(0, 0)].norm();
    if !(d01 > 1e-6) {
        return Err(Error::Diagonalization("qubit transition is not driven".into()));
    }
    let drive_scale = 1.0 / d01;
    Ok(StaticModel {
        params: p.clone(),
        omega_harmonic: omega_h,
        quartic,
        h0,
        drive_op: raw * C64::new(drive_scale, 0.0),
        drive_scale,
        eigvals: eig.values,
        eigvecs: eig.vectors,
    })
}

impl StaticModel {
    pub fn dim(&self) -> usize {
        self.params.dim
    }

    /// `V^dag op V`.
    pub fn to_eigenbasis(&self, op: &CMatrix) -> Result<CMatrix> {
        let d = self.dim();
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: op.nrows().max(op.ncols()) });
        }
        Ok(self.eigvecs.adjoint() * op * &self.eigvecs)
    }

    /// Anharmonicity `(E2 - E1) - (E1 - E0)` in rad/ns; negative for a transmon.
    pub fn anharmonicity(&self) -> f64 {
        let e = &self.eigvals;
        if e.len() < 3 {
            return 0.0;
        }
        (e[2] - e[1]) - (e[1] - e[0])
    }

    /// Scaled `a - a^dag` in the eigenbasis; the generator of a delta pulse.
    pub(crate) fn pulse_generator(&self) -> CMatrix {
        self.drive_eigen() * -I
    }

    pub(crate) fn drive_eigen(&self) -> CMatrix {
        self.eigvecs.adjoint() * &self.drive_op * &self.eigvecs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_defect, unitarity_defect};

    #[test]
    fn plasma_frequency_example() {
        let c = CircuitParams { e_j: 12.5, e_c: 0.25, c_c: 0.1, c_q: 80.0, n_g: 0.0 };
        assert_eq!(c.plasma_frequency(), 5.0);
        let p = derive_effective(&c).unwrap();
        assert!((p.f01 - 4.75).abs() < 1e-15);
        assert_eq!(p.mu_mag, 0.25);
    }

    #[test]
    fn rejects_non_positive_energy() {
        let c = CircuitParams { e_j: 12.5, e_c: 0.0, c_c: 0.1, c_q: 80.0, n_g: 0.0 };
        assert!(derive_effective(&c).is_err());
        let c = CircuitParams { e_j: -1.0, e_c: 0.2, c_c: 0.1, c_q: 80.0, n_g: 0.0 };
        assert!(derive_effective(&c).is_err());
    }

    #[test]
    fn coupling_round_trip() {
        let (c_q, f_p) = (80.0, 5.25);
        let c_c = coupling_for_angle(0.024, c_q, f_p);
        let c = CircuitParams { e_j: f_p * f_p / 2.0, e_c: 0.25, c_c, c_q, n_g: 0.0 };
        assert!((c.plasma_frequency() - f_p).abs() < 1e-12);
        let p = derive_effective(&c).unwrap();
        assert!((p.theta - 0.024).abs() < 1e-12);
        // sub-fF coupling is the physically expected scale
        assert!(c_c > 0.05 && c_c < 2.0, "{c_c}");
    }

    #[test]
    fn energies_round_trip() {
        let c = CircuitParams { e_j: 15.0, e_c: 0.3, c_c: 0.2, c_q: 70.0, n_g: 0.0 };
        let p = derive_effective(&c).unwrap();
        let (e_j, e_c) = circuit_energies(&p);
        assert!((e_j - 15.0).abs() < 1e-12 * 15.0);
        assert!((e_c - 0.3).abs() < 1e-12);
    }

    #[test]
    fn harmonic_limit() {
        let p = TransmonParams { f01: 5.0, mu_mag: 0.0, theta: 0.02, dim: 3 };
        let m = build_static(&p).unwrap();
        let w = p.omega01();
        for (n, e) in m.eigvals.iter().enumerate() {
            assert!((e - n as f64 * w).abs() <= 1e-12 * w);
        }
    }

    #[test]
    fn pinned_gap_and_negative_anharmonicity() {
        let p = TransmonParams::new(5.0, 0.25, 0.024).with_dim(8);
        let m = build_static(&p).unwrap();
        let gap = m.eigvals[1] - m.eigvals[0];
        assert!((gap - p.omega01()).abs() < 1e-12 * gap);
        assert!(gap < m.omega_harmonic);
        let alpha = m.anharmonicity() / (2.0 * PI);
        assert!((alpha + 0.25).abs() < 1e-12, "{alpha}");
        assert!(m.quartic < 0.0);
    }

    #[test]
    fn low_levels_stable_under_truncation() {
        let base = build_static(&TransmonParams::new(5.0, 0.25, 0.024)).unwrap();
        let e0 = |m: &StaticModel, k: usize| m.eigvals[k] - m.eigvals[0];
        for dim in [11, 12, 14] {
            let m = build_static(&TransmonParams::new(5.0, 0.25, 0.024).with_dim(dim)).unwrap();
            for k in 1..3 {
                assert!((e0(&m, k) - e0(&base, k)).abs() <= 1e-12 * e0(&base, k));
            }
            for k in 3..6 {
                let rel = (e0(&m, k) - e0(&base, k)).abs() / e0(&base, k);
                assert!(rel < 2e-2, "level {k} dim {dim}: {rel:e}");
            }
        }
    }

    #[test]
    fn oversized_truncation_is_rejected() {
        assert!(build_static(&TransmonParams::new(5.0, 0.25, 0.024).with_dim(40)).is_err());
    }

    #[test]
    fn hermitian_and_unitary() {
        let m = build_static(&TransmonParams::new(4.0, 0.3, 0.02)).unwrap();
        assert!(hermiticity_defect(&m.h0) <= 1e-12 * m.eigvals.last().unwrap().abs());
        assert!(hermiticity_defect(&m.drive_op) < 1e-12);
        assert!(unitarity_defect(&m.eigvecs) < 1e-10);
    }

    #[test]
    fn drive_op_structure() {
        let d = drive_operator(6);
        for i in 0..6 {
            for j in 0..6 {
                let z = d[(i, j)];
                if j == i + 1 || i == j + 1 {
                    assert!((z.norm() - (i.max(j) as f64).sqrt()).abs() < 1e-15);
                } else {
                    assert_eq!(z, ZERO);
                }
            }
        }
    }

    #[test]
    fn eigenbasis_transforms() {
        let m = build_static(&TransmonParams::new(5.0, 0.25, 0.02)).unwrap();
        let d = m.to_eigenbasis(&m.h0).unwrap();
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                let expect = if i == j { m.eigvals[i] } else { 0.0 };
                assert!((d[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-10);
            }
        }
        let id = CMatrix::identity(m.dim(), m.dim());
        let t = m.to_eigenbasis(&id).unwrap();
        assert!((t - &id).iter().all(|z| z.norm() < 1e-12));
        assert!(m.to_eigenbasis(&CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn dressed_drive_matrix_element() {
        let harmonic = build_static(&TransmonParams { f01: 5.0, mu_mag: 0.0, theta: 0.02, dim: 10 }).unwrap();
        let d0 = harmonic.to_eigenbasis(&harmonic.drive_op).unwrap();
        assert!((d0[(0, 1)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(harmonic.drive_scale, 1.0);
        let weak = build_static(&TransmonParams::new(5.0, 0.25, 0.02)).unwrap();
        let d = weak.to_eigenbasis(&weak.drive_op).unwrap();
        assert!((d[(0, 1)].norm() - 1.0).abs() < 1e-12);
        // Dressing shrinks the bare element by about 2% at these parameters.
        assert!(weak.drive_scale > 1.01 && weak.drive_scale < 1.05, "{}", weak.drive_scale);
    }

    #[test]
    fn validation_ranges() {
        assert!(TransmonParams::new(5.0, 0.25, 0.024).validate().is_ok());
        assert!(TransmonParams::new(0.5, 0.25, 0.024).validate().is_err());
        assert!(TransmonParams::new(5.0, 0.0, 0.024).validate().is_err());
        assert!(TransmonParams::new(5.0, 0.25, 0.3).validate().is_err());
        assert!(TransmonParams::new(5.0, 0.25, 0.024).with_dim(4).validate().is_err());
    }
}
