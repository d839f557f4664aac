//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Eigendecomposition of a Hermitian matrix with eigenvalues ascending and
/// each eigenvector's largest-magnitude component made real and positive.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: h.ncols() });
        }
        let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let skew = (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if skew > 1e-10 * scale {
            return Err(Error::Diagonalization(format!(
                "matrix is not Hermitian (max |H - H^dag| = {skew:e})"
            )));
        }
        let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Diagonalization("QR iteration did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(src);
            let (mut best, mut best_mag) = (0, -1.0);
            for (i, z) in col.iter().enumerate() {
                // Small slack so near-ties resolve to the lowest index.
                if z.norm() > best_mag * (1.0 + 1e-12) {
                    best = i;
                    best_mag = z.norm();
                }
            }
            let phase = col[best].conj() / col[best].norm();
            for i in 0..n {
                vectors[(i, dst)] = col[i] * phase;
            }
        }
        Ok(Self { values, vectors })
    }

    /// `V diag(f(lambda)) V^dag`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        self.map(|lambda| C64::from_polar(1.0, -lambda * t))
    }
}

/// `exp(-i H t)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    Ok(HermitianEigen::new(h)?.propagator(t))
}

/// Largest singular value.
pub fn operator_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// `||U^dag U - 1||` in operator norm.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    operator_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    (h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense matrix-vector product into `out`, row-major `m` of size `n x n`.
#[inline]
pub(crate) fn matvec_into(m: &[C64], x: &[C64], out: &mut [C64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &m[i * n..(i + 1) * n];
        let mut acc = ZERO;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o = acc;
    }
}

pub(crate) fn to_row_major(m: &CMatrix) -> Vec<C64> {
    let mut v = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    #[test]
    fn eigen_sorted_and_phase_fixed() {
        let h = CMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                ZERO,
                C64::new(0.0, -1.0),
                C64::new(1.0, 0.0),
                C64::new(0.5, 0.0),
                ZERO,
                C64::new(0.5, 0.0),
                C64::new(-1.0, 0.0),
            ],
        );
        let eig = HermitianEigen::new(&h).unwrap();
        assert!(eig.values.windows(2).all(|w| w[0] < w[1]));
        for j in 0..3 {
            let col = eig.vectors.column(j);
            let big = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let lead = col.iter().find(|z| (z.norm() - big).abs() < 1e-12).unwrap();
            assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
        }
        let back = eig.map(|l| C64::new(l, 0.0));
        assert!((back - h).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(HermitianEigen::new(&m), Err(Error::Diagonalization(_))));
    }

    #[test]
    fn pauli_rotation() {
        let t = 0.3;
        let u = expm_hermitian(&pauli_y(), t).unwrap();
        // exp(-i t Y) = cos t - i sin t Y
        assert!((u[(0, 0)] - C64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(0, 1)] - C64::new(-t.sin(), 0.0)).norm() < 1e-14);
        assert!(unitarity_defect(&u) < 1e-14);
    }

    #[test]
    fn operator_norm_of_diagonal() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![ONE, C64::new(0.0, -3.0)]));
        assert!((operator_norm(&d) - 3.0).abs() < 1e-14);
    }
}
