//! Symmetric eigendecomposition of PSD matrices and the von Neumann entropy
//! `S(C) = -Σ λ ln λ` built on it.
//!
//! Logarithms are natural throughout, so entropies and divergences are in nats.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted by [`PsdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues in `[-PSD_TOL, 0)` are treated as round-off and clamped to zero.
pub const PSD_TOL: f64 = 1e-10;
/// Floor applied to eigenvalues before taking logarithms for gradients.
pub const LOG_FLOOR: f64 = 1e-12;
/// Trace deviation tolerated by [`vn_entropy`].
pub const TRACE_TOL: f64 = 1e-6;

/// A real symmetric matrix that is expected to be positive semidefinite.
///
/// Symmetry is checked on construction; positive semidefiniteness is checked
/// lazily by [`eigh_psd`], which is the only way to get at the spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix(DMatrix<f64>);

impl PsdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::BadShape(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asymmetry = relative_asymmetry(&m);
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self(symmetrize(m)))
    }

    /// Wraps `m` after averaging it with its transpose. Use for matrices that
    /// are symmetric by construction but carry round-off from a product.
    pub fn from_symmetric(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `a * self + b * other`, which stays symmetric.
    pub fn combine(&self, a: f64, other: &PsdMatrix, b: f64) -> Result<PsdMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(PsdMatrix(&self.0 * a + &other.0 * b))
    }
}

fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut scale = 0.0_f64;
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..n {
            scale = scale.max(m[(i, j)].abs());
            if i > j {
                worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Eigenvalues sorted in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_eigenvalues(|l| l)
    }

    /// `V diag(f(λ)) Vᵀ`, symmetrized.
    pub fn map_eigenvalues(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            let fl = f(l);
            scaled.column_mut(j).scale_mut(fl);
        }
        symmetrize(scaled * self.eigenvectors.transpose())
    }

    /// `-Σ λ ln λ` with `0 ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy_of_eigenvalues(self.eigenvalues.iter().copied())
    }

    /// `V diag(ln max(λ, floor)) Vᵀ`.
    pub fn log_matrix(&self, floor: f64) -> DMatrix<f64> {
        self.map_eigenvalues(|l| l.max(floor).ln())
    }
}

/// `-Σ λ ln λ` over the given eigenvalues, skipping zeros.
pub fn entropy_of_eigenvalues(eigenvalues: impl IntoIterator<Item = f64>) -> f64 {
    eigenvalues
        .into_iter()
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum()
}

/// Symmetric eigendecomposition of a PSD matrix.
///
/// Eigenvalues are sorted descending; values in `[-1e-10, 0)` are clamped to
/// zero and anything more negative is rejected as [`Error::NotPsd`].
pub fn eigh_psd(m: &PsdMatrix) -> Result<Spectrum> {
    let spectrum = eigh(m.as_matrix())?;
    let min = spectrum.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOL {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let mut spectrum = spectrum;
    spectrum.eigenvalues.apply(|l| *l = l.max(0.0));
    Ok(spectrum)
}

/// Symmetric eigendecomposition without the PSD check, sorted descending.
pub(crate) fn eigh(m: &DMatrix<f64>) -> Result<Spectrum> {
    let dim = m.nrows();
    if dim == 0 {
        return Ok(Spectrum {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { dim });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * dim.max(10))
        .ok_or(Error::NoConvergence { dim })?;

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}

/// Entropy of a symmetric unit-trace matrix from its eigenvalues alone,
/// skipping the eigenvector computation. No trace or PSD checks beyond the
/// clamping of round-off negatives.
pub(crate) fn entropy_fast(m: &DMatrix<f64>) -> Result<f64> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { dim: m.nrows() });
    }
    let eig = m.symmetric_eigenvalues();
    if let Some(min) = eig.iter().copied().reduce(f64::min) {
        if min < -PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    Ok(entropy_of_eigenvalues(eig.iter().copied()))
}

/// Von Neumann entropy of a unit-trace PSD matrix, in nats.
pub fn vn_entropy(m: &PsdMatrix) -> Result<f64> {
    check_unit_trace(m)?;
    Ok(eigh_psd(m)?.entropy())
}

pub(crate) fn check_unit_trace(m: &PsdMatrix) -> Result<()> {
    let trace = m.trace();
    if (trace - 1.0).abs() > TRACE_TOL || !trace.is_finite() {
        return Err(Error::TraceNotUnit { trace });
    }
    Ok(())
}

/// Matrix logarithm of a PSD matrix with eigenvalues floored at `floor`.
pub fn matrix_log_sym(m: &PsdMatrix, floor: f64) -> Result<DMatrix<f64>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidConfig(format!("log floor must be positive, got {floor}")));
    }
    Ok(eigh_psd(m)?.log_matrix(floor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        a.transpose() * a
    }

    fn unit_trace(m: DMatrix<f64>) -> PsdMatrix {
        let t = m.trace();
        PsdMatrix::from_symmetric(m / t)
    }

    #[test]
    fn identity_eigenvalues() {
        let s = eigh_psd(&PsdMatrix::identity(3)).unwrap();
        for &l in s.eigenvalues.iter() {
            assert_abs_diff_eq!(l, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn two_by_two_analytic() {
        let m = PsdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let s = eigh_psd(&m).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eigenvalues[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_psd(8, &mut rng);
        let s = eigh_psd(&PsdMatrix::new(a.clone()).unwrap()).unwrap();
        let rel = (s.reconstruct() - &a).norm() / a.norm();
        assert!(rel <= 1e-8, "reconstruction error {rel}");
        let vtv = s.eigenvectors.transpose() * &s.eigenvectors;
        assert!((vtv - DMatrix::identity(8, 8)).norm() <= 1e-8);
        for w in s.eigenvalues.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(PsdMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn clamps_tiny_negative_rejects_large_negative() {
        let s = eigh_psd(&PsdMatrix::from_diagonal(&[1.0, -5e-11])).unwrap();
        assert_eq!(s.eigenvalues[1], 0.0);
        assert!(matches!(
            eigh_psd(&PsdMatrix::from_diagonal(&[1.0, -1e-3])),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(
            vn_entropy(&PsdMatrix::from_diagonal(&[0.5, 0.5])).unwrap(),
            ln2,
            epsilon = 1e-12
        );
        assert_eq!(vn_entropy(&PsdMatrix::from_diagonal(&[1.0, 0.0])).unwrap(), 0.0);
        // -0.75 ln 0.75 - 0.25 ln 0.25
        assert_abs_diff_eq!(
            vn_entropy(&PsdMatrix::from_diagonal(&[0.75, 0.25])).unwrap(),
            0.562335,
            epsilon = 1e-6
        );
    }

    #[test]
    fn entropy_requires_unit_trace() {
        let r = vn_entropy(&PsdMatrix::from_diagonal(&[1.0, 1.0]));
        assert!(matches!(r, Err(Error::TraceNotUnit { .. })));
    }

    #[test]
    fn matrix_log_examples() {
        assert!(matrix_log_sym(&PsdMatrix::identity(4), LOG_FLOOR).unwrap().norm() < 1e-14);
        let e = std::f64::consts::E;
        let l = matrix_log_sym(&PsdMatrix::from_diagonal(&[e, 1.0 / e]), LOG_FLOOR).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(1, 1)], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-12);
        let l = matrix_log_sym(&PsdMatrix::from_diagonal(&[1.0, 0.0]), 1e-12).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l[(1, 1)], 1e-12_f64.ln(), epsilon = 1e-9);
        assert!(matrix_log_sym(&PsdMatrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn unitary_invariance_and_concavity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m1 = unit_trace(random_psd(6, &mut rng));
            let m2 = unit_trace(random_psd(6, &mut rng));
            let q = eigh(&random_psd(6, &mut rng)).unwrap().eigenvectors;
            let rotated = PsdMatrix::from_symmetric(&q * m1.as_matrix() * q.transpose());
            let s1 = vn_entropy(&m1).unwrap();
            assert_abs_diff_eq!(vn_entropy(&rotated).unwrap(), s1, epsilon = 1e-8);
            assert!(s1 >= 0.0 && s1 <= (6.0f64).ln() + 1e-12);

            let mix = m1.combine(0.5, &m2, 0.5).unwrap();
            let s2 = vn_entropy(&m2).unwrap();
            assert!(vn_entropy(&mix).unwrap() >= 0.5 * s1 + 0.5 * s2 - 1e-10);
        }
    }
}
