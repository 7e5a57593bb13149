//! Representation Jensen-Shannon divergence estimators.
//!
//! With unit-norm embeddings `Φ_X` (`N × D`) and `Φ_Y` (`M × D`), the
//! covariance estimator is
//!
//! ```text
//! D(X, Y) = S(π₁ C_X + π₂ C_Y) - π₁ S(C_X) - π₂ S(C_Y),   C_X = Φ_Xᵀ Φ_X / N
//! ```
//!
//! with `π₁ = N/(N+M)`. The mixture covariance shares its nonzero spectrum
//! with the trace-normalized Gram matrix of the pooled samples, which gives the
//! kernel estimator `S(K_Z) - π₁ S(K_X) - π₂ S(K_Y)` without explicit features.

use nalgebra::DMatrix;

use crate::data::SampleSet;
use crate::error::{Error, Result};
use crate::spectral::{self, vn_entropy, PsdMatrix};

/// Row norms must be within this distance of 1 for [`cov_from_features`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Negative estimates down to this magnitude are round-off and reported as 0.
const NEGATIVE_ROUNDOFF: f64 = 1e-9;

/// Uncentered covariance `Φᵀ Φ / N` of unit-norm feature rows.
pub fn cov_from_features(phi: &DMatrix<f64>) -> Result<PsdMatrix> {
    check_unit_rows(phi)?;
    Ok(cov_unchecked(phi))
}

pub(crate) fn cov_unchecked(phi: &DMatrix<f64>) -> PsdMatrix {
    let n = phi.nrows() as f64;
    PsdMatrix::from_symmetric(phi.transpose() * phi / n)
}

pub(crate) fn check_unit_rows(phi: &DMatrix<f64>) -> Result<()> {
    if phi.nrows() == 0 {
        return Err(Error::BadShape("feature matrix has no rows".into()));
    }
    for (row, r) in phi.row_iter().enumerate() {
        let norm = r.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL || !norm.is_finite() {
            return Err(Error::RowNotUnitNorm { row, norm });
        }
    }
    Ok(())
}

/// Two unit-trace covariances with their mixing proportions.
#[derive(Debug, Clone)]
pub struct CovariancePair {
    pub cx: PsdMatrix,
    pub cy: PsdMatrix,
    pub pi1: f64,
    pub pi2: f64,
}

impl CovariancePair {
    /// Proportions from sample counts: `π₁ = N/(N+M)`, `π₂ = M/(N+M)`.
    pub fn new(cx: PsdMatrix, cy: PsdMatrix, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::BadShape("sample counts must be positive".into()));
        }
        let total = (n + m) as f64;
        Self::with_weights(cx, cy, n as f64 / total, m as f64 / total)
    }

    pub fn with_weights(cx: PsdMatrix, cy: PsdMatrix, pi1: f64, pi2: f64) -> Result<Self> {
        if cx.dim() != cy.dim() {
            return Err(Error::DimMismatch {
                expected: cx.dim(),
                found: cy.dim(),
            });
        }
        if !(pi1 > 0.0 && pi2 > 0.0) || ((pi1 + pi2) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "proportions must be positive and sum to 1, got {pi1} and {pi2}"
            )));
        }
        Ok(Self { cx, cy, pi1, pi2 })
    }

    /// Covariances of two feature matrices, weighted by their row counts.
    pub fn from_features(phi_x: &DMatrix<f64>, phi_y: &DMatrix<f64>) -> Result<Self> {
        if phi_x.ncols() != phi_y.ncols() {
            return Err(Error::DimMismatch {
                expected: phi_x.ncols(),
                found: phi_y.ncols(),
            });
        }
        Self::new(
            cov_from_features(phi_x)?,
            cov_from_features(phi_y)?,
            phi_x.nrows(),
            phi_y.nrows(),
        )
    }

    pub fn dim(&self) -> usize {
        self.cx.dim()
    }

    /// `π₁ C_X + π₂ C_Y`.
    pub fn mixture(&self) -> PsdMatrix {
        PsdMatrix::from_symmetric(self.cx.as_matrix() * self.pi1 + self.cy.as_matrix() * self.pi2)
    }

    /// Same pair with the roles of X and Y exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            cx: self.cy.clone(),
            cy: self.cx.clone(),
            pi1: self.pi2,
            pi2: self.pi1,
        }
    }
}

/// Upper bound `ln((N+M)/√(NM))` on every estimate.
pub fn divergence_ceiling(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ((n + m) / (n * m).sqrt()).ln()
}

pub(crate) fn clean_estimate(value: f64) -> f64 {
    if value < 0.0 && value > -NEGATIVE_ROUNDOFF {
        0.0
    } else {
        value
    }
}

/// Covariance-based estimator.
pub fn rjsd_cov(p: &CovariancePair) -> Result<f64> {
    let s_mix = vn_entropy(&p.mixture())?;
    let s_x = vn_entropy(&p.cx)?;
    let s_y = vn_entropy(&p.cy)?;
    Ok(clean_estimate(s_mix - p.pi1 * s_x - p.pi2 * s_y))
}

/// `rjsd_cov` on the covariances of two explicit feature matrices.
pub fn rjsd_features(phi_x: &DMatrix<f64>, phi_y: &DMatrix<f64>) -> Result<f64> {
    rjsd_cov(&CovariancePair::from_features(phi_x, phi_y)?)
}

/// `rjsd_cov(p) - ‖C_X - C_Y‖²_F / 8`, never below zero when `π₁ = π₂`.
pub fn hs_lower_bound_gap(p: &CovariancePair) -> Result<f64> {
    let hs = (p.cx.as_matrix() - p.cy.as_matrix()).norm_squared();
    Ok(rjsd_cov(p)? - hs / 8.0)
}

/// A trace-one Gram matrix `K / N` for a kernel with `κ(x, x) = 1`.
#[derive(Debug, Clone)]
pub struct NormalizedKernelMatrix {
    matrix: PsdMatrix,
}

impl NormalizedKernelMatrix {
    /// Normalizes a raw Gram matrix (unit diagonal) by its size.
    pub fn from_raw(gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 {
            return Err(Error::BadShape("empty Gram matrix".into()));
        }
        Ok(Self {
            matrix: PsdMatrix::new(gram / n as f64)?,
        })
    }

    pub fn source_size(&self) -> usize {
        self.matrix.dim()
    }

    pub fn as_psd(&self) -> &PsdMatrix {
        &self.matrix
    }

    pub fn entropy(&self) -> Result<f64> {
        vn_entropy(&self.matrix)
    }
}

/// Raw Gaussian Gram matrix `exp(-‖x_i - x_j‖² / (2σ²))` with an exact unit diagonal.
pub fn gaussian_gram(x: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {sigma}")));
    }
    let d2 = squared_distances(x);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut k = d2.map(|v| (-v * inv).exp());
    k.fill_diagonal(1.0);
    Ok(k)
}

pub(crate) fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norms: Vec<f64> = x.row_iter().map(|r| r.norm_squared()).collect();
    let inner = x * x.transpose();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (norms[i] + norms[j] - 2.0 * inner[(i, j)]).max(0.0)
        }
    })
}

/// Trace-normalized Gaussian kernel matrix of the rows of `x`.
pub fn kernel_matrix_gaussian(x: &DMatrix<f64>, sigma: f64) -> Result<NormalizedKernelMatrix> {
    NormalizedKernelMatrix::from_raw(gaussian_gram(x, sigma)?)
}

pub(crate) fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    z.rows_mut(0, a.nrows()).copy_from(a);
    z.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    z
}

fn check_same_width(x: &SampleSet, y: &SampleSet) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// Kernel estimator from the raw (unit-diagonal) Gram matrix of the pooled
/// samples, the first `n` of which belong to X.
pub fn rjsd_from_gram(gram_z: &DMatrix<f64>, n: usize) -> Result<f64> {
    let total = gram_z.nrows();
    if n == 0 || n >= total || !gram_z.is_square() {
        return Err(Error::BadShape(format!(
            "need a square pooled Gram matrix with 0 < n < {total}, got n = {n}"
        )));
    }
    let m = total - n;
    let kz = NormalizedKernelMatrix::from_raw(gram_z.clone())?;
    let kx = NormalizedKernelMatrix::from_raw(gram_z.view((0, 0), (n, n)).into_owned())?;
    let ky = NormalizedKernelMatrix::from_raw(gram_z.view((n, n), (m, m)).into_owned())?;
    let (pi1, pi2) = (n as f64 / total as f64, m as f64 / total as f64);
    Ok(clean_estimate(kz.entropy()? - pi1 * kx.entropy()? - pi2 * ky.entropy()?))
}

/// Kernel estimator with a Gaussian kernel of bandwidth `sigma`.
pub fn rjsd_kernel(x: &SampleSet, y: &SampleSet, sigma: f64) -> Result<f64> {
    check_same_width(x, y)?;
    let z = vstack(&x.rows, &y.rows);
    rjsd_from_gram(&gaussian_gram(&z, sigma)?, x.len())
}

/// Matrix-based mutual information between pooled samples and their labels,
/// `S(K_Z) + S(K_L) - S(K_Z ⊙ K_L / tr(K_Z ⊙ K_L))`, for balanced sets.
pub fn rjsd_mutual_info(x: &SampleSet, y: &SampleSet, sigma: f64) -> Result<f64> {
    check_same_width(x, y)?;
    if x.len() != y.len() {
        return Err(Error::Unbalanced {
            n: x.len(),
            m: y.len(),
        });
    }
    let z = vstack(&x.rows, &y.rows);
    mutual_info_from_gram(&gaussian_gram(&z, sigma)?, x.len())
}

/// Mutual-information form on a raw pooled Gram matrix with `n` X-rows.
pub fn mutual_info_from_gram(gram_z: &DMatrix<f64>, n: usize) -> Result<f64> {
    let total = gram_z.nrows();
    if total != 2 * n || n == 0 {
        return Err(Error::Unbalanced { n, m: total.saturating_sub(n) });
    }
    let label = |i: usize| usize::from(i >= n);
    let kl = DMatrix::from_fn(total, total, |i, j| f64::from(u8::from(label(i) == label(j))));
    let joint = gram_z.component_mul(&kl);
    let joint_trace = joint.trace();
    let s_z = NormalizedKernelMatrix::from_raw(gram_z.clone())?.entropy()?;
    let s_l = NormalizedKernelMatrix::from_raw(kl)?.entropy()?;
    let s_joint = vn_entropy(&PsdMatrix::new(joint / joint_trace)?)?;
    Ok(clean_estimate(s_z + s_l - s_joint))
}

/// V-statistic MMD² with the squared kernel `κ²(x, y) = ⟨φ(x), φ(y)⟩²`.
pub fn squared_kernel_mmd2(phi_x: &DMatrix<f64>, phi_y: &DMatrix<f64>) -> f64 {
    let mean_sq = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
        let g = a * b.transpose();
        g.iter().map(|v| v * v).sum::<f64>() / (a.nrows() * b.nrows()) as f64
    };
    mean_sq(phi_x, phi_x) - 2.0 * mean_sq(phi_x, phi_y) + mean_sq(phi_y, phi_y)
}

/// Entropy of a trace-normalized Gram matrix of explicit features, computed
/// on whichever of `ΦᵀΦ/N` and `ΦΦᵀ/N` is smaller.
pub fn feature_entropy(phi: &DMatrix<f64>) -> Result<f64> {
    let n = phi.nrows() as f64;
    let m = if phi.nrows() <= phi.ncols() {
        phi * phi.transpose() / n
    } else {
        phi.transpose() * phi / n
    };
    let m = PsdMatrix::from_symmetric(m);
    spectral::check_unit_trace(&m)?;
    Ok(spectral::eigh_psd(&m)?.entropy())
}
