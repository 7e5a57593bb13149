//! Numerical invariant suite used by `repjsd selfcheck`.
//!
//! Checks are composed from library primitives through [`Ops`], which can
//! inject a known defect. A sound suite passes on the unmodified operations
//! and fails under every [`Mutation`].

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::derive_seed;
use crate::divergence::{
    cov_unchecked, divergence_ceiling, gaussian_gram, mutual_info_from_gram, rjsd_cov, squared_kernel_mmd2,
    CovariancePair,
};
use crate::error::{Error, Result};
use crate::features::FourierFeatureMap;
use crate::grad::rjsd_cov_with_grad;
use crate::spectral::{eigh, entropy_of_eigenvalues, PsdMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mutation {
    /// Negated entropy gradient.
    EntropyGradSign,
    /// Gram matrices used without dividing by their size.
    NoTraceNormalization,
    /// Mixing proportions assigned to the wrong sets.
    WrongPiWeighting,
}

impl Mutation {
    pub const ALL: [Mutation; 3] = [
        Mutation::EntropyGradSign,
        Mutation::NoTraceNormalization,
        Mutation::WrongPiWeighting,
    ];
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mutation::EntropyGradSign => "entropy-grad-sign",
            Mutation::NoTraceNormalization => "no-trace-normalization",
            Mutation::WrongPiWeighting => "wrong-pi-weighting",
        })
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mutation '{s}'")))
    }
}

/// The primitive operations the checks are built from.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ops {
    pub mutation: Option<Mutation>,
}

impl Ops {
    fn weights(&self, n: usize, m: usize) -> (f64, f64) {
        let total = (n + m) as f64;
        let (a, b) = (n as f64 / total, m as f64 / total);
        match self.mutation {
            Some(Mutation::WrongPiWeighting) => (b, a),
            _ => (a, b),
        }
    }

    fn normalize_gram(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        match self.mutation {
            Some(Mutation::NoTraceNormalization) => k.clone(),
            _ => k / k.nrows() as f64,
        }
    }

    fn cov_pair(&self, phi_x: &DMatrix<f64>, phi_y: &DMatrix<f64>) -> Result<CovariancePair> {
        let (pi1, pi2) = self.weights(phi_x.nrows(), phi_y.nrows());
        CovariancePair::with_weights(cov_unchecked(phi_x), cov_unchecked(phi_y), pi1, pi2)
    }

    /// Entropy of a (supposedly) normalized Gram matrix.
    fn gram_entropy(&self, k: &DMatrix<f64>) -> Result<f64> {
        Ok(entropy_of_eigenvalues(eigh(&self.normalize_gram(k))?.eigenvalues.iter().copied()))
    }

    /// Kernel estimator from a raw pooled Gram matrix with `n` X-rows.
    fn kernel_estimate(&self, gram: &DMatrix<f64>, n: usize) -> Result<f64> {
        let m = gram.nrows() - n;
        let (pi1, pi2) = self.weights(n, m);
        let kx = gram.view((0, 0), (n, n)).into_owned();
        let ky = gram.view((n, n), (m, m)).into_owned();
        Ok(self.gram_entropy(gram)? - pi1 * self.gram_entropy(&kx)? - pi2 * self.gram_entropy(&ky)?)
    }

    fn cov_gradient(&self, p: &CovariancePair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (_, gx, gy) = rjsd_cov_with_grad(p)?;
        Ok(match self.mutation {
            Some(Mutation::EntropyGradSign) => (-gx, -gy),
            _ => (gx, gy),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn unit_rows(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    for mut r in m.row_iter_mut() {
        let norm = r.norm();
        r /= norm;
    }
    m
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    crate::divergence::vstack(a, b)
}

/// Mixture entropy from covariances equals the pooled Gram entropy, and the
/// covariance and kernel estimators agree, on unbalanced sets.
fn check_gram_equality(ops: &Ops, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, m, d) = (rng.random_range(3..20), rng.random_range(21..40), rng.random_range(4..16));
        let (px, py) = (unit_rows(n, d, rng), unit_rows(m, d, rng));
        let pair = ops.cov_pair(&px, &py)?;
        let s_mix = entropy_of_eigenvalues(eigh(pair.mixture().as_matrix())?.eigenvalues.iter().copied());
        let z = stack(&px, &py);
        let gram = &z * z.transpose();
        worst = worst.max((s_mix - ops.gram_entropy(&gram)?).abs());
        worst = worst.max((rjsd_cov(&pair)? - ops.kernel_estimate(&gram, n)?).abs());
    }
    Ok((worst <= 1e-8, format!("max deviation {worst:.2e}")))
}

/// Kernel estimator equals the mutual-information form on balanced sets.
fn check_mutual_info(ops: &Ops, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, d) = (rng.random_range(3..25), rng.random_range(1..4));
        let z = DMatrix::from_fn(2 * n, d, |_, _| rng.random_range(-2.0..2.0));
        let gram = gaussian_gram(&z, rng.random_range(0.3..2.0))?;
        worst = worst.max((ops.kernel_estimate(&gram, n)? - mutual_info_from_gram(&gram, n)?).abs());
    }
    Ok((worst <= 1e-8, format!("max deviation {worst:.2e}")))
}

/// `‖C_X - C_Y‖²_F / 8 ≤ D ≤ ln((N+M)/√(NM))` on balanced sets, and the
/// squared Frobenius distance equals the MMD² of the squared kernel.
fn check_hs_bound(ops: &Ops, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut min_gap = f64::INFINITY;
    let mut max_over = f64::NEG_INFINITY;
    let mut mmd_dev: f64 = 0.0;
    for _ in 0..200 {
        let (n, d) = (rng.random_range(1..12), rng.random_range(2..8));
        let m = n;
        let (px, py) = (unit_rows(n, d, rng), unit_rows(m, d, rng));
        let pair = ops.cov_pair(&px, &py)?;
        let value = rjsd_cov(&pair)?;
        let hs = (pair.cx.as_matrix() - pair.cy.as_matrix()).norm_squared();
        min_gap = min_gap.min(value - hs / 8.0);
        max_over = max_over.max(value - divergence_ceiling(n, m));
        mmd_dev = mmd_dev.max((hs - squared_kernel_mmd2(&px, &py)).abs());
    }
    let ok = min_gap >= -1e-9 && max_over <= 1e-9 && mmd_dev <= 1e-8;
    Ok((
        ok,
        format!("min gap {min_gap:.2e}, max excess over ceiling {max_over:.2e}, MMD deviation {mmd_dev:.2e}"),
    ))
}

/// Analytic covariance gradients against central differences along random
/// symmetric directions.
fn check_gradient(ops: &Ops, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    const H: f64 = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, m, d) = (rng.random_range(8..20), rng.random_range(8..20), rng.random_range(2..5));
        let (px, py) = (unit_rows(n, d, rng), unit_rows(m, d, rng));
        let pair = CovariancePair::new(cov_unchecked(&px), cov_unchecked(&py), n, m)?;
        let (gx, gy) = ops.cov_gradient(&pair)?;
        for (which, g) in [(0, &gx), (1, &gy)] {
            let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let mut dir = &a + a.transpose();
            let shift = dir.trace() / d as f64;
            for i in 0..d {
                dir[(i, i)] -= shift;
            }
            let perturbed = |s: f64| -> Result<f64> {
                let mut p = pair.clone();
                let c = if which == 0 { &mut p.cx } else { &mut p.cy };
                *c = PsdMatrix::from_symmetric(c.as_matrix() + &dir * s);
                rjsd_cov(&p)
            };
            let fd = (perturbed(H)? - perturbed(-H)?) / (2.0 * H);
            let analytic = g.dot(&dir);
            worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-6));
        }
    }
    Ok((worst <= 1e-4, format!("max relative error {worst:.2e}")))
}

/// Kernel approximation error of random Fourier features shrinks with `D`.
fn check_rff_convergence(_ops: &Ops, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let x = DMatrix::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(50, 2, |_, _| rng.random_range(-1.0..1.0));
    let exact: Vec<f64> = (0..50)
        .map(|i| {
            let d2: f64 = (x.row(i) - y.row(i)).norm_squared();
            (-d2 / 2.0).exp()
        })
        .collect();
    let mut medians = Vec::new();
    for dim in [64, 256, 2048] {
        let mut errors: Vec<f64> = (0..20)
            .map(|s| -> Result<f64> {
                let map = FourierFeatureMap::sample(2, dim, 1.0, rng.random::<u64>() ^ s)?;
                let (fx, fy) = (map.map(&x)?, map.map(&y)?);
                Ok((0..50)
                    .map(|i| (fx.row(i).dot(&fy.row(i)) - exact[i]).abs())
                    .fold(0.0, f64::max))
            })
            .collect::<Result<_>>()?;
        errors.sort_by(f64::total_cmp);
        medians.push(0.5 * (errors[9] + errors[10]));
    }
    let ok = medians.windows(2).all(|w| w[1] < w[0]);
    Ok((ok, format!("median max error by D (64, 256, 2048): {medians:.3?}")))
}

type Check = fn(&Ops, &mut ChaCha8Rng) -> Result<(bool, String)>;

pub const CHECK_NAMES: [&str; 5] = ["gram-equality", "mutual-info-form", "hs-lower-bound", "gradient-fd", "rff-convergence"];

/// Runs every check with its own random stream derived from `seed`.
pub fn run_selfcheck(seed: u64, mutation: Option<Mutation>) -> Vec<CheckResult> {
    let ops = Ops { mutation };
    let checks: [Check; 5] = [check_gram_equality, check_mutual_info, check_hs_bound, check_gradient, check_rff_convergence];
    CHECK_NAMES
        .iter()
        .zip(checks)
        .enumerate()
        .map(|(i, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5E1F, i as u64));
            let (passed, detail) = match check(&ops, &mut rng) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name: name.to_string(),
                passed,
                detail,
            }
        })
        .collect()
}
