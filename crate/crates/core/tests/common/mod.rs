//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repjsd::divergence::rjsd_features;
use repjsd::features::{Activation, Mlp};
use repjsd::grad::{dffn_backward, gram_entropy_with_sigma_grad, rjsd_cov_with_grad, rjsd_features_with_grad};
use repjsd::{CovariancePair, DeepFourierNetwork, FourierFeatureMap, PsdMatrix};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows drawn uniformly on the unit sphere.
pub fn unit_rows(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    for mut r in m.row_iter_mut() {
        let norm = r.norm();
        r /= norm;
    }
    m
}

pub fn gaussian(n: usize, d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// `ΦᵀΦ / N`, written out without the library.
pub fn covariance(phi: &DMatrix<f64>) -> DMatrix<f64> {
    phi.transpose() * phi / phi.nrows() as f64
}

/// Von Neumann entropy by direct eigendecomposition.
pub fn entropy(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .filter(|&&l| l > 1e-15)
        .map(|&l| -l * l.ln())
        .sum()
}

/// `S(π₁A + π₂B) - π₁S(A) - π₂S(B)`.
pub fn divergence(a: &DMatrix<f64>, b: &DMatrix<f64>, pi1: f64) -> f64 {
    let pi2 = 1.0 - pi1;
    entropy(&(a * pi1 + b * pi2)) - pi1 * entropy(a) - pi2 * entropy(b)
}

/// Pooled Gram divergence on `Z = [X; Y]` with proportions from the row counts.
pub fn gram_divergence(gram: &DMatrix<f64>, n: usize) -> f64 {
    let total = gram.nrows();
    let m = total - n;
    let norm = |k: DMatrix<f64>| {
        let s = k.nrows() as f64;
        k / s
    };
    let kz = norm(gram.clone());
    let kx = norm(gram.view((0, 0), (n, n)).into_owned());
    let ky = norm(gram.view((n, n), (m, m)).into_owned());
    let pi1 = n as f64 / total as f64;
    entropy(&kz) - pi1 * entropy(&kx) - (1.0 - pi1) * entropy(&ky)
}

/// `ln((N+M)/√(NM))`.
pub fn ceiling(n: usize, m: usize) -> f64 {
    ((n + m) as f64 / ((n * m) as f64).sqrt()).ln()
}

/// `‖a - b‖ / max(‖a‖, ‖b‖)`, with a floor guarding vanishing gradients.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let a = DVector::from_column_slice(analytic);
    let b = DVector::from_column_slice(numeric);
    (&a - &b).norm() / a.norm().max(b.norm()).max(1e-8)
}

fn central<F: FnMut(f64) -> f64>(mut f: F) -> f64 {
    (f(FD_STEP) - f(-FD_STEP)) / (2.0 * FD_STEP)
}

fn symmetric_traceless(d: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = gaussian(d, d, rng);
    let mut s = &a + a.transpose();
    let shift = s.trace() / d as f64;
    for i in 0..d {
        s[(i, i)] -= shift;
    }
    s
}

/// Directional derivatives of the covariance-space estimator along eight
/// trace-preserving symmetric directions.
pub fn spectral_head_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, m, d) = (r.random_range(10..40), r.random_range(10..40), r.random_range(2..8));
    let (px, py) = (unit_rows(n, d, &mut r), unit_rows(m, d, &mut r));
    let (cx, cy) = (covariance(&px), covariance(&py));
    let pi1 = n as f64 / (n + m) as f64;
    let pair = CovariancePair::new(PsdMatrix::new(cx.clone()).unwrap(), PsdMatrix::new(cy.clone()).unwrap(), n, m)
        .unwrap();
    let (_, gx, gy) = rjsd_cov_with_grad(&pair).unwrap();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for k in 0..8 {
        let dir = symmetric_traceless(d, &mut r);
        if k % 2 == 0 {
            analytic.push(gx.dot(&dir));
            numeric.push(central(|h| divergence(&(&cx + &dir * h), &cy, pi1)));
        } else {
            analytic.push(gy.dot(&dir));
            numeric.push(central(|h| divergence(&cx, &(&cy + &dir * h), pi1)));
        }
    }
    rel_err(&analytic, &numeric)
}

fn normalized(v: DMatrix<f64>) -> DMatrix<f64> {
    let mut v = v;
    for mut r in v.row_iter_mut() {
        let norm = r.norm();
        r /= norm;
    }
    v
}

/// Feature-row gradients along directions that keep the rows on the sphere.
pub fn feature_chain_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, m, d) = (r.random_range(5..20), r.random_range(5..20), r.random_range(3..10));
    let (px, py) = (unit_rows(n, d, &mut r), unit_rows(m, d, &mut r));
    let pi1 = n as f64 / (n + m) as f64;
    let (_, gx, gy) = rjsd_features_with_grad(&px, &py, pi1, 1.0 - pi1).unwrap();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for _ in 0..6 {
        let vx = gaussian(n, d, &mut r);
        let vy = gaussian(m, d, &mut r);
        let tangent = |p: &DMatrix<f64>, v: &DMatrix<f64>| {
            let mut t = v.clone();
            for i in 0..p.nrows() {
                let along = p.row(i).dot(&v.row(i));
                let row = v.row(i) - p.row(i) * along;
                t.set_row(i, &row);
            }
            t
        };
        analytic.push(gx.dot(&tangent(&px, &vx)) + gy.dot(&tangent(&py, &vy)));
        numeric.push(central(|h| {
            let qx = normalized(&px + &vx * h);
            let qy = normalized(&py + &vy * h);
            divergence(&covariance(&qx), &covariance(&qy), pi1)
        }));
    }
    rel_err(&analytic, &numeric)
}

/// A small network with a dense body, both Fourier maps and the mixing logit.
pub fn small_combined_network(d: usize, seed: u64) -> DeepFourierNetwork {
    let mut r = rng(seed);
    let body = Mlp::from_sizes(&[d, 5, 4], Activation::Softplus, Activation::Identity, &mut r);
    let terminal = FourierFeatureMap::sample(4 + d, 8, r.random_range(0.5..2.0), r.random()).unwrap();
    let psi = FourierFeatureMap::sample(d, 6, r.random_range(0.5..2.0), r.random()).unwrap();
    let mut net = DeepFourierNetwork::combined(body, terminal, psi).unwrap();
    net.epsilon_logit = Some(r.random_range(-1.0..1.0));
    net
}

fn network_objective(net: &DeepFourierNetwork, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    rjsd_features(&net.embed(x).unwrap(), &net.embed(y).unwrap()).unwrap()
}

/// Parameter group errors of a combined network, keyed by group name:
/// `dense`, `fourier`, `input-map`, `epsilon-logit` and `input`.
pub fn network_errors(seed: u64) -> Vec<(&'static str, f64)> {
    let mut r = rng(seed);
    let d = r.random_range(2..4);
    let net = small_combined_network(d, r.random());
    let (n, m) = (r.random_range(6..14), r.random_range(6..14));
    let x = gaussian(n, d, &mut r);
    let y = gaussian(m, d, &mut r) * 1.5;
    let pi1 = n as f64 / (n + m) as f64;

    let (px, tx) = net.forward(&x).unwrap();
    let (py, ty) = net.forward(&y).unwrap();
    let (_, gx, gy) = rjsd_features_with_grad(&px, &py, pi1, 1.0 - pi1).unwrap();
    let mut grads = dffn_backward(&net, &tx, &gx).unwrap();
    let input_grad = grads.input.clone();
    grads.accumulate(&dffn_backward(&net, &ty, &gy).unwrap());

    let layers = net.body.layers.len();
    let mut labels = vec!["dense"; 2 * layers];
    labels.extend(["fourier", "fourier", "input-map", "input-map", "epsilon-logit"]);
    let analytic: Vec<Vec<f64>> = grads.slices(repjsd::features::Trainable::ALL).iter().map(|s| s.to_vec()).collect();
    assert_eq!(analytic.len(), labels.len());

    let mut groups: Vec<(&'static str, Vec<f64>, Vec<f64>)> = Vec::new();
    for (s, label) in labels.iter().enumerate() {
        let len = analytic[s].len();
        let coords: Vec<usize> = (0..len.min(6)).map(|_| r.random_range(0..len)).collect();
        for j in coords {
            let fd = central(|h| {
                let mut p = net.clone();
                p.param_slices_mut(repjsd::features::Trainable::ALL)[s][j] += h;
                network_objective(&p, &x, &y)
            });
            match groups.iter_mut().find(|g| g.0 == *label) {
                Some(g) => {
                    g.1.push(analytic[s][j]);
                    g.2.push(fd);
                }
                None => groups.push((label, vec![analytic[s][j]], vec![fd])),
            }
        }
    }
    let (mut a_in, mut n_in) = (Vec::new(), Vec::new());
    for _ in 0..6 {
        let (i, j) = (r.random_range(0..n), r.random_range(0..d));
        a_in.push(input_grad[(i, j)]);
        n_in.push(central(|h| {
            let mut xp = x.clone();
            xp[(i, j)] += h;
            network_objective(&net, &xp, &y)
        }));
    }
    groups.push(("input", a_in, n_in));
    groups.into_iter().map(|(l, a, n)| (l, rel_err(&a, &n))).collect()
}

/// Gram-entropy bandwidth derivative against central differences.
pub fn kernel_bandwidth_error(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(5..30);
    let z = gaussian(n, 2, &mut r);
    let d2 = DMatrix::from_fn(n, n, |i, j| (z.row(i) - z.row(j)).norm_squared());
    let sigma = r.random_range(0.5..3.0);
    let (_, g) = gram_entropy_with_sigma_grad(&d2, sigma).unwrap();
    let fd = central(|h| {
        let s = sigma + h;
        entropy(&d2.map(|v| (-v / (2.0 * s * s)).exp() / n as f64))
    });
    rel_err(&[g], &[fd])
}
