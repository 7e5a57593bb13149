//! Analytic gradients of the covariance estimator and reverse-mode passes
//! through dense and Fourier-feature layers, plus an Adam optimizer.
//!
//! The entropy differential is `dS(C) = -tr((ln C + I) dC)` for symmetric
//! perturbations, so with `M = π₁C_X + π₂C_Y`
//!
//! ```text
//! ∂D/∂C_X = π₁ (ln C_X - ln M),   ∂D/∂C_Y = π₂ (ln C_Y - ln M)
//! ```
//!
//! and through `C_X = Φ_Xᵀ Φ_X / N`, `∂D/∂Φ_X = (2/N) Φ_X ∂D/∂C_X`.

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::divergence::{clean_estimate, CovariancePair};
use crate::error::{Error, Result};
use crate::features::{DeepFourierNetwork, FourierFeatureMap, GradTape, Mlp, MlpTape, Trainable};
use crate::spectral::{check_unit_trace, eigh_psd, LOG_FLOOR};

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Value of the covariance estimator together with `(∂D/∂C_X, ∂D/∂C_Y)`.
pub fn rjsd_cov_with_grad(p: &CovariancePair) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let mix = p.mixture();
    for m in [&p.cx, &p.cy, &mix] {
        check_unit_trace(m)?;
    }
    let sm = eigh_psd(&mix)?;
    let sx = eigh_psd(&p.cx)?;
    let sy = eigh_psd(&p.cy)?;
    let value = sm.entropy() - p.pi1 * sx.entropy() - p.pi2 * sy.entropy();
    let log_m = sm.log_matrix(LOG_FLOOR);
    let gx = symmetrize((sx.log_matrix(LOG_FLOOR) - &log_m) * p.pi1);
    let gy = symmetrize((sy.log_matrix(LOG_FLOOR) - &log_m) * p.pi2);
    Ok((clean_estimate(value), gx, gy))
}

pub fn grad_rjsd_wrt_cov(p: &CovariancePair) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (_, gx, gy) = rjsd_cov_with_grad(p)?;
    Ok((gx, gy))
}

/// Estimate and gradients with respect to the feature rows, for explicit
/// mixing proportions `pi1`, `pi2`.
pub fn rjsd_features_with_grad(
    phi_x: &DMatrix<f64>,
    phi_y: &DMatrix<f64>,
    pi1: f64,
    pi2: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    if phi_x.ncols() != phi_y.ncols() {
        return Err(Error::DimMismatch {
            expected: phi_x.ncols(),
            found: phi_y.ncols(),
        });
    }
    crate::divergence::check_unit_rows(phi_x)?;
    crate::divergence::check_unit_rows(phi_y)?;
    let cx = crate::divergence::cov_unchecked(phi_x);
    let cy = crate::divergence::cov_unchecked(phi_y);
    let pair = CovariancePair::with_weights(cx, cy, pi1, pi2)?;
    let (value, gx, gy) = rjsd_cov_with_grad(&pair)?;
    Ok((
        value,
        cov_grad_to_features(phi_x, &gx, 1.0),
        cov_grad_to_features(phi_y, &gy, 1.0),
    ))
}

/// `(∂D/∂Φ_X, ∂D/∂Φ_Y)` for explicit proportions.
pub fn grad_rjsd_wrt_features(
    phi_x: &DMatrix<f64>,
    phi_y: &DMatrix<f64>,
    pi1: f64,
    pi2: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (_, gx, gy) = rjsd_features_with_grad(phi_x, phi_y, pi1, pi2)?;
    Ok((gx, gy))
}

/// Chains `∂D/∂C` through `C = scale · Φᵀ Φ / N`.
pub(crate) fn cov_grad_to_features(phi: &DMatrix<f64>, g: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    phi * g * (2.0 * scale / phi.nrows() as f64)
}

/// Gradients of a dense layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrads {
    pub weight: DMatrix<f64>,
    pub bias: RowDVector<f64>,
}

/// Gradients of a Fourier-feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierGrads {
    pub omega: DMatrix<f64>,
    pub sigma: f64,
}

/// Reverse pass through a dense stack: per-layer gradients and the input gradient.
pub fn mlp_backward(
    mlp: &Mlp,
    tape: &MlpTape,
    upstream: &DMatrix<f64>,
) -> Result<(Vec<LayerGrads>, DMatrix<f64>)> {
    if tape.layer_count() != mlp.layers.len() {
        return Err(Error::TapeMismatch(format!(
            "tape has {} layers, network has {}",
            tape.layer_count(),
            mlp.layers.len()
        )));
    }
    if let Some(out) = tape.outputs.last() {
        if out.shape() != upstream.shape() {
            return Err(Error::TapeMismatch(format!(
                "upstream shape {:?} does not match output shape {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
    }
    let mut grads = Vec::with_capacity(mlp.layers.len());
    let mut delta = upstream.clone();
    for (l, layer) in mlp.layers.iter().enumerate().rev() {
        let z = &tape.pre_activations[l];
        let a = &tape.outputs[l];
        let act = layer.activation;
        let mut dz = delta;
        for ((g, &zv), &av) in dz.iter_mut().zip(z.iter()).zip(a.iter()) {
            *g *= act.derivative(zv, av);
        }
        let weight = tape.inputs[l].transpose() * &dz;
        let bias = RowDVector::from_iterator(dz.ncols(), dz.column_iter().map(|c| c.sum()));
        delta = &dz * layer.weight.transpose();
        grads.push(LayerGrads { weight, bias });
    }
    grads.reverse();
    Ok((grads, delta))
}

/// Reverse pass through `φ(h) = √(2/D)[cos(hω/σ), sin(hω/σ)]`, using
/// `d cos u = -sin u du` and `d sin u = cos u du`.
pub fn fourier_backward(
    map: &FourierFeatureMap,
    input: &DMatrix<f64>,
    args: &DMatrix<f64>,
    upstream: &DMatrix<f64>,
) -> Result<(FourierGrads, DMatrix<f64>)> {
    let (n, f) = (args.nrows(), map.num_frequencies());
    if upstream.shape() != (n, 2 * f) || args.ncols() != f || input.shape() != (n, map.input_dim()) {
        return Err(Error::TapeMismatch(format!(
            "Fourier layer expects upstream {:?}, got {:?}",
            (n, 2 * f),
            upstream.shape()
        )));
    }
    let scale = (1.0 / f as f64).sqrt();
    let d_args = DMatrix::from_fn(n, f, |i, k| {
        let (s, c) = args[(i, k)].sin_cos();
        scale * (c * upstream[(i, 2 * k + 1)] - s * upstream[(i, 2 * k)])
    });
    let inv_sigma = 1.0 / map.sigma;
    let omega = (input.transpose() * &d_args) * inv_sigma;
    let sigma = -d_args.dot(args) * inv_sigma;
    let d_input = &d_args * map.omega.transpose() * inv_sigma;
    Ok((FourierGrads { omega, sigma }, d_input))
}

/// Gradients of a [`DeepFourierNetwork`] and of its input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
    pub terminal: FourierGrads,
    pub input_map: Option<FourierGrads>,
    pub epsilon_logit: Option<f64>,
    pub input: DMatrix<f64>,
}

impl NetworkGrads {
    /// Gradient tensors in the order of [`DeepFourierNetwork::param_slices_mut`].
    pub fn slices(&self, sel: Trainable) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if sel.body {
            for l in &self.layers {
                out.push(l.weight.as_slice());
                out.push(l.bias.as_slice());
            }
        }
        if sel.frequencies {
            out.push(self.terminal.omega.as_slice());
        }
        if sel.bandwidth {
            out.push(std::slice::from_ref(&self.terminal.sigma));
        }
        if let Some(psi) = &self.input_map {
            if sel.frequencies {
                out.push(psi.omega.as_slice());
            }
            if sel.bandwidth {
                out.push(std::slice::from_ref(&psi.sigma));
            }
        }
        if sel.mixing {
            if let Some(g) = &self.epsilon_logit {
                out.push(std::slice::from_ref(g));
            }
        }
        out
    }

    /// Elementwise sum, used to merge the X and Y passes of one objective.
    pub fn accumulate(&mut self, other: &NetworkGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        self.terminal.omega += &other.terminal.omega;
        self.terminal.sigma += other.terminal.sigma;
        if let (Some(a), Some(b)) = (self.input_map.as_mut(), other.input_map.as_ref()) {
            a.omega += &b.omega;
            a.sigma += b.sigma;
        }
        if let (Some(a), Some(b)) = (self.epsilon_logit.as_mut(), other.epsilon_logit) {
            *a += b;
        }
    }
}

/// Reverse pass of [`DeepFourierNetwork::forward`] for an upstream gradient
/// with respect to the embedded rows.
pub fn dffn_backward(
    net: &DeepFourierNetwork,
    tape: &GradTape,
    upstream: &DMatrix<f64>,
) -> Result<NetworkGrads> {
    if upstream.shape() != tape.output.shape() {
        return Err(Error::TapeMismatch(format!(
            "upstream shape {:?} does not match embedding shape {:?}",
            upstream.shape(),
            tape.output.shape()
        )));
    }
    if tape.layer_count() != net.body.layers.len()
        || tape.terminal_input.ncols() != net.terminal.input_dim()
        || tape.input_args.is_some() != net.input_map.is_some()
    {
        return Err(Error::TapeMismatch("tape was recorded for a different network".into()));
    }
    let n = upstream.nrows();
    let d_terminal_out = net.terminal.output_dim();

    let (terminal_upstream, psi_part, epsilon_logit) = match (&net.input_map, net.epsilon()) {
        (Some(psi), Some(eps)) => {
            let up_t = upstream.columns(0, d_terminal_out).into_owned();
            let up_psi = upstream.columns(d_terminal_out, psi.output_dim()).into_owned();
            let phi_t = &tape.terminal_features;
            let phi_psi = tape.input_features.as_ref().expect("checked above");
            // d√(1-ε)/dlogit = -ε√(1-ε)/2, d√ε/dlogit = √ε(1-ε)/2
            let d_logit = -up_t.dot(phi_t) * eps * (1.0 - eps).sqrt() / 2.0
                + up_psi.dot(phi_psi) * eps.sqrt() * (1.0 - eps) / 2.0;
            let args = tape.input_args.as_ref().expect("checked above");
            let (psi_grads, psi_dx) = fourier_backward(psi, &tape.input, args, &(up_psi * eps.sqrt()))?;
            (up_t * (1.0 - eps).sqrt(), Some((psi_grads, psi_dx)), Some(d_logit))
        }
        _ => (upstream.clone(), None, None),
    };

    let (terminal, d_terminal_in) = fourier_backward(
        &net.terminal,
        &tape.terminal_input,
        &tape.terminal_args,
        &terminal_upstream,
    )?;

    let body_width = net.body.output_dim().unwrap_or(0);
    let (d_body_out, mut d_input) = if net.input_map.is_some() {
        let d_x = d_terminal_in.columns(body_width, net.input_dim()).into_owned();
        (d_terminal_in.columns(0, body_width).into_owned(), d_x)
    } else {
        (d_terminal_in, DMatrix::zeros(n, net.input_dim()))
    };

    let layers = if net.body.is_empty() {
        if net.input_map.is_none() {
            d_input += &d_body_out;
        }
        Vec::new()
    } else {
        let (layers, dx) = mlp_backward(&net.body, &tape.body, &d_body_out)?;
        d_input += &dx;
        layers
    };

    let input_map = psi_part.map(|(g, dx)| {
        d_input += &dx;
        g
    });

    Ok(NetworkGrads {
        layers,
        terminal,
        input_map,
        epsilon_logit,
        input: d_input,
    })
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn with_beta1(mut self, beta1: f64) -> Self {
        self.beta1 = beta1;
        self
    }
}

/// Moment buffers for one optimization run. Buffers are sized on the first step.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update. With `maximize` the parameters move
    /// along the gradient instead of against it.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], maximize: bool) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors but {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {i}: {} parameters, {} gradients",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != grads.len()
            || self.first.iter().zip(grads).any(|(m, g)| m.len() != g.len())
        {
            return Err(Error::ShapeMismatch("tensor layout changed between steps".into()));
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let sign = if maximize { 1.0 } else { -1.0 };
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] += sign * lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    maximize: bool,
) -> Result<()> {
    state.step(params, grads, maximize)
}

/// Entropy of the trace-normalized Gaussian Gram matrix built from squared
/// distances `d2`, and its derivative with respect to the bandwidth.
///
/// With `K = exp(-d2 / 2σ²) / n`, `dK/dσ = K ⊙ d2 / σ³` and, because the
/// diagonal of `K` does not depend on `σ`, `dS/dσ = -⟨ln K, dK/dσ⟩`.
pub fn gram_entropy_with_sigma_grad(d2: &DMatrix<f64>, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {sigma}")));
    }
    let n = d2.nrows() as f64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let k = d2.map(|v| (-v * inv).exp() / n);
    let spectrum = eigh_psd(&crate::spectral::PsdMatrix::from_symmetric(k.clone()))?;
    let log_k = spectrum.log_matrix(LOG_FLOOR);
    let dk = k.zip_map(d2, |kv, dv| kv * dv / sigma.powi(3));
    Ok((spectrum.entropy(), -log_k.dot(&dk)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::rjsd_cov;
    use crate::features::{Activation, DenseLayer};
    use crate::spectral::PsdMatrix;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit_trace(dim: usize, rng: &mut impl Rng) -> PsdMatrix {
        let a = DMatrix::from_fn(dim + 2, dim, |_, _| rng.random_range(-1.0..1.0));
        let c = a.tr_mul(&a) + DMatrix::identity(dim, dim) * 0.05;
        let t = c.trace();
        PsdMatrix::from_symmetric(c / t)
    }

    #[test]
    fn gram_entropy_bandwidth_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(7, 2, |_, _| rng.random_range(-1.0..1.0));
        let d2 = crate::divergence::squared_distances(&x);
        let sigma = 0.7;
        let (_, g) = gram_entropy_with_sigma_grad(&d2, sigma).unwrap();
        let h = 1e-5;
        let fd = (gram_entropy_with_sigma_grad(&d2, sigma + h).unwrap().0
            - gram_entropy_with_sigma_grad(&d2, sigma - h).unwrap().0)
            / (2.0 * h);
        assert!((g - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{g} vs {fd}");
    }

    #[test]
    fn coincident_covariances_are_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_unit_trace(4, &mut rng);
        let (gx, gy) = grad_rjsd_wrt_cov(&CovariancePair::new(c.clone(), c, 3, 5).unwrap()).unwrap();
        assert!(gx.amax() < 1e-9 && gy.amax() < 1e-9);
    }

    #[test]
    fn diagonal_commuting_closed_form() {
        let cx = PsdMatrix::from_diagonal(&[0.6, 0.3, 0.1]);
        let cy = PsdMatrix::from_diagonal(&[0.2, 0.5, 0.3]);
        let p = CovariancePair::new(cx, cy, 1, 1).unwrap();
        let (gx, gy) = grad_rjsd_wrt_cov(&p).unwrap();
        let lx = [0.6f64, 0.3, 0.1];
        let ly = [0.2f64, 0.5, 0.3];
        for i in 0..3 {
            let lm = 0.5 * (lx[i] + ly[i]);
            assert_abs_diff_eq!(gx[(i, i)], 0.5 * (lx[i].ln() - lm.ln()), epsilon = 1e-12);
            assert_abs_diff_eq!(gy[(i, i)], 0.5 * (ly[i].ln() - lm.ln()), epsilon = 1e-12);
            for j in 0..3 {
                if i != j {
                    assert!(gx[(i, j)].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn outputs_are_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = CovariancePair::new(random_unit_trace(5, &mut rng), random_unit_trace(5, &mut rng), 4, 7).unwrap();
        let (gx, gy) = grad_rjsd_wrt_cov(&p).unwrap();
        assert!((&gx - gx.transpose()).amax() <= 1e-12);
        assert!((&gy - gy.transpose()).amax() <= 1e-12);
    }

    #[test]
    fn identical_features_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut phi = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
        for mut r in phi.row_iter_mut() {
            let n = r.norm();
            r /= n;
        }
        let (gx, gy) = grad_rjsd_wrt_features(&phi, &phi, 0.5, 0.5).unwrap();
        assert!(gx.amax() < 1e-9 && gy.amax() < 1e-9);
    }

    #[test]
    fn value_matches_plain_estimator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = CovariancePair::new(random_unit_trace(5, &mut rng), random_unit_trace(5, &mut rng), 2, 3).unwrap();
        let (v, _, _) = rjsd_cov_with_grad(&p).unwrap();
        assert_abs_diff_eq!(v, rjsd_cov(&p).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let body = Mlp::from_sizes(&[2, 4, 3], Activation::Softplus, Activation::Identity, &mut rng);
        let terminal = FourierFeatureMap::sample_with(5, 6, 1.0, &mut rng).unwrap();
        let psi = FourierFeatureMap::sample_with(2, 4, 1.0, &mut rng).unwrap();
        let net = DeepFourierNetwork::combined(body, terminal, psi).unwrap();
        let x = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let (out, tape) = net.forward(&x).unwrap();
        let g = dffn_backward(&net, &tape, &DMatrix::zeros(out.nrows(), out.ncols())).unwrap();
        assert!(g.slices(Trainable::ALL).iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_mismatch_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let small = DeepFourierNetwork::plain(FourierFeatureMap::sample_with(2, 4, 1.0, &mut rng).unwrap());
        let body = Mlp::new(vec![DenseLayer::init(2, 2, Activation::Tanh, &mut rng)]).unwrap();
        let deep = DeepFourierNetwork::new(body, FourierFeatureMap::sample_with(2, 4, 1.0, &mut rng).unwrap()).unwrap();
        let x = DMatrix::from_element(2, 2, 0.1);
        let (out, tape) = small.forward(&x).unwrap();
        assert!(matches!(dffn_backward(&deep, &tape, &out), Err(Error::TapeMismatch(_))));
        assert!(matches!(
            dffn_backward(&small, &tape, &DMatrix::zeros(3, 4)),
            Err(Error::TapeMismatch(_))
        ));
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![1.5, -2.0];
        let mut s = AdamState::new(AdamConfig::new(0.1));
        for _ in 0..5 {
            s.step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], false).unwrap();
        }
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(s.steps(), 5);
    }

    #[test]
    fn adam_sign_contract() {
        for maximize in [false, true] {
            let mut x = [0.0];
            let mut prev = 0.0;
            let mut s = AdamState::new(AdamConfig::new(0.01));
            for _ in 0..50 {
                s.step(&mut [&mut x[..]], &[&[2.0]], maximize).unwrap();
                if maximize {
                    assert!(x[0] > prev);
                } else {
                    assert!(x[0] < prev);
                }
                prev = x[0];
            }
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = [1.0];
        let mut s = AdamState::new(AdamConfig::new(0.1));
        let mut reached = None;
        for t in 0..200 {
            let g = 2.0 * x[0];
            s.step(&mut [&mut x[..]], &[&[g]], false).unwrap();
            if x[0].abs() < 0.05 && reached.is_none() {
                reached = Some(t);
            }
        }
        assert!(reached.is_some(), "final x = {}", x[0]);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = vec![0.0; 3];
        let mut s = AdamState::new(AdamConfig::new(0.1));
        let r = s.step(&mut [p.as_mut_slice()], &[&[1.0, 2.0]], false);
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }
}
