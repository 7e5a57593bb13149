//! Fourier-feature embeddings.
//!
//! A [`FourierFeatureMap`] sends `x ∈ ℝ^d` to
//! `√(2/D) [cos(ω₁ᵀx/σ), sin(ω₁ᵀx/σ), …, cos(ω_{D/2}ᵀx/σ), sin(ω_{D/2}ᵀx/σ)]`,
//! which has unit norm for every input and approximates the Gaussian kernel
//! `exp(-‖x-y‖²/(2σ²))` through inner products when `ω ~ N(0, I)`.
//!
//! A [`DeepFourierNetwork`] puts such a map on top of a dense network. With an
//! input map attached it produces the combined deep-kernel embedding
//! `[√(1-ε) φ(f(x) ⊕ x)] ⊕ [√ε ψ(x)]`, still unit norm.

use std::path::Path;

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random Fourier features for the Gaussian kernel with a trainable bandwidth.
///
/// `omega` is stored at unit bandwidth (`d × D/2`, entries `N(0, 1)` when
/// sampled); the effective frequencies are `omega / sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierFeatureMap {
    pub omega: DMatrix<f64>,
    pub sigma: f64,
}

impl FourierFeatureMap {
    /// Draws `output_dim / 2` Gaussian frequencies for inputs of dimension `input_dim`.
    pub fn sample(input_dim: usize, output_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::sample_with(input_dim, output_dim, sigma, &mut rng)
    }

    pub fn sample_with(
        input_dim: usize,
        output_dim: usize,
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if output_dim < 2 || output_dim % 2 != 0 {
            return Err(Error::BadShape(format!(
                "feature dimension must be even and >= 2, got {output_dim}"
            )));
        }
        if input_dim == 0 {
            return Err(Error::BadShape("input dimension must be positive".into()));
        }
        let omega = DMatrix::from_fn(input_dim, output_dim / 2, |_, _| rng.sample(StandardNormal));
        Self::from_parts(omega, sigma)
    }

    pub fn from_parts(omega: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {sigma}")));
        }
        if omega.nrows() == 0 || omega.ncols() == 0 {
            return Err(Error::BadShape("empty frequency matrix".into()));
        }
        Ok(Self { omega, sigma })
    }

    pub fn input_dim(&self) -> usize {
        self.omega.nrows()
    }

    pub fn num_frequencies(&self) -> usize {
        self.omega.ncols()
    }

    /// Embedding dimension `D`.
    pub fn output_dim(&self) -> usize {
        2 * self.omega.ncols()
    }

    /// Effective frequencies `omega / sigma`.
    pub fn frequencies(&self) -> DMatrix<f64> {
        &self.omega / self.sigma
    }

    /// Maps each row of `x` to its unit-norm feature vector.
    pub fn map(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.map_with_args(x)?.0)
    }

    /// Returns the features together with the phase arguments `x ω / σ`.
    pub(crate) fn map_with_args(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let args = (x * &self.omega) / self.sigma;
        Ok((self.features_from_args(&args), args))
    }

    pub(crate) fn features_from_args(&self, args: &DMatrix<f64>) -> DMatrix<f64> {
        let scale = (1.0 / self.num_frequencies() as f64).sqrt();
        let mut phi = DMatrix::zeros(args.nrows(), self.output_dim());
        for k in 0..args.ncols() {
            for i in 0..args.nrows() {
                let (s, c) = args[(i, k)].sin_cos();
                phi[(i, 2 * k)] = scale * c;
                phi[(i, 2 * k + 1)] = scale * s;
            }
        }
        phi
    }
}

/// Convenience wrapper matching the free-function style of the other modules.
pub fn sample_rff(d: usize, dim: usize, sigma: f64, seed: u64) -> Result<FourierFeatureMap> {
    FourierFeatureMap::sample(d, dim, sigma, seed)
}

pub fn map_rff(map: &FourierFeatureMap, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    map.map(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slope", rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    LeakyRelu(f64),
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => softplus(z),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`, given the activation value `a = apply(z)`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Softplus => sigmoid(z),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `a = act(x W + b)` acting on row-stacked samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `in × out`.
    pub weight: DMatrix<f64>,
    pub bias: RowDVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform `±1/√in` initialization for weights and biases.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: DMatrix::from_fn(input, output, |_, _| rng.random_range(-bound..bound)),
            bias: RowDVector::from_fn(output, |_, _| rng.random_range(-bound..bound)),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: DMatrix::zeros(input, output),
            bias: RowDVector::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub(crate) fn pre_activation(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * &self.weight;
        for mut row in z.row_iter_mut() {
            row += &self.bias;
        }
        z
    }
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub(crate) inputs: Vec<DMatrix<f64>>,
    pub(crate) pre_activations: Vec<DMatrix<f64>>,
    pub(crate) outputs: Vec<DMatrix<f64>>,
}

impl MlpTape {
    pub fn layer_count(&self) -> usize {
        self.pre_activations.len()
    }
}

/// A stack of dense layers; the empty stack is the identity map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::BadShape(format!(
                    "layer {i} outputs {} features but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::BadShape(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(Self { layers })
    }

    /// Builds layers of the given widths (`sizes[0]` is the input dimension),
    /// `hidden` between layers and `last` after the final one.
    pub fn from_sizes(
        sizes: &[usize],
        hidden: Activation,
        last: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let n = sizes.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { last } else { hidden };
                DenseLayer::init(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(DenseLayer::input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(DenseLayer::output_dim)
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, MlpTape)> {
        if let Some(d) = self.input_dim() {
            if x.ncols() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    found: x.ncols(),
                });
            }
        }
        let mut tape = MlpTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&h);
            let act = layer.activation;
            let a = z.map(|v| act.apply(v));
            tape.inputs.push(std::mem::replace(&mut h, a.clone()));
            tape.pre_activations.push(z);
            tape.outputs.push(a);
        }
        Ok((h, tape))
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }
}

/// Everything recorded by [`DeepFourierNetwork::forward`] that the backward
/// pass needs.
#[derive(Debug, Clone)]
pub struct GradTape {
    pub(crate) input: DMatrix<f64>,
    pub(crate) body: MlpTape,
    /// Argument of the terminal map: `f(x)`, or `f(x) ⊕ x` for the combined mapping.
    pub(crate) terminal_input: DMatrix<f64>,
    pub(crate) terminal_args: DMatrix<f64>,
    pub(crate) terminal_features: DMatrix<f64>,
    pub(crate) input_args: Option<DMatrix<f64>>,
    pub(crate) input_features: Option<DMatrix<f64>>,
    pub(crate) output: DMatrix<f64>,
}

impl GradTape {
    pub fn layer_count(&self) -> usize {
        self.body.layer_count()
    }

    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn input(&self) -> &DMatrix<f64> {
        &self.input
    }
}

/// Dense network with a trainable Fourier-feature terminal layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFourierNetwork {
    pub body: Mlp,
    pub terminal: FourierFeatureMap,
    /// Second map `ψ` on the raw input; enables the combined mapping.
    pub input_map: Option<FourierFeatureMap>,
    /// Pre-sigmoid mixing weight `ε`; present exactly when `input_map` is.
    pub epsilon_logit: Option<f64>,
}

impl DeepFourierNetwork {
    /// A bare Fourier-feature layer with no hidden network.
    pub fn plain(terminal: FourierFeatureMap) -> Self {
        Self {
            body: Mlp::default(),
            terminal,
            input_map: None,
            epsilon_logit: None,
        }
    }

    pub fn new(body: Mlp, terminal: FourierFeatureMap) -> Result<Self> {
        let net = Self {
            body,
            terminal,
            input_map: None,
            epsilon_logit: None,
        };
        net.validate()?;
        Ok(net)
    }

    /// Combined mapping: the terminal map sees `f(x) ⊕ x`, `input_map` sees `x`,
    /// and the mixing weight starts at `ε = sigmoid(0) = 1/2`.
    pub fn combined(body: Mlp, terminal: FourierFeatureMap, input_map: FourierFeatureMap) -> Result<Self> {
        let net = Self {
            body,
            terminal,
            input_map: Some(input_map),
            epsilon_logit: Some(0.0),
        };
        net.validate()?;
        Ok(net)
    }

    pub fn is_combined(&self) -> bool {
        self.input_map.is_some()
    }

    pub fn input_dim(&self) -> usize {
        match (&self.input_map, self.body.input_dim()) {
            (Some(psi), _) => psi.input_dim(),
            (None, Some(d)) => d,
            (None, None) => self.terminal.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.terminal.output_dim() + self.input_map.as_ref().map_or(0, |m| m.output_dim())
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon_logit.map(sigmoid)
    }

    pub fn validate(&self) -> Result<()> {
        Mlp::new(self.body.layers.clone())?;
        if self.input_map.is_some() != self.epsilon_logit.is_some() {
            return Err(Error::BadShape(
                "input map and mixing logit must be set together".into(),
            ));
        }
        let body_out = self.body.output_dim();
        let expected = match &self.input_map {
            Some(psi) => {
                if let Some(d) = self.body.input_dim() {
                    if d != psi.input_dim() {
                        return Err(Error::DimMismatch {
                            expected: psi.input_dim(),
                            found: d,
                        });
                    }
                }
                body_out.unwrap_or(0) + psi.input_dim()
            }
            None => body_out.unwrap_or(self.terminal.input_dim()),
        };
        if expected != self.terminal.input_dim() {
            return Err(Error::DimMismatch {
                expected,
                found: self.terminal.input_dim(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, GradTape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let (body_out, body_tape) = self.body.forward(x)?;
        let terminal_input = if self.input_map.is_some() {
            hconcat(&body_out, x)
        } else {
            body_out
        };
        let (terminal_features, terminal_args) = self.terminal.map_with_args(&terminal_input)?;

        let (output, input_args, input_features) = match (&self.input_map, self.epsilon()) {
            (Some(psi), Some(eps)) => {
                let (psi_features, psi_args) = psi.map_with_args(x)?;
                let out = hconcat(
                    &(&terminal_features * (1.0 - eps).sqrt()),
                    &(&psi_features * eps.sqrt()),
                );
                (out, Some(psi_args), Some(psi_features))
            }
            _ => (terminal_features.clone(), None, None),
        };
        let tape = GradTape {
            input: x.clone(),
            body: body_tape,
            terminal_input,
            terminal_args,
            terminal_features,
            input_args,
            input_features,
            output: output.clone(),
        };
        Ok((output, tape))
    }

    pub fn embed(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Combined deep-kernel embedding; fails unless an input map is attached.
    pub fn combined_mapping(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if self.input_map.is_none() {
            return Err(Error::MissingInputMap);
        }
        self.embed(x)
    }

    /// Trainable parameter tensors in a fixed order: body weights and biases,
    /// terminal frequencies, terminal bandwidth, input-map frequencies,
    /// input-map bandwidth, mixing logit. Only tensors enabled in `sel` appear.
    pub fn param_slices_mut(&mut self, sel: Trainable) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if sel.body {
            out.extend(self.body.param_slices_mut());
        }
        if sel.frequencies {
            out.push(self.terminal.omega.as_mut_slice());
        }
        if sel.bandwidth {
            out.push(std::slice::from_mut(&mut self.terminal.sigma));
        }
        if let Some(psi) = self.input_map.as_mut() {
            if sel.frequencies {
                out.push(psi.omega.as_mut_slice());
            }
            if sel.bandwidth {
                out.push(std::slice::from_mut(&mut psi.sigma));
            }
        }
        if sel.mixing {
            if let Some(logit) = self.epsilon_logit.as_mut() {
                out.push(std::slice::from_mut(logit));
            }
        }
        out
    }

    /// Keeps bandwidths strictly positive after an optimizer step.
    pub fn clamp_bandwidths(&mut self, min_sigma: f64) {
        self.terminal.sigma = self.terminal.sigma.max(min_sigma);
        if let Some(psi) = self.input_map.as_mut() {
            psi.sigma = psi.sigma.max(min_sigma);
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let net: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        net.validate()?;
        Ok(net)
    }
}

/// Which parameter groups an optimizer should touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub body: bool,
    pub frequencies: bool,
    pub bandwidth: bool,
    pub mixing: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        body: true,
        frequencies: true,
        bandwidth: true,
        mixing: true,
    };
    pub const BANDWIDTH_ONLY: Trainable = Trainable {
        body: false,
        frequencies: false,
        bandwidth: true,
        mixing: false,
    };
    pub const NOTHING: Trainable = Trainable {
        body: false,
        frequencies: false,
        bandwidth: false,
        mixing: false,
    };
}

pub(crate) fn hconcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-2.0..2.0))
    }

    fn row_norms(m: &DMatrix<f64>) -> Vec<f64> {
        m.row_iter().map(|r| r.norm()).collect()
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = FourierFeatureMap::sample(1, 2, 1.0, 42).unwrap();
        let b = FourierFeatureMap::sample(1, 2, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.omega.shape(), (1, 1));
        assert_ne!(a, FourierFeatureMap::sample(1, 2, 1.0, 43).unwrap());
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(matches!(FourierFeatureMap::sample(3, 0, 1.0, 0), Err(Error::BadShape(_))));
        assert!(matches!(FourierFeatureMap::sample(3, 5, 1.0, 0), Err(Error::BadShape(_))));
        assert!(FourierFeatureMap::sample(3, 4, 0.0, 0).is_err());
    }

    #[test]
    fn frequency_variance_matches_bandwidth() {
        let f = FourierFeatureMap::sample(1, 10_000, 2.0, 9).unwrap();
        let w = f.frequencies();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.25).abs() < 0.01, "variance {var}");
    }

    #[test]
    fn zero_input_maps_to_cosine_ones() {
        let f = FourierFeatureMap::sample(3, 8, 1.0, 1).unwrap();
        let phi = f.map(&DMatrix::zeros(1, 3)).unwrap();
        let s = (2.0f64 / 8.0).sqrt();
        for k in 0..4 {
            assert_abs_diff_eq!(phi[(0, 2 * k)], s, epsilon = 1e-15);
            assert_abs_diff_eq!(phi[(0, 2 * k + 1)], 0.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(phi.row(0).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn map_rejects_wrong_width() {
        let f = FourierFeatureMap::sample(3, 8, 1.0, 1).unwrap();
        assert!(matches!(f.map(&DMatrix::zeros(2, 2)), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn gram_approximates_gaussian_kernel() {
        let f = FourierFeatureMap::sample(2, 2000, 1.0, 5).unwrap();
        let x = random_matrix(20, 2, 6) * 0.5;
        let phi = f.map(&x).unwrap();
        for i in 0..10 {
            let j = i + 10;
            let approx = phi.row(i).dot(&phi.row(j));
            let d2 = (x.row(i) - x.row(j)).norm_squared();
            let exact = (-d2 / 2.0).exp();
            assert!((approx - exact).abs() < 0.05, "{approx} vs {exact}");
        }
    }

    #[test]
    fn gram_is_translation_invariant() {
        let f = FourierFeatureMap::sample(3, 64, 0.7, 2).unwrap();
        let x = random_matrix(6, 3, 3);
        let shift = RowDVector::from_row_slice(&[0.3, -1.2, 2.5]);
        let mut xs = x.clone();
        for mut row in xs.row_iter_mut() {
            row += &shift;
        }
        let g1 = f.map(&x).map(|p| &p * p.transpose()).unwrap();
        let g2 = f.map(&xs).map(|p| &p * p.transpose()).unwrap();
        assert!((g1 - g2).amax() < 1e-12);
    }

    #[test]
    fn zero_network_gives_identical_rows() {
        let body = Mlp::new(vec![DenseLayer::zeros(3, 4, Activation::Softplus)]).unwrap();
        let terminal = FourierFeatureMap::sample(4, 10, 1.0, 0).unwrap();
        let net = DeepFourierNetwork::new(body, terminal.clone()).unwrap();
        let out = net.embed(&random_matrix(5, 3, 1)).unwrap();
        let constant = DMatrix::from_element(1, 4, std::f64::consts::LN_2);
        let expected = terminal.map(&constant).unwrap();
        for row in out.row_iter() {
            assert!((row - expected.row(0)).amax() < 1e-14);
        }
    }

    #[test]
    fn identity_layer_reduces_to_plain_map() {
        let layer = DenseLayer {
            weight: DMatrix::identity(3, 3),
            bias: RowDVector::zeros(3),
            activation: Activation::Identity,
        };
        let terminal = FourierFeatureMap::sample(3, 16, 1.3, 4).unwrap();
        let net = DeepFourierNetwork::new(Mlp::new(vec![layer]).unwrap(), terminal.clone()).unwrap();
        let x = random_matrix(7, 3, 8);
        assert!((net.embed(&x).unwrap() - terminal.map(&x).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn network_rows_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let body = Mlp::from_sizes(&[3, 8, 8], Activation::Softplus, Activation::Identity, &mut rng);
        let terminal = FourierFeatureMap::sample_with(8, 12, 1.0, &mut rng).unwrap();
        let net = DeepFourierNetwork::new(body, terminal).unwrap();
        for n in row_norms(&net.embed(&random_matrix(9, 3, 2)).unwrap()) {
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    fn combined_net(eps_logit: f64, dim: usize) -> DeepFourierNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let body = Mlp::from_sizes(&[2, 5, 5], Activation::Softplus, Activation::Identity, &mut rng);
        let terminal = FourierFeatureMap::sample_with(7, dim, 1.0, &mut rng).unwrap();
        let psi = FourierFeatureMap::sample_with(2, dim, 1.0, &mut rng).unwrap();
        let mut net = DeepFourierNetwork::combined(body, terminal, psi).unwrap();
        net.epsilon_logit = Some(eps_logit);
        net
    }

    #[test]
    fn combined_mapping_block_norms() {
        let net = combined_net(0.0, 10);
        let out = net.combined_mapping(&random_matrix(6, 2, 1)).unwrap();
        for row in out.row_iter() {
            let a = row.columns(0, 10).norm_squared();
            let b = row.columns(10, 10).norm_squared();
            assert_abs_diff_eq!(a, 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(b, 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(row.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn combined_mapping_degenerate_mixing() {
        // sigmoid(logit) = 1 - 1e-9
        let net = combined_net((1.0f64 / 1e-9 - 1.0).ln(), 10);
        let x = random_matrix(4, 2, 3);
        let out = net.combined_mapping(&x).unwrap();
        let psi = net.input_map.as_ref().unwrap().map(&x).unwrap();
        assert!((out.columns(10, 10) - psi).amax() < 1e-8);
        assert!(out.columns(0, 10).amax() < 1e-4);
    }

    #[test]
    fn combined_kernel_matches_closed_form() {
        let net = combined_net(0.3, 4000);
        let x = random_matrix(10, 2, 21) * 0.4;
        let out = net.combined_mapping(&x).unwrap();
        let f = net.body.apply(&x).unwrap();
        let eps = net.epsilon().unwrap();
        for i in 0..5 {
            let j = i + 5;
            let k1 = (-(f.row(i) - f.row(j)).norm_squared() / 2.0).exp();
            let k2 = (-(x.row(i) - x.row(j)).norm_squared() / 2.0).exp();
            let exact = (1.0 - eps) * k1 * k2 + eps * k2;
            let approx = out.row(i).dot(&out.row(j));
            assert!((approx - exact).abs() < 0.05, "{approx} vs {exact}");
        }
    }

    #[test]
    fn combined_mapping_requires_input_map() {
        let net = DeepFourierNetwork::plain(FourierFeatureMap::sample(2, 4, 1.0, 0).unwrap());
        assert!(matches!(
            net.combined_mapping(&DMatrix::zeros(1, 2)),
            Err(Error::MissingInputMap)
        ));
    }

    #[test]
    fn shape_chain_validated() {
        let body = Mlp::new(vec![DenseLayer::zeros(3, 4, Activation::Tanh)]).unwrap();
        let terminal = FourierFeatureMap::sample(5, 4, 1.0, 0).unwrap();
        assert!(DeepFourierNetwork::new(body, terminal).is_err());
        let bad = Mlp::new(vec![
            DenseLayer::zeros(3, 4, Activation::Tanh),
            DenseLayer::zeros(5, 2, Activation::Tanh),
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = combined_net(0.2, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        assert_eq!(DeepFourierNetwork::load_json(&path).unwrap(), net);
    }
}
