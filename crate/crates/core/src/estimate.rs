//! Variational estimation: maximize the covariance estimator over the
//! parameters of the embedding, optionally on exponentially averaged
//! covariances.
//!
//! With averaging, the divergence at epoch `T` is computed from
//! `Ĉ[T] = (1-α) Ĉ[T-1] + α C`, and only the current batch term `α C` carries
//! gradient. The stored history is treated as a constant.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, Dataset, SampleSet};
use crate::divergence::{cov_unchecked, CovariancePair};
use crate::error::{Error, Result};
use crate::features::{Activation, DeepFourierNetwork, FourierFeatureMap, Mlp, Trainable};
use crate::grad::{cov_grad_to_features, dffn_backward, rjsd_cov_with_grad, AdamConfig, AdamState};
use crate::spectral::PsdMatrix;

/// Bandwidths are kept at or above this value after every optimizer step.
pub const MIN_BANDWIDTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Number of frequencies `D/2` of the terminal Fourier layer.
    pub num_frequencies: usize,
    pub sigma_init: f64,
    pub use_ema: bool,
    pub ema_alpha: f64,
    pub seed: u64,
    pub beta1: f64,
    /// Hidden widths of the dense network in front of the Fourier layer.
    /// Empty means the Fourier layer acts on the raw input.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub trainable: Trainable,
    /// Rows per minibatch when training on fixed sets; `None` is full batch.
    pub batch_size: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 1e-3,
            num_frequencies: 50,
            sigma_init: 2.0,
            use_ema: false,
            ema_alpha: 0.1,
            seed: 0,
            beta1: 0.9,
            hidden: Vec::new(),
            activation: Activation::Softplus,
            trainable: Trainable::ALL,
            batch_size: None,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "EMA rate must lie in (0, 1], got {}",
                self.ema_alpha
            )));
        }
        if !(self.lr >= 0.0) || !(self.sigma_init > 0.0) || self.num_frequencies == 0 {
            return Err(Error::InvalidConfig(
                "learning rate must be nonnegative, bandwidth positive and at least one frequency".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }

    /// Fresh network for inputs of dimension `d`, initialized from `seed`.
    pub fn build_network(&self, d: usize) -> Result<DeepFourierNetwork> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x1417, 0));
        let width = 2 * self.num_frequencies;
        if self.hidden.is_empty() {
            let map = FourierFeatureMap::sample_with(d, width, self.sigma_init, &mut rng)?;
            return Ok(DeepFourierNetwork::plain(map));
        }
        let mut sizes = vec![d];
        sizes.extend(&self.hidden);
        let body = Mlp::from_sizes(&sizes, self.activation, self.activation, &mut rng);
        let map = FourierFeatureMap::sample_with(*sizes.last().unwrap(), width, self.sigma_init, &mut rng)?;
        DeepFourierNetwork::new(body, map)
    }
}

/// Supplies the `(X, Y)` batch for each epoch.
pub trait SampleSource {
    fn dim(&self) -> usize;
    fn draw(&mut self, epoch: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)>;
}

/// The same two sets every epoch, whole or in shuffled minibatches.
pub struct FixedSamples {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    batch: Option<usize>,
    rng: ChaCha8Rng,
}

impl FixedSamples {
    pub fn new(x: &SampleSet, y: &SampleSet, batch: Option<usize>, seed: u64) -> Result<Self> {
        if x.dim() != y.dim() {
            return Err(Error::DimMismatch {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        Ok(Self {
            x: x.rows.clone(),
            y: y.rows.clone(),
            batch,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xBA7C, 0)),
        })
    }

    fn subsample(m: &DMatrix<f64>, batch: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        if batch >= m.nrows() {
            return m.clone();
        }
        let mut idx: Vec<usize> = (0..m.nrows()).collect();
        idx.shuffle(rng);
        idx.truncate(batch);
        m.select_rows(&idx)
    }
}

impl SampleSource for FixedSamples {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn draw(&mut self, _epoch: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match self.batch {
            None => Ok((self.x.clone(), self.y.clone())),
            Some(b) => Ok((
                Self::subsample(&self.x, b, &mut self.rng),
                Self::subsample(&self.y, b, &mut self.rng),
            )),
        }
    }
}

/// Fresh draws of `n` and `m` rows from a synthetic family at every epoch.
pub struct FreshSamples {
    pub dataset: Dataset,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

impl SampleSource for FreshSamples {
    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn draw(&mut self, epoch: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (x, y) = self
            .dataset
            .sample_pair(self.n, self.m, derive_seed(self.seed, 0xE90C, epoch as u64))?;
        Ok((x.rows, y.rows))
    }
}

/// Exponentially averaged covariance pair.
#[derive(Debug, Clone)]
pub struct EmaState {
    pub cx: PsdMatrix,
    pub cy: PsdMatrix,
    /// Number of batches folded in so far.
    pub epoch: usize,
}

impl EmaState {
    pub fn start(cx: PsdMatrix, cy: PsdMatrix) -> Result<Self> {
        if cx.dim() != cy.dim() {
            return Err(Error::DimMismatch {
                expected: cx.dim(),
                found: cy.dim(),
            });
        }
        Ok(Self { cx, cy, epoch: 1 })
    }

    pub fn update(&mut self, cx: &PsdMatrix, cy: &PsdMatrix, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("EMA rate must lie in (0, 1], got {alpha}")));
        }
        for c in [cx, cy] {
            if c.dim() != self.cx.dim() {
                return Err(Error::DimMismatch {
                    expected: self.cx.dim(),
                    found: c.dim(),
                });
            }
        }
        self.cx = self.cx.combine(1.0 - alpha, cx, alpha)?;
        self.cy = self.cy.combine(1.0 - alpha, cy, alpha)?;
        self.epoch += 1;
        Ok(())
    }
}

/// Folds a batch into `state`; with no prior state the batch itself is the state.
pub fn ema_update(state: Option<EmaState>, cx: PsdMatrix, cy: PsdMatrix, alpha: f64) -> Result<EmaState> {
    match state {
        None => EmaState::start(cx, cy),
        Some(mut s) => {
            s.update(&cx, &cy, alpha)?;
            Ok(s)
        }
    }
}

/// One line of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub estimate: f64,
    pub sigma: f64,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    /// Divergence at the last epoch.
    pub estimate: f64,
    pub trace: Vec<TraceRecord>,
    pub network: DeepFourierNetwork,
}

impl Estimate {
    /// Mean estimate over the last `window` epochs.
    pub fn tail_mean(&self, window: usize) -> f64 {
        let tail = self.tail(window);
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Standard deviation of the estimate over the last `window` epochs.
    pub fn tail_sd(&self, window: usize) -> f64 {
        let tail = self.tail(window);
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len().max(2).saturating_sub(1) as f64;
        var.sqrt()
    }

    fn tail(&self, window: usize) -> Vec<f64> {
        let start = self.trace.len().saturating_sub(window.max(1));
        self.trace[start..].iter().map(|r| r.estimate).collect()
    }
}

/// Divergence and parameter gradients for one batch, updating `ema` if given.
pub(crate) fn batch_objective(
    net: &DeepFourierNetwork,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    ema: Option<(&mut Option<EmaState>, f64)>,
) -> Result<(f64, crate::grad::NetworkGrads)> {
    let (phi_x, tape_x) = net.forward(x)?;
    let (phi_y, tape_y) = net.forward(y)?;
    let cx = cov_unchecked(&phi_x);
    let cy = cov_unchecked(&phi_y);
    let (pair, scale) = match ema {
        None => (CovariancePair::new(cx, cy, x.nrows(), y.nrows())?, 1.0),
        Some((slot, alpha)) => {
            let scale = if slot.is_some() { alpha } else { 1.0 };
            let state = ema_update(slot.take(), cx, cy, alpha)?;
            let pair = CovariancePair::new(state.cx.clone(), state.cy.clone(), x.nrows(), y.nrows())?;
            *slot = Some(state);
            (pair, scale)
        }
    };
    let (value, gx, gy) = rjsd_cov_with_grad(&pair)?;
    let up_x = cov_grad_to_features(&phi_x, &gx, scale);
    let up_y = cov_grad_to_features(&phi_y, &gy, scale);
    let mut grads = dffn_backward(net, &tape_x, &up_x)?;
    grads.accumulate(&dffn_backward(net, &tape_y, &up_y)?);
    Ok((value, grads))
}

fn all_finite(grads: &crate::grad::NetworkGrads) -> bool {
    grads
        .slices(Trainable::ALL)
        .iter()
        .all(|s| s.iter().all(|v| v.is_finite()))
}

/// Trains `net` by gradient ascent on batches from `source` and returns the
/// trace. Runs `cfg.use_ema` with averaged covariances.
pub fn train_on_source(
    net: &mut DeepFourierNetwork,
    source: &mut dyn SampleSource,
    cfg: &EstimatorConfig,
) -> Result<Vec<TraceRecord>> {
    cfg.validate()?;
    if source.dim() != net.input_dim() {
        return Err(Error::DimMismatch {
            expected: net.input_dim(),
            found: source.dim(),
        });
    }
    let mut adam = AdamState::new(AdamConfig::new(cfg.lr).with_beta1(cfg.beta1));
    let mut ema: Option<EmaState> = None;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let start = Instant::now();
    for epoch in 0..cfg.epochs {
        let (x, y) = source.draw(epoch)?;
        let ema_arg = cfg.use_ema.then_some((&mut ema, cfg.ema_alpha));
        let (value, grads) = batch_objective(net, &x, &y, ema_arg).map_err(|e| match e {
            Error::NoConvergence { .. } | Error::NotPsd { .. } => Error::NonFinite {
                epoch,
                what: format!("eigendecomposition ({e})"),
            },
            other => other,
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: "divergence estimate".into(),
            });
        }
        if !all_finite(&grads) {
            return Err(Error::NonFinite {
                epoch,
                what: "parameter gradients".into(),
            });
        }
        trace.push(TraceRecord {
            epoch,
            estimate: value,
            sigma: net.terminal.sigma,
            wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        let g = grads.slices(cfg.trainable);
        adam.step(&mut net.param_slices_mut(cfg.trainable), &g, true)?;
        net.clamp_bandwidths(MIN_BANDWIDTH);
    }
    Ok(trace)
}

fn run(source: &mut dyn SampleSource, cfg: &EstimatorConfig) -> Result<Estimate> {
    cfg.validate()?;
    let mut network = cfg.build_network(source.dim())?;
    let trace = train_on_source(&mut network, source, cfg)?;
    let estimate = trace.last().map(|r| r.estimate).unwrap_or(0.0);
    Ok(Estimate {
        estimate,
        trace,
        network,
    })
}

/// Estimates the divergence between two fixed sample sets.
pub fn estimate_jsd(x: &SampleSet, y: &SampleSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    let mut source = FixedSamples::new(x, y, cfg.batch_size, cfg.seed)?;
    run(&mut source, cfg)
}

/// [`estimate_jsd`] with exponentially averaged covariances.
pub fn estimate_jsd_ema(x: &SampleSet, y: &SampleSet, cfg: &EstimatorConfig) -> Result<Estimate> {
    let cfg = EstimatorConfig {
        use_ema: true,
        ..cfg.clone()
    };
    estimate_jsd(x, y, &cfg)
}

/// Estimates the divergence of a synthetic family, drawing `n` fresh samples
/// from each distribution at every epoch.
pub fn estimate_jsd_fresh(dataset: Dataset, n: usize, cfg: &EstimatorConfig) -> Result<Estimate> {
    let mut source = FreshSamples {
        dataset,
        n,
        m: n,
        seed: cfg.seed,
    };
    run(&mut source, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;
    use crate::divergence::divergence_ceiling;

    fn small_cfg() -> EstimatorConfig {
        EstimatorConfig {
            epochs: 40,
            lr: 1e-2,
            num_frequencies: 8,
            sigma_init: 1.0,
            ..EstimatorConfig::default()
        }
    }

    fn diag(v: &[f64]) -> PsdMatrix {
        PsdMatrix::from_diagonal(v)
    }

    #[test]
    fn ema_alpha_one_is_memoryless() {
        let s = ema_update(None, diag(&[0.5, 0.5]), diag(&[1.0, 0.0]), 1.0).unwrap();
        let s = ema_update(Some(s), diag(&[0.2, 0.8]), diag(&[0.3, 0.7]), 1.0).unwrap();
        assert_eq!(s.cx.as_matrix(), diag(&[0.2, 0.8]).as_matrix());
        assert_eq!(s.cy.as_matrix(), diag(&[0.3, 0.7]).as_matrix());
        assert_eq!(s.epoch, 2);
    }

    #[test]
    fn ema_converges_geometrically() {
        let target = diag(&[0.6, 0.3, 0.1]);
        let mut s = EmaState::start(diag(&[0.0, 0.0, 1.0]), diag(&[1.0, 0.0, 0.0])).unwrap();
        for _ in 0..50 {
            s.update(&target, &target, 0.3).unwrap();
            assert!((s.cx.trace() - 1.0).abs() < 1e-8);
        }
        // (0.7)^50 ≈ 1.8e-8
        assert!((s.cx.as_matrix() - target.as_matrix()).norm() < 1e-6);
        assert!((s.cy.as_matrix() - target.as_matrix()).norm() < 1e-6);
    }

    #[test]
    fn ema_rejects_bad_input() {
        let s = EmaState::start(diag(&[0.5, 0.5]), diag(&[0.5, 0.5])).unwrap();
        assert!(matches!(
            ema_update(Some(s.clone()), diag(&[1.0]), diag(&[1.0]), 0.5),
            Err(Error::DimMismatch { .. })
        ));
        assert!(ema_update(Some(s), diag(&[0.5, 0.5]), diag(&[0.5, 0.5]), 0.0).is_err());
    }

    #[test]
    fn ema_at_rate_one_reproduces_plain_training() {
        let ds = Dataset::new(Family::Gauss { d: 2 });
        let (x, y) = ds.sample_pair(64, 64, 3).unwrap();
        let cfg = small_cfg();
        let plain = estimate_jsd(&x, &y, &cfg).unwrap();
        let ema = estimate_jsd_ema(&x, &y, &EstimatorConfig { ema_alpha: 1.0, ..cfg }).unwrap();
        let a: Vec<_> = plain.trace.iter().map(|r| (r.estimate, r.sigma)).collect();
        let b: Vec<_> = ema.trace.iter().map(|r| (r.estimate, r.sigma)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let ds = Dataset::new(Family::Gauss { d: 2 });
        let (x, y) = ds.sample_pair(50, 70, 9).unwrap();
        let cfg = EstimatorConfig {
            hidden: vec![6],
            ..small_cfg()
        };
        let a = estimate_jsd(&x, &y, &cfg).unwrap();
        let b = estimate_jsd(&x, &y, &cfg).unwrap();
        let ea: Vec<_> = a.trace.iter().map(|r| r.estimate.to_bits()).collect();
        let eb: Vec<_> = b.trace.iter().map(|r| r.estimate.to_bits()).collect();
        assert_eq!(ea, eb);
        let ceiling = divergence_ceiling(50, 70);
        assert!(a.trace.iter().all(|r| r.estimate >= 0.0 && r.estimate <= ceiling + 1e-9));
    }

    #[test]
    fn training_increases_separated_estimate() {
        let ds = Dataset::new(Family::Gauss { d: 1 });
        let cfg = EstimatorConfig {
            epochs: 200,
            lr: 5e-2,
            ..small_cfg()
        };
        let est = estimate_jsd_fresh(ds, 128, &cfg).unwrap();
        let first: f64 = est.trace[..10].iter().map(|r| r.estimate).sum::<f64>() / 10.0;
        assert!(est.tail_mean(10) > first, "{} vs {first}", est.tail_mean(10));
    }

    #[test]
    fn minibatches_change_the_trace() {
        let ds = Dataset::new(Family::Gauss { d: 2 });
        let (x, y) = ds.sample_pair(80, 80, 1).unwrap();
        let full = estimate_jsd(&x, &y, &small_cfg()).unwrap();
        let mini = estimate_jsd(&x, &y, &EstimatorConfig { batch_size: Some(20), ..small_cfg() }).unwrap();
        assert_eq!(mini.trace.len(), full.trace.len());
        assert_ne!(mini.trace[0].estimate, full.trace[0].estimate);
    }

    #[test]
    fn config_validation() {
        let bad = [
            EstimatorConfig { epochs: 0, ..Default::default() },
            EstimatorConfig { ema_alpha: 0.0, ..Default::default() },
            EstimatorConfig { ema_alpha: 1.5, ..Default::default() },
            EstimatorConfig { sigma_init: 0.0, ..Default::default() },
            EstimatorConfig { batch_size: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let x = SampleSet::new(DMatrix::zeros(4, 2), "x", 0).unwrap();
        let y = SampleSet::new(DMatrix::zeros(4, 3), "y", 0).unwrap();
        assert!(matches!(
            estimate_jsd(&x, &y, &small_cfg()),
            Err(Error::DimMismatch { .. })
        ));
    }
}
