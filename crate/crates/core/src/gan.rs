//! Toy min-max game on the 8-Gaussians mixture: a dense generator against a
//! deep Fourier-feature critic, both driven by the same divergence. The critic
//! takes one ascent step per batch, then the generator one descent step
//! through the updated critic.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, SampleSet};
use crate::error::{Error, Result};
use crate::estimate::{batch_objective, MIN_BANDWIDTH};
use crate::features::{Activation, DeepFourierNetwork, DenseLayer, FourierFeatureMap, Mlp, Trainable};
use crate::divergence::{cov_unchecked, CovariancePair};
use crate::grad::{cov_grad_to_features, dffn_backward, mlp_backward, rjsd_cov_with_grad, AdamConfig, AdamState};
use crate::tst::median_distance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub lr_d: f64,
    pub lr_g: f64,
    pub beta1: f64,
    pub batch_size: usize,
    /// Number of (critic, generator) update pairs.
    pub steps: usize,
    pub hidden: usize,
    /// Frequencies of the critic's Fourier layer.
    pub num_frequencies: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 32,
            lr_d: 1e-4,
            lr_g: 5e-4,
            beta1: 0.5,
            batch_size: 256,
            steps: 3000,
            hidden: 256,
            num_frequencies: 8,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.batch_size < 2 || self.hidden == 0 || self.num_frequencies == 0 {
            return Err(Error::InvalidConfig(
                "noise dimension, width and frequency count must be positive and batches hold at least 2 rows".into(),
            ));
        }
        if !(self.lr_d >= 0.0 && self.lr_g >= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Generator and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanModels {
    pub generator: Mlp,
    pub critic: DeepFourierNetwork,
}

impl GanModels {
    /// Generator: three leaky-ReLU(0.01) layers, a tanh layer, then a linear
    /// map to the plane. Critic: four leaky-ReLU(0.01) layers under a Fourier
    /// layer whose bandwidth is the median distance of the initial critic
    /// features on `reference`.
    pub fn new(cfg: &GanConfig, reference: &DMatrix<f64>) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x6A7, 0));
        let h = cfg.hidden;
        let lrelu = Activation::LeakyRelu(0.01);
        let generator = Mlp::new(vec![
            DenseLayer::init(cfg.noise_dim, h, lrelu, &mut rng),
            DenseLayer::init(h, h, lrelu, &mut rng),
            DenseLayer::init(h, h, lrelu, &mut rng),
            DenseLayer::init(h, h, Activation::Tanh, &mut rng),
            DenseLayer::init(h, 2, Activation::Identity, &mut rng),
        ])?;
        let body = Mlp::from_sizes(&[2, h, h, h, h], lrelu, lrelu, &mut rng);
        let sigma = median_distance(&body.apply(reference)?);
        let terminal = FourierFeatureMap::sample_with(h, 2 * cfg.num_frequencies, sigma, &mut rng)?;
        Ok(Self {
            generator,
            critic: DeepFourierNetwork::new(body, terminal)?,
        })
    }

    pub fn generate(&self, noise: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.generator.apply(noise)
    }

    /// `n` generated points from noise seeded by `seed`.
    pub fn sample(&self, n: usize, noise_dim: usize, seed: u64) -> Result<SampleSet> {
        let noise = uniform_noise(n, noise_dim, &mut ChaCha8Rng::seed_from_u64(seed));
        SampleSet::new(self.generate(&noise)?, "generated", seed)
    }

    /// Critic divergence between `real` and generated rows, without training.
    pub fn divergence(&self, real: &DMatrix<f64>, fake: &DMatrix<f64>) -> Result<f64> {
        crate::divergence::rjsd_features(&self.critic.embed(real)?, &self.critic.embed(fake)?)
    }
}

pub fn uniform_noise(n: usize, dim: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, dim, |_, _| rng.random::<f64>())
}

fn real_batch(real: &SampleSet, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..real.len())).collect();
    real.rows.select_rows(&idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanTraceRecord {
    pub step: usize,
    /// Divergence seen by the critic step, before its update.
    pub divergence: f64,
    pub wallclock_ms: f64,
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub models: GanModels,
    pub trace: Vec<GanTraceRecord>,
}

/// Divergence of one batch pair and its gradient with respect to the fake rows.
fn generator_objective(critic: &DeepFourierNetwork, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let (phi_x, _) = critic.forward(x)?;
    let (phi_y, tape_y) = critic.forward(y)?;
    let pair = CovariancePair::new(cov_unchecked(&phi_x), cov_unchecked(&phi_y), x.nrows(), y.nrows())?;
    let (value, _, gy) = rjsd_cov_with_grad(&pair)?;
    let up = cov_grad_to_features(&phi_y, &gy, 1.0);
    Ok((value, dffn_backward(critic, &tape_y, &up)?.input))
}

fn check_finite(step: usize, what: &str, values: &[&[f64]]) -> Result<()> {
    if values.iter().all(|s| s.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            epoch: step,
            what: what.into(),
        })
    }
}

/// Alternating training on 2-D `real` data.
pub fn gan_train(cfg: &GanConfig, real: &SampleSet) -> Result<GanRun> {
    cfg.validate()?;
    if real.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            found: real.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x6A7, 1));
    let reference = real_batch(real, cfg.batch_size, &mut rng);
    let mut models = GanModels::new(cfg, &reference)?;
    let mut adam_d = AdamState::new(AdamConfig::new(cfg.lr_d).with_beta1(cfg.beta1));
    let mut adam_g = AdamState::new(AdamConfig::new(cfg.lr_g).with_beta1(cfg.beta1));
    let mut trace = Vec::with_capacity(cfg.steps);
    let start = Instant::now();

    for step in 0..cfg.steps {
        let x = real_batch(real, cfg.batch_size, &mut rng);
        let z = uniform_noise(cfg.batch_size, cfg.noise_dim, &mut rng);
        let (y, gen_tape) = models.generator.forward(&z)?;

        let (value, grads) = batch_objective(&models.critic, &x, &y, None)?;
        check_finite(step, "critic divergence", &[&[value]])?;
        let g = grads.slices(Trainable::ALL);
        check_finite(step, "critic gradients", &g)?;
        adam_d.step(&mut models.critic.param_slices_mut(Trainable::ALL), &g, true)?;
        models.critic.clamp_bandwidths(MIN_BANDWIDTH);

        let (_, dy) = generator_objective(&models.critic, &x, &y)?;
        let (layer_grads, _) = mlp_backward(&models.generator, &gen_tape, &dy)?;
        let g: Vec<&[f64]> = layer_grads
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect();
        check_finite(step, "generator gradients", &g)?;
        adam_g.step(&mut models.generator.param_slices_mut(), &g, false)?;

        trace.push(GanTraceRecord {
            step,
            divergence: value,
            wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(GanRun { models, trace })
}

/// Mode statistics of generated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCoverage {
    pub modes_hit: usize,
    /// Points within the radius of each center.
    pub histogram: Vec<usize>,
    /// KL of the add-one smoothed histogram from uniform; `ln k` when no
    /// point lands near any center.
    pub kl_to_uniform: f64,
}

/// Assigns each point to its nearest center if it lies within
/// `radius_mult · std` of it. A mode is hit when it receives at least 1% of
/// all points. The KL divergence compares the add-one smoothed histogram with
/// the uniform distribution over centers.
pub fn mode_coverage(generated: &SampleSet, centers: &[[f64; 2]], std: f64, radius_mult: f64) -> ModeCoverage {
    let k = centers.len();
    let mut histogram = vec![0usize; k];
    let radius2 = (radius_mult * std).powi(2);
    for row in generated.rows.row_iter() {
        let nearest = centers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, (row[0] - c[0]).powi(2) + (row[1] - c[1]).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, d2)) = nearest {
            if d2 <= radius2 {
                histogram[i] += 1;
            }
        }
    }
    let needed = 0.01 * generated.len() as f64;
    let modes_hit = histogram.iter().filter(|&&c| c as f64 >= needed && c > 0).count();
    let hits = histogram.iter().sum::<usize>();
    let total = (hits + k) as f64;
    let kl_to_uniform = if hits == 0 {
        (k as f64).ln()
    } else {
        histogram
            .iter()
            .map(|&c| {
                let p = (c as f64 + 1.0) / total;
                p * (p * k as f64).ln()
            })
            .sum()
    };
    ModeCoverage {
        modes_hit,
        histogram,
        kl_to_uniform,
    }
}
