//! Permutation two-sample tests with a learned embedding or kernel.
//!
//! The embedding is fit on a training pair and then frozen. Each test set is
//! pooled, and the statistic is recomputed on `B` random relabelings. The null
//! hypothesis is rejected when the observed statistic is strictly greater than
//! the `⌈(1-α)(B+1)⌉`-th smallest null value.
//!
//! Relabeling leaves the pooled mixture untouched, so its entropy is computed
//! once per test set and each permutation only needs the two group entropies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{derive_seed, Dataset, Family, SampleSet, Which};
use crate::divergence::{clean_estimate, gaussian_gram, squared_distances, vstack};
use crate::error::{Error, Result};
use crate::estimate::{train_on_source, EstimatorConfig, FixedSamples};
use crate::features::{hconcat, Activation, DeepFourierNetwork, FourierFeatureMap, Mlp, Trainable};
use crate::grad::{gram_entropy_with_sigma_grad, AdamConfig, AdamState};
use crate::spectral::entropy_fast;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Trained frequencies and bandwidth on the raw input.
    JsdFf,
    /// Random frequencies; only the bandwidth is trained.
    JsdRff,
    /// Deep network with the combined input/feature mapping.
    JsdD,
    /// Kernel estimator with a Gaussian kernel of selected bandwidth.
    JsdK,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::JsdFf, Method::JsdRff, Method::JsdD, Method::JsdK];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::JsdFf => "jsd-ff",
            Method::JsdRff => "jsd-rff",
            Method::JsdD => "jsd-d",
            Method::JsdK => "jsd-k",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsd-ff" => Ok(Method::JsdFf),
            "jsd-rff" => Ok(Method::JsdRff),
            "jsd-d" => Ok(Method::JsdD),
            "jsd-k" => Ok(Method::JsdK),
            _ => Err(Error::InvalidConfig(format!(
                "unknown method '{s}' (expected jsd-ff, jsd-rff, jsd-d or jsd-k)"
            ))),
        }
    }
}

/// Training settings of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub lr: f64,
    pub num_frequencies: usize,
    /// Width of the hidden layers of the deep network.
    pub hidden: usize,
    pub epochs: usize,
}

impl MethodSettings {
    /// Defaults per data family; `None` stands for file-based data.
    pub fn defaults(method: Method, family: Option<Family>) -> Self {
        let (lr, num_frequencies, hidden) = match family {
            Some(Family::Blobs) => (1e-3, 50, 50),
            Some(Family::Hdgm { d }) => (if method == Method::JsdD { 5e-2 } else { 5e-3 }, 15, 3 * d),
            _ => (1e-2, 15, 20),
        };
        Self {
            lr,
            num_frequencies,
            hidden,
            epochs: if method == Method::JsdK { 20 } else { 500 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstConfig {
    pub method: Method,
    pub permutations: usize,
    pub alpha_level: f64,
    pub n_test_sets: usize,
    pub n_trials: usize,
    /// Overrides the per-family defaults of [`MethodSettings::defaults`].
    pub settings: Option<MethodSettings>,
    pub seed: u64,
}

impl Default for TstConfig {
    fn default() -> Self {
        Self {
            method: Method::JsdFf,
            permutations: 100,
            alpha_level: 0.05,
            n_test_sets: 100,
            n_trials: 10,
            settings: None,
            seed: 0,
        }
    }
}

impl TstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::InvalidConfig("at least one permutation is required".into()));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "significance level must lie in (0, 1), got {}",
                self.alpha_level
            )));
        }
        if self.n_test_sets == 0 || self.n_trials == 0 {
            return Err(Error::InvalidConfig("need at least one test set and one trial".into()));
        }
        Ok(())
    }

    fn settings_for(&self, family: Option<Family>) -> MethodSettings {
        self.settings
            .clone()
            .unwrap_or_else(|| MethodSettings::defaults(self.method, family))
    }
}

/// Outcome of one permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    /// Rejection threshold; infinite when `B` is too small for the level.
    pub null_quantile: f64,
    pub reject: bool,
    pub null_samples: Vec<f64>,
}

/// A fitted test statistic with all parameters fixed.
#[derive(Debug, Clone)]
pub enum FrozenStatistic {
    Embedding(DeepFourierNetwork),
    GaussianKernel { sigma: f64 },
}

impl FrozenStatistic {
    fn pool(&self, z: &DMatrix<f64>) -> Result<Pooled> {
        match self {
            FrozenStatistic::Embedding(net) => {
                let phi = net.embed(z)?;
                let scatter = (phi.nrows() >= 2 * phi.ncols()).then(|| phi.transpose() * &phi);
                Ok(Pooled::Features(phi, scatter))
            }
            FrozenStatistic::GaussianKernel { sigma } => Ok(Pooled::Gram(gaussian_gram(z, *sigma)?)),
        }
    }

    /// Divergence between `x` and `y` under the frozen parameters.
    pub fn statistic(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        check_widths(x, y)?;
        let pooled = self.pool(&vstack(x, y))?;
        let (n, total) = (x.nrows(), x.nrows() + y.nrows());
        let idx: Vec<usize> = (0..total).collect();
        pooled.split_divergence(pooled.mixture_entropy()?, &idx[..n], &idx[n..])
    }
}

/// Embedded or kernelized pooled sample.
enum Pooled {
    /// Embedded rows, with their scatter `ΦᵀΦ` when the covariance form is
    /// the smaller one.
    Features(DMatrix<f64>, Option<DMatrix<f64>>),
    Gram(DMatrix<f64>),
}

impl Pooled {
    fn mixture_entropy(&self) -> Result<f64> {
        match self {
            Pooled::Features(phi, _) => features_entropy(phi),
            Pooled::Gram(k) => entropy_fast(&(k / k.nrows() as f64)),
        }
    }

    fn part_entropy(&self, idx: &[usize]) -> Result<f64> {
        match self {
            Pooled::Features(phi, _) => features_entropy(&phi.select_rows(idx)),
            Pooled::Gram(k) => {
                let sub = k.select_rows(idx).select_columns(idx);
                entropy_fast(&(sub / idx.len() as f64))
            }
        }
    }

    fn split_divergence(&self, s_mix: f64, ix: &[usize], iy: &[usize]) -> Result<f64> {
        let total = (ix.len() + iy.len()) as f64;
        let (pi1, pi2) = (ix.len() as f64 / total, iy.len() as f64 / total);
        let (sx, sy) = match self {
            Pooled::Features(phi, Some(scatter)) if ix.len() >= phi.ncols() && iy.len() >= phi.ncols() => {
                let part = phi.select_rows(ix);
                let sx = part.transpose() * &part;
                let sy = scatter - &sx;
                (
                    entropy_fast(&(sx / ix.len() as f64))?,
                    entropy_fast(&(sy / iy.len() as f64))?,
                )
            }
            _ => (self.part_entropy(ix)?, self.part_entropy(iy)?),
        };
        Ok(clean_estimate(s_mix - pi1 * sx - pi2 * sy))
    }
}

/// Entropy of `ΦᵀΦ/N` via whichever Gram form is smaller.
fn features_entropy(phi: &DMatrix<f64>) -> Result<f64> {
    let n = phi.nrows() as f64;
    let m = if phi.nrows() < phi.ncols() {
        phi * phi.transpose() / n
    } else {
        phi.transpose() * phi / n
    };
    entropy_fast(&m)
}

fn check_widths(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimMismatch {
            expected: x.ncols(),
            found: y.ncols(),
        });
    }
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::BadShape("test sets must be non-empty".into()));
    }
    Ok(())
}

/// One-based rank of the rejection threshold among `b` sorted null samples.
pub fn threshold_rank(b: usize, alpha: f64) -> usize {
    // The tiny offset keeps exact products such as 0.95·20 from rounding up.
    ((1.0 - alpha) * (b + 1) as f64 - 1e-9).ceil() as usize
}

/// Permutation test of `x` against `y` with a frozen statistic.
pub fn permutation_test(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    stat: &FrozenStatistic,
    permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestReport> {
    check_widths(x, y)?;
    if permutations == 0 || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(
            "need at least one permutation and a level in (0, 1)".into(),
        ));
    }
    let (n, total) = (x.nrows(), x.nrows() + y.nrows());
    let pooled = stat.pool(&vstack(x, y))?;
    let s_mix = pooled.mixture_entropy()?;
    let mut idx: Vec<usize> = (0..total).collect();
    let statistic = pooled.split_divergence(s_mix, &idx[..n], &idx[n..])?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut null_samples = Vec::with_capacity(permutations);
    for _ in 0..permutations {
        idx.shuffle(&mut rng);
        null_samples.push(pooled.split_divergence(s_mix, &idx[..n], &idx[n..])?);
    }
    let mut sorted = null_samples.clone();
    sorted.sort_by(f64::total_cmp);
    let k = threshold_rank(permutations, alpha);
    let null_quantile = if k == 0 {
        f64::NEG_INFINITY
    } else if k > permutations {
        f64::INFINITY
    } else {
        sorted[k - 1]
    };
    Ok(TestReport {
        statistic,
        null_quantile,
        reject: statistic > null_quantile,
        null_samples,
    })
}

/// Median pairwise distance of up to 400 rows, a scale for initial bandwidths.
pub fn median_distance(z: &DMatrix<f64>) -> f64 {
    let rows = z.nrows().min(400);
    let d2 = squared_distances(&z.rows(0, rows).into_owned());
    let mut d: Vec<f64> = (0..rows)
        .flat_map(|i| (i + 1..rows).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .filter(|v| *v > 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// Fits the statistic of `method` on a training pair.
pub fn fit_statistic(
    method: Method,
    x: &SampleSet,
    y: &SampleSet,
    settings: &MethodSettings,
    seed: u64,
) -> Result<FrozenStatistic> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    let z = vstack(&x.rows, &y.rows);
    let scale = median_distance(&z);
    let d = x.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF17, 0));
    let width = 2 * settings.num_frequencies;
    let (mut net, trainable) = match method {
        Method::JsdK => return fit_kernel_bandwidth(x, y, scale, settings, seed),
        Method::JsdFf | Method::JsdRff => {
            let map = FourierFeatureMap::sample_with(d, width, scale, &mut rng)?;
            let trainable = if method == Method::JsdFf {
                Trainable {
                    frequencies: true,
                    bandwidth: true,
                    ..Trainable::NOTHING
                }
            } else {
                Trainable::BANDWIDTH_ONLY
            };
            (DeepFourierNetwork::plain(map), trainable)
        }
        Method::JsdD => {
            let h = settings.hidden;
            let body = Mlp::from_sizes(&[d, h, h, h, h], Activation::Softplus, Activation::Identity, &mut rng);
            let lifted = hconcat(&body.apply(&z)?, &z);
            let terminal = FourierFeatureMap::sample_with(h + d, width, median_distance(&lifted), &mut rng)?;
            let psi = FourierFeatureMap::sample_with(d, width, scale, &mut rng)?;
            (DeepFourierNetwork::combined(body, terminal, psi)?, Trainable::ALL)
        }
    };
    let cfg = EstimatorConfig {
        epochs: settings.epochs.max(1),
        lr: settings.lr,
        num_frequencies: settings.num_frequencies,
        sigma_init: scale,
        seed,
        trainable,
        ..EstimatorConfig::default()
    };
    let mut source = FixedSamples::new(x, y, None, seed)?;
    train_on_source(&mut net, &mut source, &cfg)?;
    Ok(FrozenStatistic::Embedding(net))
}

/// Bandwidth for the kernel statistic: the best point of a log-spaced grid
/// around `scale`, refined by Adam on `ln σ`. The objective is the divergence
/// of the true split minus its mean over a few random relabelings, which
/// stays informative where the raw divergence would saturate as `σ → 0`.
fn fit_kernel_bandwidth(
    x: &SampleSet,
    y: &SampleSet,
    scale: f64,
    settings: &MethodSettings,
    seed: u64,
) -> Result<FrozenStatistic> {
    const SPLITS: usize = 4;
    let z = vstack(&x.rows, &y.rows);
    let d2 = squared_distances(&z);
    let (n, total) = (x.len(), z.nrows());
    let (pi1, pi2) = (n as f64 / total as f64, 1.0 - n as f64 / total as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6E1, 0));
    let mut splits: Vec<Vec<usize>> = vec![(0..total).collect()];
    for _ in 0..SPLITS {
        let mut idx: Vec<usize> = (0..total).collect();
        idx.shuffle(&mut rng);
        splits.push(idx);
    }
    let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = splits
        .iter()
        .map(|idx| {
            let (ix, iy) = idx.split_at(n);
            (
                d2.select_rows(ix).select_columns(ix),
                d2.select_rows(iy).select_columns(iy),
            )
        })
        .collect();

    // Only group entropies enter: the pooled term is common to every split.
    let objective = |sigma: f64, with_grad: bool| -> Result<(f64, f64)> {
        let mut value = 0.0;
        let mut grad = 0.0;
        for (k, (bx, by)) in blocks.iter().enumerate() {
            let weight = if k == 0 { -1.0 } else { 1.0 / SPLITS as f64 };
            let (sx, gx) = if with_grad {
                gram_entropy_with_sigma_grad(bx, sigma)?
            } else {
                (entropy_fast(&gram_from_d2(bx, sigma))?, 0.0)
            };
            let (sy, gy) = if with_grad {
                gram_entropy_with_sigma_grad(by, sigma)?
            } else {
                (entropy_fast(&gram_from_d2(by, sigma))?, 0.0)
            };
            value += weight * (pi1 * sx + pi2 * sy);
            grad += weight * (pi1 * gx + pi2 * gy);
        }
        Ok((value, grad))
    };

    let mut best = (f64::NEG_INFINITY, scale);
    for k in -6..=6 {
        let sigma = scale * 2f64.powf(k as f64 / 2.0);
        let (j, _) = objective(sigma, false)?;
        if j > best.0 {
            best = (j, sigma);
        }
    }
    let mut log_sigma = best.1.ln();
    let mut adam = AdamState::new(AdamConfig::new(0.05));
    for _ in 0..settings.epochs {
        let sigma = log_sigma.exp();
        let (j, g) = objective(sigma, true)?;
        if !j.is_finite() || !g.is_finite() {
            break;
        }
        if j > best.0 {
            best = (j, sigma);
        }
        let grad = [g * sigma];
        adam.step(&mut [std::slice::from_mut(&mut log_sigma)], &[&grad], true)?;
    }
    Ok(FrozenStatistic::GaussianKernel { sigma: best.1 })
}

fn gram_from_d2(d2: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let n = d2.nrows() as f64;
    d2.map(|v| (-v * inv).exp() / n)
}

/// Splits the rows of `set` into disjoint training and test parts.
pub fn train_test_split(set: &SampleSet, train_fraction: f64, seed: u64) -> Result<(SampleSet, SampleSet)> {
    let rows = set.len();
    if rows < 2 {
        return Err(Error::InsufficientData { rows, needed: 2 });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "training fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((rows as f64 * train_fraction).round() as usize).clamp(1, rows - 1);
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = idx.split_at(n_train);
    Ok((set.select(a)?, set.select(b)?))
}

/// Where the samples of a power experiment come from.
#[derive(Debug, Clone)]
pub enum PowerData {
    /// Fresh training and test draws from a synthetic family.
    Synthetic(Dataset),
    /// Two files, each split once per trial into disjoint training and test halves.
    Files { name: String, x: SampleSet, y: SampleSet },
}

impl PowerData {
    pub fn name(&self) -> String {
        match self {
            PowerData::Synthetic(ds) => ds.to_string(),
            PowerData::Files { name, .. } => name.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            PowerData::Synthetic(ds) => ds.dim(),
            PowerData::Files { x, .. } => x.dim(),
        }
    }

    fn family(&self) -> Option<Family> {
        match self {
            PowerData::Synthetic(ds) => Some(ds.family),
            PowerData::Files { .. } => None,
        }
    }
}

/// Rejection rate of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub dataset: String,
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub trial: usize,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub dataset: String,
    pub method: String,
    pub n: usize,
    pub d: usize,
    pub mean_power: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub rows: Vec<PowerRow>,
    pub summary: Vec<PowerSummary>,
}

fn records_to_csv<T: Serialize>(records: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl PowerTable {
    pub fn rows_csv(&self) -> Result<String> {
        records_to_csv(&self.rows)
    }

    pub fn summary_csv(&self) -> Result<String> {
        records_to_csv(&self.summary)
    }

    pub fn power_at(&self, n: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.n == n).map(|r| r.power).collect()
    }
}

fn draw_rows(set: &SampleSet, n: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if n > set.len() {
        return Err(Error::InsufficientData {
            rows: set.len(),
            needed: n,
        });
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(rng);
    Ok(set.rows.select_rows(&idx[..n]))
}

/// Seeds of one (grid point, trial) cell.
struct TrialSeeds {
    base: u64,
}

impl TrialSeeds {
    fn new(seed: u64, n: usize, trial: usize) -> Self {
        Self {
            base: derive_seed(seed, n as u64, trial as u64),
        }
    }
    fn train(&self) -> u64 {
        derive_seed(self.base, 1, 0)
    }
    fn test(&self, j: usize) -> u64 {
        derive_seed(self.base, 2, j as u64)
    }
    fn permutation(&self, j: usize) -> u64 {
        derive_seed(self.base, 3, j as u64)
    }
    fn fit(&self) -> u64 {
        derive_seed(self.base, 4, 0)
    }
}

/// Trains once and returns the rejection rate over `cfg.n_test_sets` fresh
/// test sets of `n` samples each.
pub fn run_trial(data: &PowerData, n: usize, cfg: &TstConfig, trial: usize) -> Result<f64> {
    cfg.validate()?;
    let seeds = TrialSeeds::new(cfg.seed, n, trial);
    let settings = cfg.settings_for(data.family());
    let stat;
    let test_sets: Box<dyn Fn(usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> + Sync>;
    match data {
        PowerData::Synthetic(ds) => {
            let (x, y) = ds.sample_pair(n, n, seeds.train())?;
            stat = fit_statistic(cfg.method, &x, &y, &settings, seeds.fit())?;
            let ds = *ds;
            let seeds = TrialSeeds::new(cfg.seed, n, trial);
            test_sets = Box::new(move |j| {
                let s = seeds.test(j);
                Ok((
                    ds.sample(Which::P, n, derive_seed(s, 0xA, 0))?.rows,
                    ds.sample(Which::Q, n, derive_seed(s, 0xB, 0))?.rows,
                ))
            });
        }
        PowerData::Files { x, y, .. } => {
            let (x_train, x_test) = train_test_split(x, 0.5, derive_seed(seeds.train(), 0xA, 0))?;
            let (y_train, y_test) = train_test_split(y, 0.5, derive_seed(seeds.train(), 0xB, 0))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seeds.train());
            let xt = SampleSet::new(draw_rows(&x_train, n, &mut rng)?, "x-train", 0)?;
            let yt = SampleSet::new(draw_rows(&y_train, n, &mut rng)?, "y-train", 0)?;
            stat = fit_statistic(cfg.method, &xt, &yt, &settings, seeds.fit())?;
            let seeds = TrialSeeds::new(cfg.seed, n, trial);
            test_sets = Box::new(move |j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seeds.test(j));
                Ok((draw_rows(&x_test, n, &mut rng)?, draw_rows(&y_test, n, &mut rng)?))
            });
        }
    }
    let rejections: Vec<bool> = (0..cfg.n_test_sets)
        .into_par_iter()
        .map(|j| {
            let (x, y) = test_sets(j)?;
            let report = permutation_test(&x, &y, &stat, cfg.permutations, cfg.alpha_level, seeds.permutation(j))?;
            Ok(report.reject)
        })
        .collect::<Result<_>>()?;
    Ok(rejections.iter().filter(|&&r| r).count() as f64 / cfg.n_test_sets as f64)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Test power over a grid of sample sizes, `cfg.n_trials` trials per point.
pub fn run_power_experiment(data: &PowerData, grid: &[usize], cfg: &TstConfig) -> Result<PowerTable> {
    cfg.validate()?;
    let mut table = PowerTable::default();
    let (name, method, d) = (data.name(), cfg.method.to_string(), data.dim());
    for &n in grid {
        let mut powers = Vec::with_capacity(cfg.n_trials);
        for trial in 0..cfg.n_trials {
            let power = run_trial(data, n, cfg, trial)?;
            powers.push(power);
            table.rows.push(PowerRow {
                dataset: name.clone(),
                method: method.clone(),
                n,
                d,
                trial,
                power,
            });
        }
        let (mean_power, sd) = mean_sd(&powers);
        table.summary.push(PowerSummary {
            dataset: name.clone(),
            method: method.clone(),
            n,
            d,
            mean_power,
            sd,
        });
    }
    Ok(table)
}
