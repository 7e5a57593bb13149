use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use repjsd::data::{derive_seed, eight_gaussian_centers, gen_8gaussians, load_csv, to_csv, Dataset, Family, SampleSet,
    EIGHT_GAUSSIANS_STD};
use repjsd::divergence::rjsd_features;
use repjsd::estimate::{estimate_jsd, estimate_jsd_fresh, Estimate, EstimatorConfig};
use repjsd::gan::{gan_train, mode_coverage, GanConfig};
use repjsd::io::{to_ndjson, write_atomic};
use repjsd::selfcheck::{run_selfcheck, Mutation};
use repjsd::tst::{
    fit_statistic, permutation_test, run_power_experiment, train_test_split, Method, MethodSettings, PowerData,
    TstConfig,
};
use repjsd::{rjsd_kernel, FourierFeatureMap};

use crate::config::{manifest, Globals};
use crate::CliError;

/// Above this many pooled rows the fixed-bandwidth estimate uses random
/// features instead of the Gram matrix.
const GRAM_ROW_LIMIT: usize = 2000;

/// Window of the converged estimate.
const TAIL: usize = 200;

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    Ok(write_atomic(&dir.join(name), bytes.as_ref())?)
}

fn write_manifest(
    command: &str,
    globals: &Globals,
    config: &impl Serialize,
    outputs: &[&str],
) -> Result<(), CliError> {
    let m = manifest(command, globals, config, outputs);
    write(&globals.out, "manifest.json", serde_json::to_string_pretty(&m)? + "\n")
}

fn parse_dataset(name: &str) -> Result<Dataset, CliError> {
    name.parse().map_err(|e: repjsd::Error| CliError::Usage(e.to_string()))
}

fn with_dim(ds: Dataset, d: Option<usize>) -> Result<Dataset, CliError> {
    let Some(d) = d else { return Ok(ds) };
    let family = match ds.family {
        Family::Hdgm { .. } => Family::Hdgm { d },
        Family::Gauss { .. } => Family::Gauss { d },
        _ if d == ds.dim() => ds.family,
        _ => return Err(CliError::Usage(format!("dataset {ds} has fixed dimension {}", ds.dim()))),
    };
    Ok(Dataset { family, ..ds })
}

/// Either two CSV files or a named synthetic dataset.
fn source_pair(
    x: &Option<PathBuf>,
    y: &Option<PathBuf>,
    dataset: &Option<String>,
    header: bool,
) -> Result<Source, CliError> {
    match (x, y, dataset) {
        (Some(x), Some(y), None) => Ok(Source::Files(load_csv(x, header)?, load_csv(y, header)?)),
        (None, None, Some(name)) => Ok(Source::Synthetic(parse_dataset(name)?)),
        _ => Err(CliError::Usage("give either --x and --y, or --dataset".into())),
    }
}

enum Source {
    Files(SampleSet, SampleSet),
    Synthetic(Dataset),
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateArgs {
    /// CSV file with the X samples.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// CSV file with the Y samples.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Synthetic pair, e.g. `cauchy:0.4`, `blobs`, `hdgm:10`, `null-gauss:2`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Rows per set drawn from a dataset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Draw new dataset samples every epoch.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fresh: Option<bool>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Number of Fourier frequencies (half the feature dimension).
    #[arg(long)]
    pub features: Option<usize>,
    /// Initial bandwidth.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Smooth covariances with an exponential moving average of this rate.
    #[arg(long)]
    pub ema: Option<f64>,
    /// Comma-separated hidden widths in front of the Fourier layer.
    #[arg(long)]
    pub hidden: Option<String>,
    /// Rows per minibatch when training on files.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Skip training and evaluate at the given bandwidth.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fixed: Option<bool>,
    /// The CSV files start with a header row.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
}

impl EstimateArgs {
    fn resolved(mut self) -> Self {
        let d = EstimatorConfig::default();
        self.n.get_or_insert(512);
        self.fresh.get_or_insert(self.dataset.is_some());
        self.epochs.get_or_insert(500);
        self.lr.get_or_insert(d.lr);
        self.features.get_or_insert(d.num_frequencies);
        self.sigma.get_or_insert(d.sigma_init);
        self.hidden.get_or_insert_with(String::new);
        self.fixed.get_or_insert(false);
        self.header.get_or_insert(false);
        self
    }

    fn hidden_widths(&self) -> Result<Vec<usize>, CliError> {
        self.hidden
            .as_deref()
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad hidden width '{s}'")))
            })
            .collect()
    }
}

pub fn cmd_estimate(args: EstimateArgs, globals: &Globals) -> Result<(), CliError> {
    let args = args.resolved();
    let source = source_pair(&args.x, &args.y, &args.dataset, args.header.unwrap())?;
    let n = args.n.unwrap();
    let cfg = EstimatorConfig {
        epochs: args.epochs.unwrap(),
        lr: args.lr.unwrap(),
        num_frequencies: args.features.unwrap(),
        sigma_init: args.sigma.unwrap(),
        use_ema: args.ema.is_some(),
        ema_alpha: args.ema.unwrap_or(EstimatorConfig::default().ema_alpha),
        seed: globals.seed,
        hidden: args.hidden_widths()?,
        batch_size: args.batch,
        ..EstimatorConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let draw = |ds: &Dataset| ds.sample_pair(n, n, derive_seed(globals.seed, 0xDA7A, 0));
    if args.fixed.unwrap() {
        let (x, y) = match &source {
            Source::Files(x, y) => (x.clone(), y.clone()),
            Source::Synthetic(ds) => draw(ds)?,
        };
        let (value, estimator) = if x.len() + y.len() <= GRAM_ROW_LIMIT {
            (rjsd_kernel(&x, &y, cfg.sigma_init)?, "kernel")
        } else {
            let map = FourierFeatureMap::sample(x.dim(), 2 * cfg.num_frequencies, cfg.sigma_init, globals.seed)?;
            (rjsd_features(&map.map(&x.rows)?, &map.map(&y.rows)?)?, "features")
        };
        let result = json!({"estimate": value, "estimator": estimator, "sigma": cfg.sigma_init});
        write(&globals.out, "result.json", serde_json::to_string_pretty(&result)? + "\n")?;
        write_manifest("estimate", globals, &args, &["result.json"])?;
        println!("{result}");
        return Ok(());
    }

    let est: Estimate = match (&source, args.fresh.unwrap()) {
        (Source::Synthetic(ds), true) => estimate_jsd_fresh(*ds, n, &cfg)?,
        (Source::Synthetic(ds), false) => {
            let (x, y) = draw(ds)?;
            estimate_jsd(&x, &y, &cfg)?
        }
        (Source::Files(x, y), false) => estimate_jsd(x, y, &cfg)?,
        (Source::Files(..), true) => return Err(CliError::Usage("--fresh needs --dataset".into())),
    };
    let result = json!({
        "estimate": est.estimate,
        "converged": est.tail_mean(TAIL),
        "tail_sd": est.tail_sd(TAIL),
        "sigma": est.network.terminal.sigma,
        "epochs": cfg.epochs,
    });
    write(&globals.out, "trace.ndjson", to_ndjson(&est.trace)?)?;
    est.network.save_json(&globals.out.join("network.json"))?;
    write(&globals.out, "result.json", serde_json::to_string_pretty(&result)? + "\n")?;
    write_manifest("estimate", globals, &args, &["trace.ndjson", "network.json", "result.json"])?;
    println!("{result}");
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TstArgs {
    /// One of jsd-ff, jsd-rff, jsd-d, jsd-k.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Comma-separated sample sizes (rows per set).
    #[arg(long)]
    pub n: Option<String>,
    /// Dimension of `hdgm` and `gauss` data.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub test_sets: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub features: Option<usize>,
    /// Width of the deep network's hidden layers.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Run one permutation test on a training/test split instead of a power study.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub single: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
}

impl TstArgs {
    fn resolved(mut self, family: Option<Family>) -> Result<(Self, Method), CliError> {
        let d = TstConfig::default();
        let method: Method = self
            .method
            .get_or_insert_with(|| d.method.to_string())
            .parse()
            .map_err(|e: repjsd::Error| CliError::Usage(e.to_string()))?;
        let s = MethodSettings::defaults(method, family);
        self.n.get_or_insert_with(|| "200".into());
        self.permutations.get_or_insert(d.permutations);
        self.alpha.get_or_insert(d.alpha_level);
        self.test_sets.get_or_insert(d.n_test_sets);
        self.trials.get_or_insert(d.n_trials);
        self.epochs.get_or_insert(s.epochs);
        self.lr.get_or_insert(s.lr);
        self.features.get_or_insert(s.num_frequencies);
        self.hidden.get_or_insert(s.hidden);
        self.single.get_or_insert(false);
        self.header.get_or_insert(false);
        Ok((self, method))
    }

    fn grid(&self) -> Result<Vec<usize>, CliError> {
        let grid: Vec<usize> = self
            .n
            .as_deref()
            .unwrap_or("")
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad sample size '{s}'"))))
            .collect::<Result<_, _>>()?;
        if grid.iter().any(|&n| n < 2) {
            return Err(CliError::Usage("sample sizes must be at least 2".into()));
        }
        Ok(grid)
    }
}

pub fn cmd_tst(args: TstArgs, globals: &Globals) -> Result<(), CliError> {
    let source = source_pair(&args.x, &args.y, &args.dataset, args.header.unwrap_or(false))?;
    let source = match source {
        Source::Synthetic(ds) => Source::Synthetic(with_dim(ds, args.d)?),
        files => files,
    };
    let family = match &source {
        Source::Synthetic(ds) => Some(ds.family),
        Source::Files(..) => None,
    };
    let (args, method) = args.resolved(family)?;
    let cfg = TstConfig {
        method,
        permutations: args.permutations.unwrap(),
        alpha_level: args.alpha.unwrap(),
        n_test_sets: args.test_sets.unwrap(),
        n_trials: args.trials.unwrap(),
        settings: Some(MethodSettings {
            lr: args.lr.unwrap(),
            num_frequencies: args.features.unwrap(),
            hidden: args.hidden.unwrap(),
            epochs: args.epochs.unwrap(),
        }),
        seed: globals.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let grid = args.grid()?;

    if args.single.unwrap() {
        let (x, y) = match source {
            Source::Files(x, y) => (x, y),
            Source::Synthetic(ds) => ds.sample_pair(2 * grid[0], 2 * grid[0], derive_seed(globals.seed, 0xDA7A, 0))?,
        };
        let (x_train, x_test) = train_test_split(&x, 0.5, derive_seed(globals.seed, 0x5B, 0))?;
        let (y_train, y_test) = train_test_split(&y, 0.5, derive_seed(globals.seed, 0x5B, 1))?;
        let settings = cfg.settings.clone().expect("settings resolved");
        let stat = fit_statistic(method, &x_train, &y_train, &settings, derive_seed(globals.seed, 0x5B, 2))?;
        let report = permutation_test(
            &x_test.rows,
            &y_test.rows,
            &stat,
            cfg.permutations,
            cfg.alpha_level,
            derive_seed(globals.seed, 0x5B, 3),
        )?;
        write(&globals.out, "report.json", serde_json::to_string_pretty(&report)? + "\n")?;
        write_manifest("tst", globals, &args, &["report.json"])?;
        println!(
            "{}",
            json!({"statistic": report.statistic, "null_quantile": report.null_quantile, "reject": report.reject})
        );
        return Ok(());
    }

    let data = match source {
        Source::Synthetic(ds) => PowerData::Synthetic(ds),
        Source::Files(x, y) => PowerData::Files {
            name: "files".into(),
            x,
            y,
        },
    };
    let table = run_power_experiment(&data, &grid, &cfg)?;
    write(&globals.out, "power_rows.csv", table.rows_csv()?)?;
    write(&globals.out, "power_summary.csv", table.summary_csv()?)?;
    write_manifest("tst", globals, &args, &["power_rows.csv", "power_summary.csv"])?;
    for s in &table.summary {
        println!(
            "{} {} n={} power={:.3} sd={:.3}",
            s.dataset, s.method, s.n, s.mean_power, s.sd
        );
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataArgs {
    #[arg(long)]
    pub dataset: Option<String>,
    /// Rows per set.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub header: Option<bool>,
}

pub fn cmd_gen_data(mut args: GenDataArgs, globals: &Globals) -> Result<(), CliError> {
    let name = args.dataset.clone().ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let ds = parse_dataset(&name)?;
    let n = *args.n.get_or_insert(500);
    let header = *args.header.get_or_insert(false);
    let (x, y) = ds.sample_pair(n, n, globals.seed)?;
    write(&globals.out, "x.csv", to_csv(&x, header)?)?;
    write(&globals.out, "y.csv", to_csv(&y, header)?)?;
    write_manifest("gen-data", globals, &args, &["x.csv", "y.csv"])?;
    println!("wrote {n} rows of {ds} to {}", globals.out.display());
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanArgs {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr_d: Option<f64>,
    #[arg(long)]
    pub lr_g: Option<f64>,
    /// Frequencies of the critic's Fourier layer.
    #[arg(long)]
    pub features: Option<usize>,
    /// Size of the real training set.
    #[arg(long)]
    pub n_real: Option<usize>,
    /// Number of generated points written and scored.
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn cmd_gan_toy(mut args: GanArgs, globals: &Globals) -> Result<(), CliError> {
    let d = GanConfig::default();
    let cfg = GanConfig {
        steps: *args.steps.get_or_insert(d.steps),
        batch_size: *args.batch.get_or_insert(d.batch_size),
        lr_d: *args.lr_d.get_or_insert(d.lr_d),
        lr_g: *args.lr_g.get_or_insert(d.lr_g),
        num_frequencies: *args.features.get_or_insert(d.num_frequencies),
        seed: globals.seed,
        ..d
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let n_real = *args.n_real.get_or_insert(20_000);
    let samples = *args.samples.get_or_insert(8000);
    let real = gen_8gaussians(n_real, derive_seed(globals.seed, 0x8A, 0))?;
    let run = gan_train(&cfg, &real)?;
    let generated = run.models.sample(samples, cfg.noise_dim, derive_seed(globals.seed, 0x8A, 1))?;
    let coverage = mode_coverage(&generated, &eight_gaussian_centers(), EIGHT_GAUSSIANS_STD, 3.0);
    write(&globals.out, "trace.ndjson", to_ndjson(&run.trace)?)?;
    write(&globals.out, "samples.csv", to_csv(&generated, true)?)?;
    write(&globals.out, "coverage.json", serde_json::to_string_pretty(&coverage)? + "\n")?;
    write_manifest("gan-toy", globals, &args, &["trace.ndjson", "samples.csv", "coverage.json"])?;
    println!("modes hit {}/8, KL to uniform {:.4}", coverage.modes_hit, coverage.kl_to_uniform);
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfcheckArgs {
    #[arg(long, hide = true)]
    pub mutation: Option<String>,
}

/// Returns whether every check passed.
pub fn cmd_selfcheck(args: SelfcheckArgs, globals: &Globals) -> Result<bool, CliError> {
    let mutation: Option<Mutation> = args
        .mutation
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(|e: repjsd::Error| CliError::Usage(e.to_string()))?;
    let results = run_selfcheck(globals.seed, mutation);
    for r in &results {
        println!("{} {} ({})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    write(&globals.out, "selfcheck.json", serde_json::to_string_pretty(&results)? + "\n")?;
    write_manifest("selfcheck", globals, &args, &["selfcheck.json"])?;
    Ok(results.iter().all(|r| r.passed))
}
