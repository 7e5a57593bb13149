//! Sample sets, synthetic generators and CSV ingestion.
//!
//! Generator parameterizations:
//!
//! * **Cauchy**: `l + s·tan(π(u - ½))` with `u ~ U(0, 1)`.
//! * **Blobs**: a `side × side` grid of centers spaced 5 apart starting at the
//!   origin. Under `P` every component is `N(center, I)`. Under `Q` component
//!   `k` has covariance `R(kπ/side²) diag(1, 4) R(kπ/side²)ᵀ`.
//! * **HDGM**: two equally weighted modes at `0` and `0.5·1_d`. `P` has identity
//!   covariance; `Q` additionally correlates the first two coordinates by 0.5.
//! * **Gauss**: `P = N(0, I_d)`, `Q = N(e₁, I_d)`.
//! * **8 Gaussians**: modes on a circle of radius 2, standard deviation 0.02.
//!
//! Rows are assigned to mixture components round-robin for blobs and HDGM
//! (balanced counts) and uniformly at random for the 8-Gaussians mixture.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N × d` observations with a label and the seed that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub rows: DMatrix<f64>,
    pub name: String,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(rows: DMatrix<f64>, name: impl Into<String>, seed: u64) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::BadShape(format!(
                "sample set must be non-empty, got {}x{}",
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadShape("sample set contains non-finite values".into()));
        }
        Ok(Self {
            rows,
            name: name.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// New set made of the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Result<SampleSet> {
        let rows = self.rows.select_rows(indices);
        SampleSet::new(rows, self.name.clone(), self.seed)
    }
}

/// Deterministic sub-seed for stream `stream`, item `index` of a base seed
/// (SplitMix64 finalizer over the combined words).
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Location and scale of a Cauchy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchySpec {
    pub location: f64,
    pub scale: f64,
}

impl CauchySpec {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !location.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "Cauchy scale must be positive and location finite, got ({location}, {scale})"
            )));
        }
        Ok(Self { location, scale })
    }
}

/// Closed-form Jensen-Shannon divergence between two Cauchy distributions (nats).
pub fn cauchy_jsd_closed_form(p: CauchySpec, q: CauchySpec) -> f64 {
    let dl = p.location - q.location;
    let ss = p.scale + q.scale;
    let r = (dl * dl + ss * ss).sqrt();
    (2.0 * r / (r + 2.0 * (p.scale * q.scale).sqrt())).ln()
}

/// Location offset `Δl` such that `Cauchy(0, s)` and `Cauchy(Δl, s)` have the
/// requested divergence (nats, in `[0, ln 2)`).
pub fn location_for_target_jsd(target: f64, scale: f64) -> Result<f64> {
    if !(0.0..LN_2).contains(&target) {
        return Err(Error::TargetOutOfRange { target });
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidConfig(format!("scale must be positive, got {scale}")));
    }
    let e = target.exp();
    let r = 2.0 * scale * e / (2.0 - e);
    let two_s = 2.0 * scale;
    Ok((r * r - two_s * two_s).max(0.0).sqrt())
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::BadShape("number of samples must be positive".into()));
    }
    Ok(())
}

pub fn gen_cauchy(spec: CauchySpec, n: usize, seed: u64) -> Result<SampleSet> {
    check_n(n)?;
    let mut rng = rng_for(seed);
    let rows = DMatrix::from_fn(n, 1, |_, _| {
        let u: f64 = rng.random();
        spec.location + spec.scale * (PI * (u - 0.5)).tan()
    });
    SampleSet::new(rows, format!("cauchy({}, {})", spec.location, spec.scale), seed)
}

/// Which of the two distributions of a two-sample family to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    P,
    Q,
}

/// Center of blob `k` on a `side × side` grid.
pub fn blob_center(side: usize, k: usize) -> (f64, f64) {
    (5.0 * (k % side) as f64, 5.0 * (k / side) as f64)
}

pub fn gen_blobs(side: usize, n: usize, which: Which, seed: u64) -> Result<SampleSet> {
    let (rows, _) = blobs_labeled(side, n, which, seed)?;
    SampleSet::new(rows, format!("blobs-{which:?}"), seed)
}

/// Blob rows together with the component each row was drawn from.
fn blobs_labeled(side: usize, n: usize, which: Which, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_n(n)?;
    if side == 0 {
        return Err(Error::BadShape("blob grid side must be positive".into()));
    }
    let blobs = side * side;
    let mut rng = rng_for(seed);
    let mut rows = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(0..blobs);
        let (cx, cy) = blob_center(side, k);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let (dx, dy) = match which {
            Which::P => (z1, z2),
            Which::Q => {
                let theta = k as f64 * PI / blobs as f64;
                let (s, c) = theta.sin_cos();
                let (a, b) = (z1, 2.0 * z2);
                (c * a - s * b, s * a + c * b)
            }
        };
        rows[(i, 0)] = cx + dx;
        rows[(i, 1)] = cy + dy;
        labels.push(k);
    }
    Ok((rows, labels))
}

pub fn gen_hdgm(d: usize, n: usize, which: Which, seed: u64) -> Result<SampleSet> {
    check_n(n)?;
    if d < 2 {
        return Err(Error::BadShape(format!("HDGM needs d >= 2, got {d}")));
    }
    let mut rng = rng_for(seed);
    let mut rows = DMatrix::zeros(n, d);
    let c = 0.75f64.sqrt();
    for i in 0..n {
        let mean = if rng.random_bool(0.5) { 0.0 } else { 0.5 };
        for j in 0..d {
            rows[(i, j)] = mean + rng.sample::<f64, _>(StandardNormal);
        }
        if which == Which::Q {
            let z0 = rows[(i, 0)] - mean;
            let z1 = rows[(i, 1)] - mean;
            rows[(i, 1)] = mean + 0.5 * z0 + c * z1;
        }
    }
    SampleSet::new(rows, format!("hdgm-{which:?}"), seed)
}

pub fn gen_gauss(d: usize, n: usize, which: Which, seed: u64) -> Result<SampleSet> {
    check_n(n)?;
    if d == 0 {
        return Err(Error::BadShape("dimension must be positive".into()));
    }
    let mut rng = rng_for(seed);
    let mut rows = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    if which == Which::Q {
        rows.column_mut(0).add_scalar_mut(1.0);
    }
    SampleSet::new(rows, format!("gauss-{which:?}"), seed)
}

pub const EIGHT_GAUSSIANS_RADIUS: f64 = 2.0;
pub const EIGHT_GAUSSIANS_STD: f64 = 0.02;

pub fn eight_gaussian_centers() -> Vec<[f64; 2]> {
    (0..8)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 8.0;
            [EIGHT_GAUSSIANS_RADIUS * a.cos(), EIGHT_GAUSSIANS_RADIUS * a.sin()]
        })
        .collect()
}

pub fn gen_8gaussians(n: usize, seed: u64) -> Result<SampleSet> {
    check_n(n)?;
    let centers = eight_gaussian_centers();
    let mut rng = rng_for(seed);
    let mut rows = DMatrix::zeros(n, 2);
    for i in 0..n {
        let c = centers[rng.random_range(0..8)];
        for j in 0..2 {
            rows[(i, j)] = c[j] + EIGHT_GAUSSIANS_STD * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SampleSet::new(rows, "8gaussians", seed)
}

/// A named pair of distributions (P, Q), or the null variant where Q = P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Cauchy(0, 1) vs Cauchy(Δl, 1) at the given closed-form divergence (nats).
    Cauchy { target: f64 },
    Blobs,
    Hdgm { d: usize },
    Gauss { d: usize },
    EightGaussians,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub family: Family,
    /// Draw both sets from P.
    pub null: bool,
}

impl Dataset {
    pub fn new(family: Family) -> Self {
        Self { family, null: false }
    }

    pub fn null(family: Family) -> Self {
        Self { family, null: true }
    }

    pub fn dim(&self) -> usize {
        match self.family {
            Family::Cauchy { .. } => 1,
            Family::Blobs | Family::EightGaussians => 2,
            Family::Hdgm { d } | Family::Gauss { d } => d,
        }
    }

    pub fn sample(&self, which: Which, n: usize, seed: u64) -> Result<SampleSet> {
        let which = if self.null { Which::P } else { which };
        match self.family {
            Family::Cauchy { target } => {
                let loc = match which {
                    Which::P => 0.0,
                    Which::Q => location_for_target_jsd(target, 1.0)?,
                };
                gen_cauchy(CauchySpec::new(loc, 1.0)?, n, seed)
            }
            Family::Blobs => gen_blobs(3, n, which, seed),
            Family::Hdgm { d } => gen_hdgm(d, n, which, seed),
            Family::Gauss { d } => gen_gauss(d, n, which, seed),
            Family::EightGaussians => gen_8gaussians(n, seed),
        }
    }

    /// Draws an (X, Y) pair, X from P and Y from Q, on independent sub-streams.
    pub fn sample_pair(&self, n: usize, m: usize, seed: u64) -> Result<(SampleSet, SampleSet)> {
        Ok((
            self.sample(Which::P, n, derive_seed(seed, 0xA, 0))?,
            self.sample(Which::Q, m, derive_seed(seed, 0xB, 0))?,
        ))
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.null {
            write!(f, "null-")?;
        }
        match self.family {
            Family::Cauchy { target } => write!(f, "cauchy:{target}"),
            Family::Blobs => write!(f, "blobs"),
            Family::Hdgm { d } => write!(f, "hdgm:{d}"),
            Family::Gauss { d } => write!(f, "gauss:{d}"),
            Family::EightGaussians => write!(f, "8gaussians"),
        }
    }
}

impl FromStr for Dataset {
    type Err = Error;

    /// `[null-]NAME[:ARG]` with NAME one of `cauchy` (ARG = target divergence),
    /// `blobs`, `hdgm` / `gauss` (ARG = dimension, default 10 / 2) or `8gaussians`.
    fn from_str(s: &str) -> Result<Self> {
        let (null, rest) = match s.strip_prefix("null-") {
            Some(r) => (true, r),
            None => (false, s),
        };
        let (name, arg) = match rest.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (rest, None),
        };
        let bad = || Error::InvalidConfig(format!("unknown dataset '{s}'"));
        let parse_dim = |default: usize| -> Result<usize> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| bad()))
        };
        let family = match name {
            "cauchy" => {
                let target: f64 = arg.ok_or_else(bad)?.parse().map_err(|_| bad())?;
                location_for_target_jsd(target, 1.0)?;
                Family::Cauchy { target }
            }
            "blobs" => Family::Blobs,
            "hdgm" => Family::Hdgm { d: parse_dim(10)? },
            "gauss" => Family::Gauss { d: parse_dim(2)? },
            "8gaussians" => Family::EightGaussians,
            _ => return Err(bad()),
        };
        Ok(Self { family, null })
    }
}

/// Reads a rectangular numeric CSV (comma separated, optional header row).
pub fn load_csv(path: &Path, has_header: bool) -> Result<SampleSet> {
    let file = std::fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows + 1, |p| p.line() as usize);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::RaggedRows {
                    line,
                    expected: w,
                    found: record.len(),
                })
            }
            _ => {}
        }
        for cell in record.iter() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse '{cell}' as a number"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = match width {
        Some(w) if rows > 0 => w,
        _ => {
            return Err(Error::Parse {
                line: 0,
                message: "file contains no data rows".into(),
            })
        }
    };
    let name = path
        .file_stem()
        .map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    SampleSet::new(DMatrix::from_row_slice(rows, width, &values), name, 0)
}

/// CSV text for a sample set, with an optional `x0,x1,…` header.
pub fn to_csv(set: &SampleSet, header: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if header {
        w.write_record((0..set.dim()).map(|j| format!("x{j}")))
            .map_err(|e| Error::Io(e.into()))?;
    }
    for row in set.rows.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v}")))
            .map_err(|e| Error::Io(e.into()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(set: &SampleSet, path: &Path, header: bool) -> Result<()> {
    crate::io::write_atomic(path, to_csv(set, header)?.as_bytes())
}
