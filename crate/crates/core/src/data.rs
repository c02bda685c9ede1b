//! Datasets: CSV ingestion, standardization, seeded splits and synthetic
//! generators.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernels::{kernel_matrix, KernelParams};
use crate::linalg::{cholesky_jitter, SymMatrix, DEFAULT_JITTER};
use crate::model::{from_rows, to_rows};
use crate::objectives::DEFAULT_N_MAX;

/// Features and targets together with the affine maps back to original
/// units. Freshly loaded data carries identity statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
    pub name: String,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Wraps raw arrays with identity statistics.
    pub fn raw(name: &str, x: DMatrix<f64>, y: DVector<f64>) -> Self {
        let d = x.ncols();
        Dataset {
            x,
            y,
            feature_means: vec![0.0; d],
            feature_stds: vec![1.0; d],
            target_mean: 0.0,
            target_std: 1.0,
            name: name.to_string(),
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn unstandardize_target(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|t| t * self.target_std + self.target_mean)
    }

    pub fn standardize_target(&self, v: &DVector<f64>) -> DVector<f64> {
        v.map(|t| (t - self.target_mean) / self.target_std)
    }

    pub fn unstandardize_features(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * self.feature_stds[j] + self.feature_means[j])
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut out = self.clone();
        out.x = DMatrix::from_fn(idx.len(), self.dim(), |r, c| self.x[(idx[r], c)]);
        out.y = DVector::from_fn(idx.len(), |r, _| self.y[idx[r]]);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetDoc {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            x: to_rows(&self.x),
            y: self.y.iter().copied().collect(),
            feature_means: self.feature_means.clone(),
            feature_stds: self.feature_stds.clone(),
            target_mean: self.target_mean,
            target_std: self.target_std,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(s)?;
        let x = from_rows(&doc.x, "x")?;
        if x.nrows() != doc.y.len() {
            return Err(GpError::LengthMismatch { expected: x.nrows(), got: doc.y.len() });
        }
        Ok(Dataset {
            x,
            y: DVector::from_vec(doc.y),
            feature_means: doc.feature_means,
            feature_stds: doc.feature_stds,
            target_mean: doc.target_mean,
            target_std: doc.target_std,
            name: doc.name,
            feature_names: doc.feature_names,
        })
    }

    /// Writes the features and target as a CSV with a header row.
    pub fn write_csv(&self, path: &Path, target: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push(target.to_string());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(std::iter::once(&self.y[i]))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    name: String,
    feature_names: Vec<String>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
    target_mean: f64,
    target_std: f64,
}

/// Reads a numeric CSV with a header row; `target` names the response
/// column and every other column becomes a feature.
pub fn load_csv(path: &Path, target: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let t = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| GpError::MissingColumn(target.to_string()))?;
    let feature_names: Vec<String> = headers.iter().enumerate().filter(|(j, _)| *j != t).map(|(_, h)| h.clone()).collect();
    let d = feature_names.len();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != headers.len() {
            return Err(GpError::ParseError {
                row,
                col: String::new(),
                msg: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| GpError::ParseError {
                row,
                col: headers[j].clone(),
                msg: format!("not a number: {cell:?}"),
            })?;
            if !v.is_finite() {
                return Err(GpError::ParseError {
                    row,
                    col: headers[j].clone(),
                    msg: format!("non-finite value {cell:?}"),
                });
            }
            if j == t {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let name = path.file_stem().map_or_else(|| "csv".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = Dataset::raw(&name, DMatrix::from_row_slice(ys.len(), d, &xs), DVector::from_vec(ys));
    ds.feature_names = feature_names;
    Ok(ds)
}

/// Train/test/validation proportions and the permutation seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(15.0, 3.0, 2.0, 0)
    }
}

impl SplitSpec {
    /// Normalizes the three weights to sum to one.
    pub fn new(train: f64, test: f64, val: f64, seed: u64) -> Self {
        let t = train + test + val;
        SplitSpec {
            train: train / t,
            test: test / t,
            val: val / t,
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.train, self.test, self.val];
        if p.iter().any(|v| !(*v > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(GpError::InvalidConfig(format!(
                "split proportions must be positive and sum to 1, got {p:?}"
            )));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let p = [self.train, self.test, self.val];
        let quotas: Vec<f64> = p.iter().map(|q| q * n as f64).collect();
        let mut sizes = [0usize; 3];
        for i in 0..3 {
            sizes[i] = quotas[i].floor() as usize;
        }
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
        let mut left = n - sizes.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }

    /// Seeded permutation cut into train, test and validation indices.
    pub fn indices(&self, n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let [a, b, _] = self.sizes(n);
        let val = perm.split_off(a + b);
        let test = perm.split_off(a);
        (perm, test, val)
    }
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Splits `raw` by seed and standardizes all three parts with statistics
/// of the training part. Constant training columns are dropped.
pub fn standardize_and_split(raw: &Dataset, split: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    split.validate()?;
    if raw.len() < 10 {
        return Err(GpError::InvalidConfig(format!(
            "need at least 10 rows to split, got {}",
            raw.len()
        )));
    }
    let (tr, te, va) = split.indices(raw.len());
    let train_raw = raw.select(&tr);
    let (tm, ts) = mean_std(train_raw.y.iter().copied());
    if !(ts > 0.0) {
        return Err(GpError::InvalidConfig("training target is constant".into()));
    }
    let mut keep = Vec::new();
    let mut stats = Vec::new();
    for j in 0..raw.dim() {
        let (m, s) = mean_std(train_raw.x.column(j).iter().copied());
        if s > 0.0 {
            keep.push(j);
            stats.push((m, s));
        } else {
            log::warn!("dropping constant column {:?}", raw.feature_names[j]);
        }
    }
    let build = |idx: &[usize]| -> Dataset {
        let x = DMatrix::from_fn(idx.len(), keep.len(), |r, c| {
            let (m, s) = stats[c];
            (raw.x[(idx[r], keep[c])] - m) / s
        });
        let y = DVector::from_fn(idx.len(), |r, _| (raw.y[idx[r]] - tm) / ts);
        // compose with whatever standardization `raw` already carried
        Dataset {
            x,
            y,
            feature_means: keep.iter().zip(&stats).map(|(&j, (m, _))| raw.feature_means[j] + raw.feature_stds[j] * m).collect(),
            feature_stds: keep.iter().zip(&stats).map(|(&j, (_, s))| raw.feature_stds[j] * s).collect(),
            target_mean: raw.target_mean + raw.target_std * tm,
            target_std: raw.target_std * ts,
            name: raw.name.clone(),
            feature_names: keep.iter().map(|&j| raw.feature_names[j].clone()).collect(),
        }
    };
    Ok((build(&tr), build(&te), build(&va)))
}

/// Latent mean of the heteroscedastic benchmark.
pub fn heteroscedastic_mean(x: f64) -> f64 {
    (2.0 * PI * x).sin()
}

/// Noise standard deviation of the heteroscedastic benchmark.
pub fn heteroscedastic_noise_std(x: f64) -> f64 {
    0.05 + 0.5 * x.abs()
}

/// One-dimensional data with noise that grows away from the origin.
pub fn gen_heteroscedastic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        heteroscedastic_mean(x[i]) + heteroscedastic_noise_std(x[i]) * e
    });
    Dataset::raw("heteroscedastic", DMatrix::from_column_slice(n, 1, &x), y)
}

/// A draw from a zero-mean GP prior on an equispaced grid over [0, 1],
/// plus optional white noise of standard deviation `noise_std`.
pub fn gen_prior_draw(kernel: &KernelParams, n: usize, seed: u64, noise_std: f64) -> Result<Dataset> {
    if n > DEFAULT_N_MAX {
        return Err(GpError::SizeLimitExceeded { n, limit: DEFAULT_N_MAX });
    }
    if kernel.dim() != 1 {
        return Err(GpError::DimMismatch(format!(
            "prior draws are one-dimensional, kernel has {} lengthscales",
            kernel.dim()
        )));
    }
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 * step);
    let k = kernel_matrix(kernel, &x, &x)?;
    let (l, jitter) = cholesky_jitter(&SymMatrix::new(k), DEFAULT_JITTER)?;
    if jitter > 0.0 {
        log::debug!("prior draw used jitter {jitter:e}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut y = l.as_matrix() * eps;
    if noise_std > 0.0 {
        for v in y.iter_mut() {
            *v += noise_std * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(Dataset::raw("prior_draw", x, y))
}
