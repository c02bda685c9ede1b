//! Predictive scores: NLL, RMSE, CRPS, noise fraction and z-score
//! calibration.
//!
//! Moments and targets are taken in standardized units; `target_std`
//! rescales results to the original units (pass 1.0 to stay standardized).

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{GpError, Result};
use crate::model::PredictiveMoments;

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn check(m: &PredictiveMoments, y: &DVector<f64>) -> Result<()> {
    if m.len() != y.len() {
        return Err(GpError::LengthMismatch { expected: m.len(), got: y.len() });
    }
    Ok(())
}

fn total_sd(m: &PredictiveMoments) -> Result<DVector<f64>> {
    let v = m.total_var();
    if let Some(i) = v.iter().position(|t| !(*t > 0.0)) {
        return Err(GpError::NonpositiveVariance(i));
    }
    Ok(v.map(f64::sqrt))
}

/// Mean negative log predictive density.
pub fn nll(m: &PredictiveMoments, y: &DVector<f64>, target_std: f64) -> Result<f64> {
    check(m, y)?;
    let v = m.total_var();
    if let Some(i) = v.iter().position(|t| !(*t > 0.0)) {
        return Err(GpError::NonpositiveVariance(i));
    }
    let n = y.len() as f64;
    let s: f64 = (0..y.len())
        .map(|i| {
            let r = y[i] - m.mu_f[i];
            0.5 * (2.0 * PI * v[i]).ln() + 0.5 * r * r / v[i]
        })
        .sum();
    Ok(s / n + target_std.ln())
}

pub fn rmse(m: &PredictiveMoments, y: &DVector<f64>, target_std: f64) -> Result<f64> {
    check(m, y)?;
    Ok(target_std * ((y - &m.mu_f).norm_squared() / y.len() as f64).sqrt())
}

/// CRPS of a Gaussian forecast `N(μ, σ²)` at `y`.
pub fn crps_point(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / PI.sqrt())
}

/// Mean closed-form CRPS against the total predictive variance.
pub fn crps_gaussian(m: &PredictiveMoments, y: &DVector<f64>, target_std: f64) -> Result<f64> {
    check(m, y)?;
    let sd = total_sd(m)?;
    let s: f64 = (0..y.len()).map(|i| crps_point(m.mu_f[i], sd[i], y[i])).sum();
    Ok(target_std * s / y.len() as f64)
}

/// Mean share of predictive variance due to observation noise.
pub fn noise_fraction(m: &PredictiveMoments) -> f64 {
    let s = m.sigma_obs_sq;
    m.var_f.iter().map(|v| s / (s + v)).sum::<f64>() / m.len() as f64
}

/// `(y − μ_f) / σ_tot` per point.
pub fn zscores(m: &PredictiveMoments, y: &DVector<f64>) -> Result<DVector<f64>> {
    check(m, y)?;
    let sd = total_sd(m)?;
    Ok(DVector::from_fn(y.len(), |i, _| (y[i] - m.mu_f[i]) / sd[i]))
}

/// Kolmogorov–Smirnov distance between the sample ECDF and the standard
/// normal CDF.
pub fn ks_normal(z: &[f64]) -> f64 {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub ks: f64,
}

impl Ecdf {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["z", "ecdf", "normal_cdf"])?;
        for (g, v) in self.grid.iter().zip(&self.values) {
            w.write_record([g.to_string(), v.to_string(), normal_cdf(*g).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical CDF of the z-scores on `grid`, plus the KS distance.
pub fn zscore_ecdf(m: &PredictiveMoments, y: &DVector<f64>, grid: &[f64]) -> Result<Ecdf> {
    let z = zscores(m, y)?;
    Ok(ecdf_of(z.as_slice(), grid))
}

pub fn ecdf_of(z: &[f64], grid: &[f64]) -> Ecdf {
    let mut s = z.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let values = grid.iter().map(|g| s.partition_point(|v| v <= g) as f64 / n).collect();
    Ecdf {
        grid: grid.to_vec(),
        values,
        ks: ks_normal(&s),
    }
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub x: Vec<f64>,
    pub y: f64,
    pub mu_f: f64,
    pub var_f: f64,
    pub sigma_obs_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nll: f64,
    pub rmse: f64,
    pub crps: f64,
    pub noise_fraction: f64,
    pub ks: f64,
    pub zscores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_point: Option<Vec<PointRow>>,
}

impl EvalReport {
    pub fn compute(m: &PredictiveMoments, y: &DVector<f64>, target_std: f64) -> Result<Self> {
        let z = zscores(m, y)?;
        Ok(EvalReport {
            nll: nll(m, y, target_std)?,
            rmse: rmse(m, y, target_std)?,
            crps: crps_gaussian(m, y, target_std)?,
            noise_fraction: noise_fraction(m),
            ks: ks_normal(z.as_slice()),
            zscores: z.iter().copied().collect(),
            per_point: None,
        })
    }

    /// Attaches a per-point table in original units.
    pub fn with_points(
        mut self,
        x: &[Vec<f64>],
        m: &PredictiveMoments,
        y: &DVector<f64>,
        target_mean: f64,
        target_std: f64,
    ) -> Self {
        let s2 = target_std * target_std;
        self.per_point = Some(
            (0..y.len())
                .map(|i| PointRow {
                    x: x[i].clone(),
                    y: y[i] * target_std + target_mean,
                    mu_f: m.mu_f[i] * target_std + target_mean,
                    var_f: m.var_f[i] * s2,
                    sigma_obs_sq: m.sigma_obs_sq * s2,
                })
                .collect(),
        );
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_points_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let rows = self.per_point.as_deref().unwrap_or(&[]);
        let d = rows.first().map_or(0, |r| r.x.len());
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.extend(["y", "mu_f", "var_f", "sigma_obs_sq"].map(String::from));
        w.write_record(&header)?;
        for r in rows {
            let rec: Vec<String> = r
                .x
                .iter()
                .chain([r.y, r.mu_f, r.var_f, r.sigma_obs_sq].iter())
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
