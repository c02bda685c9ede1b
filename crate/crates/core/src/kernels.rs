//! Stationary kernels with per-dimension (ARD) lengthscales.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KernelFamily {
    Matern12,
    Matern32,
    #[default]
    Matern52,
    #[serde(rename = "RBF")]
    Rbf,
    Periodic,
}

/// Kernel hyperparameters. Every positive quantity is stored as a log.
/// `log_outputscale` is the log of the kernel variance σ_k².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub family: KernelFamily,
    pub log_lengthscales: Vec<f64>,
    pub log_outputscale: f64,
    #[serde(default)]
    pub log_period: f64,
}

impl KernelParams {
    /// Unit lengthscales, unit outputscale and unit period.
    pub fn unit(family: KernelFamily, dim: usize) -> Self {
        KernelParams {
            family,
            log_lengthscales: vec![0.0; dim],
            log_outputscale: 0.0,
            log_period: 0.0,
        }
    }

    pub fn with_lengthscale(mut self, ls: f64) -> Self {
        self.log_lengthscales.iter_mut().for_each(|l| *l = ls.ln());
        self
    }

    pub fn with_outputscale(mut self, s: f64) -> Self {
        self.log_outputscale = s.ln();
        self
    }

    pub fn with_period(mut self, p: f64) -> Self {
        self.log_period = p.ln();
        self
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn outputscale(&self) -> f64 {
        self.log_outputscale.exp()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn period(&self) -> f64 {
        self.log_period.exp()
    }

    pub fn is_valid(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v.exp() > 0.0 && v.exp().is_finite();
        !self.log_lengthscales.is_empty()
            && self.log_lengthscales.iter().all(|l| ok(*l))
            && ok(self.log_outputscale)
            && (self.family != KernelFamily::Periodic || ok(self.log_period))
    }

    fn check(&self, cols: usize, what: &str) -> Result<()> {
        if cols != self.dim() {
            return Err(GpError::DimMismatch(format!(
                "{what} has {cols} columns but the kernel has {} lengthscales",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Correlation `κ` and its derivative with respect to the squared scaled
/// distance, for the radial families.
#[inline]
fn radial(family: KernelFamily, r2: f64) -> (f64, f64) {
    match family {
        KernelFamily::Rbf => {
            let k = (-0.5 * r2).exp();
            (k, -0.5 * k)
        }
        KernelFamily::Matern12 => {
            let r = r2.sqrt();
            let e = (-r).exp();
            // not differentiable at r = 0; the subgradient 0 is used there
            let d = if r > 0.0 { -e / (2.0 * r) } else { 0.0 };
            (e, d)
        }
        KernelFamily::Matern32 => {
            let r = r2.sqrt();
            let e = (-SQRT3 * r).exp();
            ((1.0 + SQRT3 * r) * e, -1.5 * e)
        }
        KernelFamily::Matern52 => {
            let r = r2.sqrt();
            let e = (-SQRT5 * r).exp();
            (
                (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * e,
                -5.0 / 6.0 * (1.0 + SQRT5 * r) * e,
            )
        }
        KernelFamily::Periodic => unreachable!("periodic kernel is not radial"),
    }
}

/// Cross-covariance `k(X, Z)` for row-wise inputs `X` (n×d) and `Z` (m×d).
pub fn kernel_matrix(p: &KernelParams, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.check(x.ncols(), "X")?;
    p.check(z.ncols(), "Z")?;
    let (n, m, d) = (x.nrows(), z.nrows(), p.dim());
    let s2 = p.outputscale();
    let mut k = DMatrix::zeros(n, m);
    match p.family {
        KernelFamily::Periodic => {
            let inv_l2: Vec<f64> = p.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
            let w = std::f64::consts::PI / p.period();
            for j in 0..m {
                for i in 0..n {
                    let mut e = 0.0;
                    for c in 0..d {
                        let s = (w * (x[(i, c)] - z[(j, c)])).sin();
                        e += s * s * inv_l2[c];
                    }
                    k[(i, j)] = s2 * (-2.0 * e).exp();
                }
            }
        }
        fam => {
            let inv_l: Vec<f64> = p.lengthscales().iter().map(|l| 1.0 / l).collect();
            for j in 0..m {
                for i in 0..n {
                    let mut r2 = 0.0;
                    for c in 0..d {
                        let t = (x[(i, c)] - z[(j, c)]) * inv_l[c];
                        r2 += t * t;
                    }
                    k[(i, j)] = s2 * radial(fam, r2).0;
                }
            }
        }
    }
    Ok(k)
}

/// Prior variances `k(x_i, x_i)`; constant σ_k² for every stationary family.
pub fn kernel_diag(p: &KernelParams, x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_element(x.nrows(), p.outputscale())
}

/// Gradients of a scalar through `K = k(X, Z)` given `∂f/∂K`.
#[derive(Debug, Clone)]
pub struct KernelGrad {
    pub log_lengthscales: DVector<f64>,
    pub log_outputscale: f64,
    pub log_period: f64,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl KernelGrad {
    pub fn zeros(d: usize, n: usize, m: usize) -> Self {
        KernelGrad {
            log_lengthscales: DVector::zeros(d),
            log_outputscale: 0.0,
            log_period: 0.0,
            x: DMatrix::zeros(n, d),
            z: DMatrix::zeros(m, d),
        }
    }
}

/// Vector-Jacobian product of [`kernel_matrix`]: pulls the adjoint `adj`
/// (n×m) back onto the hyperparameters and both input sets.
pub fn kernel_matrix_vjp(
    p: &KernelParams,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    adj: &DMatrix<f64>,
) -> Result<KernelGrad> {
    p.check(x.ncols(), "X")?;
    p.check(z.ncols(), "Z")?;
    let (n, m, d) = (x.nrows(), z.nrows(), p.dim());
    if adj.nrows() != n || adj.ncols() != m {
        return Err(GpError::DimMismatch(format!(
            "kernel adjoint is {}x{}, expected {n}x{m}",
            adj.nrows(),
            adj.ncols()
        )));
    }
    let s2 = p.outputscale();
    let mut g = KernelGrad::zeros(d, n, m);
    let mut dx = vec![0.0; d];
    match p.family {
        KernelFamily::Periodic => {
            let inv_l2: Vec<f64> = p.lengthscales().iter().map(|l| 1.0 / (l * l)).collect();
            let w = std::f64::consts::PI / p.period();
            for j in 0..m {
                for i in 0..n {
                    let a = adj[(i, j)];
                    if a == 0.0 {
                        continue;
                    }
                    let mut e = 0.0;
                    for c in 0..d {
                        dx[c] = x[(i, c)] - z[(j, c)];
                        let s = (w * dx[c]).sin();
                        e += s * s * inv_l2[c];
                    }
                    let kv = s2 * (-2.0 * e).exp();
                    let ak = a * kv;
                    g.log_outputscale += ak;
                    for c in 0..d {
                        let t = w * dx[c];
                        let s = t.sin();
                        // ∂k/∂δ = k · (−2π/p) sin(2πδ/p) / ℓ²
                        let dd = -2.0 * w * (2.0 * t).sin() * inv_l2[c];
                        g.x[(i, c)] += ak * dd;
                        g.z[(j, c)] -= ak * dd;
                        g.log_lengthscales[c] += ak * 4.0 * s * s * inv_l2[c];
                        g.log_period += ak * 2.0 * t * (2.0 * t).sin() * inv_l2[c];
                    }
                }
            }
        }
        fam => {
            let inv_l: Vec<f64> = p.lengthscales().iter().map(|l| 1.0 / l).collect();
            for j in 0..m {
                for i in 0..n {
                    let a = adj[(i, j)];
                    if a == 0.0 {
                        continue;
                    }
                    let mut r2 = 0.0;
                    for c in 0..d {
                        let t = (x[(i, c)] - z[(j, c)]) * inv_l[c];
                        dx[c] = t;
                        r2 += t * t;
                    }
                    let (kappa, dk_dr2) = radial(fam, r2);
                    g.log_outputscale += a * s2 * kappa;
                    let coef = a * s2 * dk_dr2;
                    for c in 0..d {
                        let t = dx[c];
                        g.x[(i, c)] += coef * 2.0 * t * inv_l[c];
                        g.z[(j, c)] -= coef * 2.0 * t * inv_l[c];
                        g.log_lengthscales[c] -= coef * 2.0 * t * t;
                    }
                }
            }
        }
    }
    Ok(g)
}
