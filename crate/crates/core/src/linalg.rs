//! Dense linear-algebra primitives: jittered Cholesky, triangular solves,
//! log-determinants and Gaussian KL divergences.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::model::CovParam;

/// Number of multiplicative jitter retries after the jitter-free attempt.
pub const JITTER_LEVELS: i32 = 6;

/// Default base jitter for standardized problems.
pub const DEFAULT_JITTER: f64 = 1e-6;

/// A dense symmetric matrix. The constructor symmetrizes its input.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds `(A + Aᵀ) / 2`. Panics if `a` is not square or is empty.
    pub fn new(a: DMatrix<f64>) -> Self {
        assert!(a.is_square() && a.nrows() >= 1, "SymMatrix requires a non-empty square matrix");
        let t = a.transpose();
        SymMatrix((a + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Self {
        SymMatrix(DMatrix::from_diagonal(d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// A lower-triangular matrix with a strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(DMatrix<f64>);

impl LowerTriangular {
    /// Takes the lower triangle of `m`. Fails when a diagonal entry is not
    /// strictly positive.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(GpError::DimMismatch(format!(
                "lower-triangular factor must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some(i) = (0..m.nrows()).find(|&i| !(m[(i, i)] > 0.0)) {
            return Err(GpError::DimMismatch(format!(
                "diagonal entry {i} of a triangular factor is {}",
                m[(i, i)]
            )));
        }
        Ok(LowerTriangular(m.lower_triangle()))
    }

    pub fn identity(n: usize) -> Self {
        LowerTriangular(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }

    /// `log det(L Lᵀ) = 2 Σ log L_ii`.
    pub fn log_det_product(&self) -> f64 {
        2.0 * self.0.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L X = B`, or `Lᵀ X = B` when `transposed`.
    pub fn solve(&self, b: &DMatrix<f64>, transposed: bool) -> Result<DMatrix<f64>> {
        tri_solve(self, b, transposed)
    }

    pub fn solve_vec(&self, b: &DVector<f64>, transposed: bool) -> Result<DVector<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(GpError::DimMismatch(format!(
                "triangular solve: factor is {n}x{n}, rhs has {} rows",
                b.len()
            )));
        }
        let x = if transposed {
            self.0.tr_solve_lower_triangular(b)
        } else {
            self.0.solve_lower_triangular(b)
        };
        // diagonal is positive so the solve cannot hit a zero pivot
        Ok(x.expect("triangular factor has a positive diagonal"))
    }
}

/// Cholesky factorization of `A + jI`, where `j` is the smallest entry of
/// `{0, base, 10·base, …, 10⁵·base}` for which the factorization succeeds.
pub fn cholesky_jitter(a: &SymMatrix, base_jitter: f64) -> Result<(LowerTriangular, f64)> {
    assert!(base_jitter >= 0.0, "base jitter must be non-negative");
    let n = a.dim();
    let mut ladder = vec![0.0];
    if base_jitter > 0.0 {
        ladder.extend((0..JITTER_LEVELS).map(|k| base_jitter * 10f64.powi(k)));
    }
    for &j in &ladder {
        let mut m = a.as_matrix().clone();
        for i in 0..n {
            m[(i, i)] += j;
        }
        if let Some(l) = factor(m) {
            return Ok((LowerTriangular(l), j));
        }
    }
    Err(GpError::FactorizationFailed {
        dim: n,
        max_jitter: *ladder.last().unwrap(),
    })
}

fn factor(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let l = nalgebra::Cholesky::new(m)?.unpack();
    if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
        Some(l)
    } else {
        None
    }
}

/// Solves `L X = B` (or `Lᵀ X = B`).
pub fn tri_solve(l: &LowerTriangular, b: &DMatrix<f64>, transposed: bool) -> Result<DMatrix<f64>> {
    let n = l.dim();
    if b.nrows() != n {
        return Err(GpError::DimMismatch(format!(
            "triangular solve: factor is {n}x{n}, rhs has {} rows",
            b.nrows()
        )));
    }
    let x = if transposed {
        l.0.tr_solve_lower_triangular(b)
    } else {
        l.0.solve_lower_triangular(b)
    };
    Ok(x.expect("triangular factor has a positive diagonal"))
}

/// `KL(N(m_q, S_q) ‖ N(m_p, S_p))`.
pub fn kl_mvn(m_q: &DVector<f64>, s_q: &SymMatrix, m_p: &DVector<f64>, s_p: &SymMatrix) -> Result<f64> {
    let k = m_q.len();
    if m_p.len() != k || s_q.dim() != k || s_p.dim() != k {
        return Err(GpError::DimMismatch(format!(
            "kl_mvn: means {} and {}, covariances {} and {}",
            k,
            m_p.len(),
            s_q.dim(),
            s_p.dim()
        )));
    }
    let (lp, _) = cholesky_jitter(s_p, DEFAULT_JITTER)?;
    let (lq, _) = cholesky_jitter(s_q, DEFAULT_JITTER)?;
    // tr(S_p⁻¹ S_q) = ‖L_p⁻¹ L_q‖²_F
    let w = lp.solve(lq.as_matrix(), false)?;
    let trace = w.norm_squared();
    let diff = m_p - m_q;
    let alpha = lp.solve_vec(&diff, false)?;
    let maha = alpha.norm_squared();
    let kl = 0.5 * (trace + maha - k as f64 + lp.log_det_product() - lq.log_det_product());
    Ok(kl)
}

/// `KL(N(m', S') ‖ N(0, I))` for a whitened variational distribution. For the
/// delta parameterization this is the negative log prior density with
/// constants dropped, `½‖m'‖²`.
pub fn kl_whitened(m: &DVector<f64>, cov: &CovParam) -> f64 {
    let mean_term = 0.5 * m.norm_squared();
    mean_term + kl_whitened_cov(cov)
}

/// Covariance-only part of [`kl_whitened`]: `½(tr S' − M − log det S')`.
pub fn kl_whitened_cov(cov: &CovParam) -> f64 {
    match cov {
        CovParam::Delta => 0.0,
        CovParam::Full(l) => {
            let m = l.dim() as f64;
            0.5 * (l.as_matrix().norm_squared() - m - l.log_det_product())
        }
        CovParam::Diagonal(log_sd) => log_sd
            .iter()
            .map(|v| 0.5 * ((2.0 * v).exp() - 1.0 - 2.0 * v))
            .sum(),
    }
}

/// `log N(y | mean, var)` for a scalar Gaussian.
#[inline]
pub fn log_normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + r * r / var)
}
