//! Trainable model state in whitened coordinates and the predictive
//! moments it induces.
//!
//! With `Λ Λᵀ = K_MM` the state stores `m' = Λ⁻¹ m` and `S' = Λ⁻¹ S Λ⁻ᵀ`, so
//! every quantity below is expressed through the rows `a_i = Λ⁻¹ k_i`:
//!
//! * `μ_f(x_i) = a_iᵀ m'`
//! * `σ_f(x_i)² = K̃_ii + a_iᵀ S' a_i`, with `K̃_ii = k(x_i, x_i) − ‖a_i‖²`

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernels::{kernel_diag, kernel_matrix, KernelFamily, KernelParams};
use crate::linalg::{cholesky_jitter, LowerTriangular, SymMatrix, DEFAULT_JITTER};
use crate::objectives::{Method, ObjectiveSpec};
use crate::trainer::kmeans;

pub const STATE_VERSION: &str = "pgpr-state-v1";

/// Whitened variational covariance `S'`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovParam {
    /// `S' = L' L'ᵀ`.
    Full(LowerTriangular),
    /// Log standard deviations: `S' = diag(exp(2v))`.
    Diagonal(DVector<f64>),
    /// Point mass; `S' = 0`.
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    Full,
    Diagonal,
    Delta,
}

impl CovParam {
    pub fn kind(&self) -> CovKind {
        match self {
            CovParam::Full(_) => CovKind::Full,
            CovParam::Diagonal(_) => CovKind::Diagonal,
            CovParam::Delta => CovKind::Delta,
        }
    }

    /// Dense `S'`, or `None` for the delta parameterization.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match self {
            CovParam::Full(l) => Some(l.reconstruct()),
            CovParam::Diagonal(v) => Some(DMatrix::from_diagonal(&v.map(|x| (2.0 * x).exp()))),
            CovParam::Delta => None,
        }
    }

    /// Row-wise quadratic forms `a_iᵀ S' a_i`.
    pub fn row_quadratic(&self, a: &DMatrix<f64>) -> DVector<f64> {
        match self {
            CovParam::Delta => DVector::zeros(a.nrows()),
            CovParam::Full(l) => {
                let b = a * l.as_matrix();
                DVector::from_fn(a.nrows(), |i, _| b.row(i).norm_squared())
            }
            CovParam::Diagonal(v) => {
                let var = v.map(|x| (2.0 * x).exp());
                DVector::from_fn(a.nrows(), |i, _| {
                    a.row(i).iter().zip(var.iter()).map(|(x, s)| x * x * s).sum()
                })
            }
        }
    }
}

/// Every trainable quantity of a sparse regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub z_mu: DMatrix<f64>,
    /// Separate variance-branch inducing locations (decoupled variant only).
    pub z_sigma: Option<DMatrix<f64>>,
    pub m_prime: DVector<f64>,
    pub cov: CovParam,
    pub log_sigma_obs: f64,
    pub kernel: KernelParams,
}

impl ModelState {
    pub fn z_var(&self) -> &DMatrix<f64> {
        self.z_sigma.as_ref().unwrap_or(&self.z_mu)
    }

    pub fn is_decoupled(&self) -> bool {
        self.z_sigma.is_some()
    }

    pub fn num_inducing_mean(&self) -> usize {
        self.z_mu.nrows()
    }

    pub fn num_inducing_var(&self) -> usize {
        self.z_var().nrows()
    }

    pub fn dim(&self) -> usize {
        self.z_mu.ncols()
    }

    pub fn sigma_obs_sq(&self) -> f64 {
        (2.0 * self.log_sigma_obs).exp()
    }

    /// Checks the structural requirements of `method` against this state.
    pub fn check_method(&self, method: Method) -> Result<()> {
        let err = |reason: String| {
            Err(GpError::IncompatibleState {
                method: method.name().to_string(),
                reason,
            })
        };
        let kind = self.cov.kind();
        if !method.allowed_cov().contains(&kind) {
            return err(format!("covariance kind {kind:?} is not one of {:?}", method.allowed_cov()));
        }
        if self.is_decoupled() != (method == Method::PpgprMfd) {
            return err("decoupled inducing sets are used by PPGPR_MFD and only by it".into());
        }
        if self.m_prime.len() != self.num_inducing_mean() {
            return err(format!(
                "m' has length {} but there are {} mean inducing points",
                self.m_prime.len(),
                self.num_inducing_mean()
            ));
        }
        let cov_dim = match &self.cov {
            CovParam::Full(l) => Some(l.dim()),
            CovParam::Diagonal(v) => Some(v.len()),
            CovParam::Delta => None,
        };
        if let Some(c) = cov_dim {
            if c != self.num_inducing_var() {
                return err(format!(
                    "covariance has dimension {c} but there are {} variance inducing points",
                    self.num_inducing_var()
                ));
            }
        }
        if self.kernel.dim() != self.dim() || self.z_var().ncols() != self.dim() {
            return Err(GpError::DimMismatch("inducing locations and kernel disagree on input dimension".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StateDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: StateDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-point predictive moments of `p(y | x) = N(μ_f, σ_f² + σ_obs²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveMoments {
    pub mu_f: DVector<f64>,
    pub var_f: DVector<f64>,
    pub sigma_obs_sq: f64,
}

impl PredictiveMoments {
    pub fn len(&self) -> usize {
        self.mu_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu_f.is_empty()
    }

    pub fn total_var(&self) -> DVector<f64> {
        self.var_f.map(|v| v + self.sigma_obs_sq)
    }
}

/// Which inducing set to build features for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Mean,
    Var,
}

/// Kernel features of a batch against one inducing set.
#[derive(Debug, Clone)]
pub struct Features {
    /// `k(X, Z)`, n×M.
    pub kxz: DMatrix<f64>,
    /// Jittered Cholesky factor `Λ` of `K_MM`.
    pub chol: LowerTriangular,
    pub jitter: f64,
    /// Rows `a_i = Λ⁻¹ k_i`, n×M.
    pub a: DMatrix<f64>,
    /// `K̃_ii` clamped below at zero.
    pub ktilde: DVector<f64>,
    /// Whether the clamp was active for each row.
    pub clamped: Vec<bool>,
}

impl Features {
    pub fn compute(kernel: &KernelParams, z: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<Self> {
        let kzz = kernel_matrix(kernel, z, z)?;
        let (chol, jitter) = cholesky_jitter(&SymMatrix::new(kzz), DEFAULT_JITTER)?;
        let kxz = kernel_matrix(kernel, x, z)?;
        let a = chol.solve(&kxz.transpose(), false)?.transpose();
        let kdiag = kernel_diag(kernel, x);
        let mut clamped = vec![false; x.nrows()];
        let ktilde = DVector::from_fn(x.nrows(), |i, _| {
            let raw = kdiag[i] - a.row(i).norm_squared();
            if raw < 0.0 {
                clamped[i] = true;
                0.0
            } else {
                raw
            }
        });
        Ok(Features {
            kxz,
            chol,
            jitter,
            a,
            ktilde,
            clamped,
        })
    }
}

/// Returns `(A, K̃)` for the chosen inducing set: rows `a_i = Λ⁻¹ k_i` and
/// the clamped Nyström residual diagonal.
pub fn whitened_features(state: &ModelState, x: &DMatrix<f64>, which: Branch) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let z = match which {
        Branch::Mean => &state.z_mu,
        Branch::Var => state.z_var(),
    };
    let f = Features::compute(&state.kernel, z, x)?;
    Ok((f.a, f.ktilde))
}

/// Predictive moments for the variant `spec` at inputs `x`.
pub fn predictive_moments(state: &ModelState, x: &DMatrix<f64>, spec: &ObjectiveSpec) -> Result<PredictiveMoments> {
    state.check_method(spec.method)?;
    Ok(moments_unchecked(state, x)?.0)
}

/// Moments together with the features they were built from; the variance
/// branch is `None` when it shares the mean branch's inducing set.
pub(crate) fn moments_unchecked(
    state: &ModelState,
    x: &DMatrix<f64>,
) -> Result<(PredictiveMoments, Features, Option<Features>, DVector<f64>)> {
    let fm = Features::compute(&state.kernel, &state.z_mu, x)?;
    let fs = match &state.z_sigma {
        Some(zs) => Some(Features::compute(&state.kernel, zs, x)?),
        None => None,
    };
    let mu_f = &fm.a * &state.m_prime;
    let fv = fs.as_ref().unwrap_or(&fm);
    let quad = state.cov.row_quadratic(&fv.a);
    let var_f = &fv.ktilde + &quad;
    let pm = PredictiveMoments {
        mu_f,
        var_f,
        sigma_obs_sq: state.sigma_obs_sq(),
    };
    Ok((pm, fm, fs, quad))
}

/// Initial state: k-means inducing locations, `m' = 0`, `S'` equal to the
/// prior, unit noise and unit kernel hyperparameters.
pub fn init_state(
    x: &DMatrix<f64>,
    _y: &DVector<f64>,
    m: usize,
    spec: &ObjectiveSpec,
    family: KernelFamily,
    seed: u64,
) -> Result<ModelState> {
    if m == 0 || m > x.nrows() {
        return Err(GpError::InvalidConfig(format!(
            "number of inducing points must be in 1..={}, got {m}",
            x.nrows()
        )));
    }
    let z = kmeans(x, m, seed, crate::trainer::KMEANS_ITERS);
    let cov = match spec.method.default_cov() {
        CovKind::Full => CovParam::Full(LowerTriangular::identity(m)),
        CovKind::Diagonal => CovParam::Diagonal(DVector::zeros(m)),
        CovKind::Delta => CovParam::Delta,
    };
    let z_sigma = (spec.method == Method::PpgprMfd).then(|| z.clone());
    Ok(ModelState {
        z_mu: z,
        z_sigma,
        m_prime: DVector::zeros(m),
        cov,
        log_sigma_obs: 0.0,
        kernel: KernelParams::unit(family, x.ncols()),
    })
}

// ---- JSON checkpoint format ----

#[derive(Serialize, Deserialize)]
struct CovDoc {
    kind: CovKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    version: String,
    #[serde(rename = "Z_mu")]
    z_mu: Vec<Vec<f64>>,
    #[serde(rename = "Z_sigma")]
    z_sigma: Option<Vec<Vec<f64>>>,
    m_prime: Vec<f64>,
    cov: CovDoc,
    log_sigma_obs: f64,
    kernel: KernelParams,
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(GpError::DimMismatch(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

impl From<&ModelState> for StateDoc {
    fn from(s: &ModelState) -> Self {
        let data = match &s.cov {
            CovParam::Full(l) => Some(serde_json::json!(to_rows(l.as_matrix()))),
            CovParam::Diagonal(v) => Some(serde_json::json!(v.as_slice())),
            CovParam::Delta => None,
        };
        StateDoc {
            version: STATE_VERSION.to_string(),
            z_mu: to_rows(&s.z_mu),
            z_sigma: s.z_sigma.as_ref().map(to_rows),
            m_prime: s.m_prime.as_slice().to_vec(),
            cov: CovDoc {
                kind: s.cov.kind(),
                data,
            },
            log_sigma_obs: s.log_sigma_obs,
            kernel: s.kernel.clone(),
        }
    }
}

impl TryFrom<StateDoc> for ModelState {
    type Error = GpError;

    fn try_from(doc: StateDoc) -> Result<Self> {
        if doc.version != STATE_VERSION {
            return Err(GpError::VersionMismatch(doc.version));
        }
        let cov = match doc.cov.kind {
            CovKind::Delta => CovParam::Delta,
            CovKind::Full => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(
                    doc.cov.data.ok_or_else(|| GpError::InvalidConfig("Full covariance without data".into()))?,
                )?;
                CovParam::Full(LowerTriangular::new(from_rows(&rows, "cov")?)?)
            }
            CovKind::Diagonal => {
                let v: Vec<f64> = serde_json::from_value(
                    doc.cov.data.ok_or_else(|| GpError::InvalidConfig("Diagonal covariance without data".into()))?,
                )?;
                CovParam::Diagonal(DVector::from_vec(v))
            }
        };
        Ok(ModelState {
            z_mu: from_rows(&doc.z_mu, "Z_mu")?,
            z_sigma: doc.z_sigma.as_deref().map(|r| from_rows(r, "Z_sigma")).transpose()?,
            m_prime: DVector::from_vec(doc.m_prime),
            cov,
            log_sigma_obs: doc.log_sigma_obs,
            kernel: doc.kernel,
        })
    }
}
