//! Training objectives for every regressor, plus the exact-GP and FITC
//! marginal likelihoods that serve as verification oracles.
//!
//! All sparse objectives share one shape: a sum of per-point terms that
//! depend only on `(y_i, μ_f, K̃_ii, a_iᵀS'a_i, σ_obs²)`, scaled by the
//! minibatch factor, minus `β_reg` times a regularizer on the whitened
//! variational parameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::kernels::{kernel_matrix, kernel_matrix_vjp, KernelParams};
use crate::linalg::{cholesky_jitter, kl_whitened, log_normal_pdf, SymMatrix, DEFAULT_JITTER};
use crate::model::{moments_unchecked, CovKind, Features, ModelState, PredictiveMoments};

/// Largest N accepted by the dense O(N³) oracles.
pub const DEFAULT_N_MAX: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SVGP")]
    Svgp,
    #[serde(rename = "MAP")]
    Map,
    GammaRobust,
    #[serde(rename = "VFITC")]
    Vfitc,
    #[serde(rename = "PPGPR_Delta")]
    PpgprDelta,
    #[serde(rename = "PPGPR_MF")]
    PpgprMf,
    #[serde(rename = "PPGPR_Chol")]
    PpgprChol,
    #[serde(rename = "PPGPR_MFD")]
    PpgprMfd,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Svgp,
        Method::Map,
        Method::GammaRobust,
        Method::Vfitc,
        Method::PpgprDelta,
        Method::PpgprMf,
        Method::PpgprChol,
        Method::PpgprMfd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Svgp => "SVGP",
            Method::Map => "MAP",
            Method::GammaRobust => "GammaRobust",
            Method::Vfitc => "VFITC",
            Method::PpgprDelta => "PPGPR_Delta",
            Method::PpgprMf => "PPGPR_MF",
            Method::PpgprChol => "PPGPR_Chol",
            Method::PpgprMfd => "PPGPR_MFD",
        }
    }

    pub fn allowed_cov(self) -> &'static [CovKind] {
        match self {
            Method::Svgp | Method::GammaRobust | Method::Vfitc => &[CovKind::Full, CovKind::Diagonal],
            Method::Map | Method::PpgprDelta => &[CovKind::Delta],
            Method::PpgprMf | Method::PpgprMfd => &[CovKind::Diagonal],
            Method::PpgprChol => &[CovKind::Full],
        }
    }

    pub fn default_cov(self) -> CovKind {
        self.allowed_cov()[0]
    }

    pub fn is_ppgpr(self) -> bool {
        matches!(
            self,
            Method::PpgprDelta | Method::PpgprMf | Method::PpgprChol | Method::PpgprMfd
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GpError::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Which objective to evaluate and with which weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub method: Method,
    pub beta_reg: f64,
    /// Only read by `GammaRobust`.
    pub gamma: f64,
    /// `N / batch size`; multiplies the data and trace sums.
    pub minibatch_scale: f64,
}

impl ObjectiveSpec {
    pub fn new(method: Method) -> Self {
        ObjectiveSpec {
            method,
            beta_reg: 1.0,
            gamma: 1.03,
            minibatch_scale: 1.0,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta_reg = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.minibatch_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta_reg >= 0.0) || !self.beta_reg.is_finite() {
            return Err(GpError::InvalidConfig(format!("beta_reg must be >= 0, got {}", self.beta_reg)));
        }
        if !(self.minibatch_scale > 0.0) {
            return Err(GpError::InvalidConfig(format!(
                "minibatch_scale must be > 0, got {}",
                self.minibatch_scale
            )));
        }
        if self.method == Method::GammaRobust && !(self.gamma > 1.0 && self.gamma <= 1.2) {
            return Err(GpError::InvalidGamma(self.gamma));
        }
        Ok(())
    }
}

/// A borrowed set of training pairs.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
}

impl<'a> Batch<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        assert_eq!(x.nrows(), y.len(), "batch inputs and targets disagree in length");
        Batch { x, y }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Objective value with its parts; the sums are unscaled and the
/// regularizer is unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub total: f64,
    pub data_term: f64,
    pub regularizer: f64,
    pub trace_term: f64,
}

/// One point's contribution and its partial derivatives with respect to
/// `μ_f`, `K̃_ii`, the quadratic form `a_iᵀS'a_i` and `σ_obs²`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointTerm {
    pub data: f64,
    pub trace: f64,
    pub d_mu: f64,
    pub d_kt: f64,
    pub d_quad: f64,
    pub d_s: f64,
}

/// `E_{f ~ N(μ, v)} [N(y | f, s)^g]` in log space, for `g = γ − 1`.
///
/// A power of a Gaussian density is an unnormalized Gaussian, so the
/// expectation is a Gaussian convolution:
/// `(2πs)^{−g/2} (1 + g v / s)^{−1/2} exp(−g r² / (2(s + g v)))`.
pub fn gamma_expected_power_ln(y: f64, mu: f64, v: f64, s: f64, gamma: f64) -> f64 {
    let g = gamma - 1.0;
    let r = y - mu;
    -0.5 * g * (2.0 * PI * s).ln() - 0.5 * (1.0 + g * v / s).ln() - g * r * r / (2.0 * (s + g * v))
}

/// Log of the normalizer correction `(∫ N(y|f,s)^γ dy)^{−(γ−1)/γ}`.
///
/// This is the Hölder normalization of the γ-divergence score, which keeps
/// the score proper; `∫ N^γ = (2πs)^{(1−γ)/2} γ^{−1/2}`.
pub fn gamma_normalizer_ln(s: f64, gamma: f64) -> f64 {
    let g = gamma - 1.0;
    let log_integral = -0.5 * g * (2.0 * PI * s).ln() - 0.5 * gamma.ln();
    -(g / gamma) * log_integral
}

pub fn point_term(spec: &ObjectiveSpec, y: f64, mu: f64, kt: f64, quad: f64, s: f64) -> PointTerm {
    let r = y - mu;
    match spec.method {
        Method::Svgp | Method::Map => {
            let var_f = kt + quad;
            let d_var = -0.5 / s;
            PointTerm {
                data: log_normal_pdf(y, mu, s),
                trace: -var_f / (2.0 * s),
                d_mu: r / s,
                d_kt: d_var,
                d_quad: d_var,
                d_s: -0.5 / s + (r * r + var_f) / (2.0 * s * s),
            }
        }
        Method::Vfitc => {
            let v = kt + s;
            let dv = -0.5 / v + (r * r + quad) / (2.0 * v * v);
            PointTerm {
                data: log_normal_pdf(y, mu, v),
                trace: -0.5 * quad / v,
                d_mu: r / v,
                d_kt: dv,
                d_quad: -0.5 / v,
                d_s: dv,
            }
        }
        Method::PpgprDelta | Method::PpgprMf | Method::PpgprChol | Method::PpgprMfd => {
            let v = s + kt + quad;
            let dv = -0.5 / v + r * r / (2.0 * v * v);
            PointTerm {
                data: log_normal_pdf(y, mu, v),
                trace: 0.0,
                d_mu: r / v,
                d_kt: dv,
                d_quad: dv,
                d_s: dv,
            }
        }
        Method::GammaRobust => {
            let gamma = spec.gamma;
            let g = gamma - 1.0;
            let v = kt + quad;
            let w = s + g * v;
            let ln = gamma_expected_power_ln(y, mu, v, s, gamma) + gamma_normalizer_ln(s, gamma);
            let score = gamma / g * ln.exp();
            let dl_dv = -0.5 * g / w + g * g * r * r / (2.0 * w * w);
            let dl_ds = -0.5 * g / s + 0.5 * g * v / (s * w) + g * r * r / (2.0 * w * w) + g * g / (2.0 * gamma * s);
            PointTerm {
                data: score,
                trace: 0.0,
                d_mu: score * g * r / w,
                d_kt: score * dl_dv,
                d_quad: score * dl_dv,
                d_s: score * dl_ds,
            }
        }
    }
}

/// Unweighted regularizer on the whitened parameters.
pub fn regularizer(state: &ModelState, method: Method) -> f64 {
    match method {
        // −log p(u') up to constants
        Method::Map | Method::PpgprDelta => 0.5 * state.m_prime.norm_squared(),
        // mean branch ½‖m'‖² plus the variance-branch KL over Z_σ, which
        // has exactly the kl_whitened form
        _ => kl_whitened(&state.m_prime, &state.cov),
    }
}

/// Everything computed on the way to an objective value.
pub(crate) struct Forward {
    pub value: ObjectiveValue,
    pub moments: PredictiveMoments,
    pub mean_features: Features,
    pub var_features: Option<Features>,
    pub terms: Vec<PointTerm>,
}

pub(crate) fn forward(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<Forward> {
    spec.validate()?;
    state.check_method(spec.method)?;
    let (moments, mean_features, var_features, quad) = moments_unchecked(state, batch.x)?;
    let ktilde = &var_features.as_ref().unwrap_or(&mean_features).ktilde;
    let s = moments.sigma_obs_sq;
    let terms: Vec<PointTerm> = (0..batch.len())
        .map(|i| point_term(spec, batch.y[i], moments.mu_f[i], ktilde[i], quad[i], s))
        .collect();
    // fixed-order reduction
    let data_term: f64 = terms.iter().map(|t| t.data).sum();
    let trace_term: f64 = terms.iter().map(|t| t.trace).sum();
    let reg = regularizer(state, spec.method);
    let total = spec.minibatch_scale * (data_term + trace_term) - spec.beta_reg * reg;
    Ok(Forward {
        value: ObjectiveValue {
            total,
            data_term,
            regularizer: reg,
            trace_term,
        },
        moments,
        mean_features,
        var_features,
        terms,
    })
}

/// Evaluates the objective selected by `spec.method`.
pub fn evaluate(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    Ok(forward(state, batch, spec)?.value)
}

fn expect_method(spec: &ObjectiveSpec, ok: impl Fn(Method) -> bool, what: &str) -> Result<()> {
    if ok(spec.method) {
        Ok(())
    } else {
        Err(GpError::IncompatibleState {
            method: spec.method.name().into(),
            reason: format!("{what} was requested"),
        })
    }
}

/// Collapsed SVGP bound: `Σ log N(y_i | μ_f, σ_obs²) − σ_f²/(2σ_obs²)` minus
/// `β_reg · KL`.
pub fn svgp_elbo(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    expect_method(spec, |m| m == Method::Svgp, "the SVGP bound")?;
    evaluate(state, batch, spec)
}

/// Point estimate of the whitened inducing values: Gaussian log-likelihood
/// minus the trace correction, plus `β_reg · log p(u')`.
pub fn map_objective(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    expect_method(spec, |m| m == Method::Map, "the MAP objective")?;
    evaluate(state, batch, spec)
}

/// γ-divergence replacement of the expected log-likelihood.
pub fn gamma_robust_objective(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    expect_method(spec, |m| m == Method::GammaRobust, "the gamma-robust objective")?;
    evaluate(state, batch, spec)
}

/// Variational bound on the FITC model.
pub fn vfitc_elbo(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    expect_method(spec, |m| m == Method::Vfitc, "the VFITC bound")?;
    evaluate(state, batch, spec)
}

/// Regularized predictive log-likelihood `Σ log N(y_i | μ_f, σ_obs² + σ_f²)`.
pub fn ppgpr_objective(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<ObjectiveValue> {
    expect_method(spec, Method::is_ppgpr, "a PPGPR objective")?;
    evaluate(state, batch, spec)
}

fn check_size(n: usize, n_max: usize) -> Result<()> {
    if n > n_max {
        return Err(GpError::SizeLimitExceeded { n, limit: n_max });
    }
    if n == 0 {
        return Err(GpError::EmptyDataset);
    }
    Ok(())
}

fn dense_log_density(cov: DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let (l, _) = cholesky_jitter(&SymMatrix::new(cov), DEFAULT_JITTER)?;
    let alpha = l.solve_vec(y, false)?;
    let n = y.len() as f64;
    Ok(-0.5 * alpha.norm_squared() - 0.5 * l.log_det_product() - 0.5 * n * (2.0 * PI).ln())
}

/// `log N(y | 0, Q_NN + diag K̃ + σ_obs² I)` with `Q = K_NM K_MM⁻¹ K_MN`, on
/// the mean-branch inducing set.
pub fn fitc_log_marginal(state: &ModelState, x: &DMatrix<f64>, y: &DVector<f64>, n_max: usize) -> Result<f64> {
    check_size(y.len(), n_max)?;
    let f = Features::compute(&state.kernel, &state.z_mu, x)?;
    let mut cov = &f.a * f.a.transpose();
    let s = state.sigma_obs_sq();
    for i in 0..y.len() {
        cov[(i, i)] += f.ktilde[i] + s;
    }
    dense_log_density(cov, y)
}

/// `log N(y | 0, K_NN + σ_obs² I)`.
pub fn exact_gp_log_marginal(
    kernel: &KernelParams,
    sigma_obs: f64,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_max: usize,
) -> Result<f64> {
    check_size(y.len(), n_max)?;
    let mut k = kernel_matrix(kernel, x, x)?;
    for i in 0..y.len() {
        k[(i, i)] += sigma_obs * sigma_obs;
    }
    dense_log_density(k, y)
}

/// Hyperparameters of an exact GP regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGp {
    pub kernel: KernelParams,
    pub log_sigma_obs: f64,
}

/// Exact log marginal likelihood and its gradient with respect to
/// `[log_lengthscales.., log_outputscale, log_period, log_sigma_obs]`.
pub fn exact_gp_value_and_grad(
    gp: &ExactGp,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_max: usize,
) -> Result<(f64, DVector<f64>)> {
    check_size(y.len(), n_max)?;
    let n = y.len();
    let s = (2.0 * gp.log_sigma_obs).exp();
    let mut k = kernel_matrix(&gp.kernel, x, x)?;
    for i in 0..n {
        k[(i, i)] += s;
    }
    let (l, _) = cholesky_jitter(&SymMatrix::new(k), DEFAULT_JITTER)?;
    let half = l.solve_vec(y, false)?;
    let value = -0.5 * half.norm_squared() - 0.5 * l.log_det_product() - 0.5 * n as f64 * (2.0 * PI).ln();
    let alpha = l.solve_vec(&half, true)?;
    let kinv = l.solve(&l.solve(&DMatrix::identity(n, n), false)?, true)?;
    let adj = (&alpha * alpha.transpose() - kinv) * 0.5;
    let kg = kernel_matrix_vjp(&gp.kernel, x, x, &adj)?;
    let d = gp.kernel.dim();
    let mut grad = DVector::zeros(d + 3);
    grad.rows_mut(0, d).copy_from(&kg.log_lengthscales);
    grad[d] = kg.log_outputscale;
    grad[d + 1] = kg.log_period;
    grad[d + 2] = adj.trace() * 2.0 * s;
    Ok((value, grad))
}

/// Exact posterior predictive moments `(μ_f, σ_f²)` at `xs`.
pub fn exact_gp_predict(
    gp: &ExactGp,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xs: &DMatrix<f64>,
    n_max: usize,
) -> Result<PredictiveMoments> {
    check_size(y.len(), n_max)?;
    let s = (2.0 * gp.log_sigma_obs).exp();
    let mut k = kernel_matrix(&gp.kernel, x, x)?;
    for i in 0..y.len() {
        k[(i, i)] += s;
    }
    let (l, _) = cholesky_jitter(&SymMatrix::new(k), DEFAULT_JITTER)?;
    let ksx = kernel_matrix(&gp.kernel, xs, x)?;
    let alpha = l.solve_vec(&l.solve_vec(y, false)?, true)?;
    let v = l.solve(&ksx.transpose(), false)?;
    let prior = crate::kernels::kernel_diag(&gp.kernel, xs);
    Ok(PredictiveMoments {
        mu_f: &ksx * alpha,
        var_f: DVector::from_fn(xs.nrows(), |i, _| (prior[i] - v.column(i).norm_squared()).max(0.0)),
        sigma_obs_sq: s,
    })
}
