//! Analytic gradients of every objective with respect to every trainable
//! parameter, and a central-difference checker.
//!
//! The backward pass works from per-point adjoints of `(μ_f, K̃_ii, a_iᵀS'a_i)`
//! to the feature rows `A = K_XZ Λ⁻ᵀ`, then through the triangular solve and
//! the Cholesky factor of `K_MM` to the kernel matrices. The jitter added to
//! `K_MM` is treated as a constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{GpError, Result};
use crate::kernels::{kernel_matrix_vjp, KernelFamily};
use crate::linalg::LowerTriangular;
use crate::model::{CovParam, Features, ModelState};
use crate::objectives::{evaluate, forward, Batch, ObjectiveSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    MPrime,
    Cov,
    ZMu,
    ZSigma,
    LogLengthscales,
    LogOutputscale,
    LogPeriod,
    LogSigmaObs,
}

impl SegmentKind {
    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::MPrime => "m_prime",
            SegmentKind::Cov => "cov",
            SegmentKind::ZMu => "Z_mu",
            SegmentKind::ZSigma => "Z_sigma",
            SegmentKind::LogLengthscales => "log_lengthscales",
            SegmentKind::LogOutputscale => "log_outputscale",
            SegmentKind::LogPeriod => "log_period",
            SegmentKind::LogSigmaObs => "log_sigma_obs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub len: usize,
}

/// Flat parameter vector with named segments.
///
/// Full covariance factors are packed as `M` log-diagonal entries followed by
/// the strictly lower entries in row-major order; inducing locations are
/// packed point by point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: DVector<f64>,
    pub segments: Vec<Segment>,
}

impl ParamVector {
    fn layout(state: &ModelState) -> Vec<Segment> {
        let d = state.dim();
        let cov_len = match &state.cov {
            CovParam::Full(l) => l.dim() * (l.dim() + 1) / 2,
            CovParam::Diagonal(v) => v.len(),
            CovParam::Delta => 0,
        };
        let mut lens = vec![
            (SegmentKind::MPrime, state.m_prime.len()),
            (SegmentKind::Cov, cov_len),
            (SegmentKind::ZMu, state.z_mu.len()),
            (SegmentKind::ZSigma, state.z_sigma.as_ref().map_or(0, |z| z.len())),
            (SegmentKind::LogLengthscales, d),
            (SegmentKind::LogOutputscale, 1),
        ];
        if state.kernel.family == KernelFamily::Periodic {
            lens.push((SegmentKind::LogPeriod, 1));
        }
        lens.push((SegmentKind::LogSigmaObs, 1));
        let mut start = 0;
        lens.into_iter()
            .filter(|(_, len)| *len > 0)
            .map(|(kind, len)| {
                let s = Segment { kind, start, len };
                start += len;
                s
            })
            .collect()
    }

    pub fn zeros_like(state: &ModelState) -> Self {
        let segments = Self::layout(state);
        let n = segments.last().map_or(0, |s| s.start + s.len);
        ParamVector {
            values: DVector::zeros(n),
            segments,
        }
    }

    pub fn pack(state: &ModelState) -> Self {
        let mut p = Self::zeros_like(state);
        p.set(SegmentKind::MPrime, state.m_prime.as_slice());
        match &state.cov {
            CovParam::Full(l) => p.set(SegmentKind::Cov, &pack_tril(l.as_matrix(), true)),
            CovParam::Diagonal(v) => p.set(SegmentKind::Cov, v.as_slice()),
            CovParam::Delta => {}
        }
        p.set(SegmentKind::ZMu, &rows_flat(&state.z_mu));
        if let Some(zs) = &state.z_sigma {
            p.set(SegmentKind::ZSigma, &rows_flat(zs));
        }
        p.set(SegmentKind::LogLengthscales, &state.kernel.log_lengthscales);
        p.set(SegmentKind::LogOutputscale, &[state.kernel.log_outputscale]);
        if state.kernel.family == KernelFamily::Periodic {
            p.set(SegmentKind::LogPeriod, &[state.kernel.log_period]);
        }
        p.set(SegmentKind::LogSigmaObs, &[state.log_sigma_obs]);
        p
    }

    /// Rebuilds a state with the structure of `template` and the values of
    /// `self`. Panics if a log-diagonal entry overflows; see `try_unpack`.
    pub fn unpack(&self, template: &ModelState) -> ModelState {
        self.try_unpack(template).expect("exp of log-diagonal is positive and finite")
    }

    /// Like `unpack`, but reports a covariance factor whose exponentiated
    /// diagonal is not a positive finite number.
    pub fn try_unpack(&self, template: &ModelState) -> Result<ModelState> {
        let mut s = template.clone();
        s.m_prime = DVector::from_column_slice(self.get(SegmentKind::MPrime));
        s.cov = match &template.cov {
            CovParam::Full(l) => {
                let m = unpack_tril(self.get(SegmentKind::Cov), l.dim(), true);
                if m.diagonal().iter().any(|d| !d.is_finite()) {
                    return Err(GpError::DimMismatch("covariance factor diagonal overflowed".into()));
                }
                CovParam::Full(LowerTriangular::new(m)?)
            }
            CovParam::Diagonal(_) => CovParam::Diagonal(DVector::from_column_slice(self.get(SegmentKind::Cov))),
            CovParam::Delta => CovParam::Delta,
        };
        s.z_mu = flat_rows(self.get(SegmentKind::ZMu), template.z_mu.nrows(), template.dim());
        if let Some(zs) = &template.z_sigma {
            s.z_sigma = Some(flat_rows(self.get(SegmentKind::ZSigma), zs.nrows(), template.dim()));
        }
        s.kernel.log_lengthscales = self.get(SegmentKind::LogLengthscales).to_vec();
        s.kernel.log_outputscale = self.get(SegmentKind::LogOutputscale)[0];
        if template.kernel.family == KernelFamily::Periodic {
            s.kernel.log_period = self.get(SegmentKind::LogPeriod)[0];
        }
        s.log_sigma_obs = self.get(SegmentKind::LogSigmaObs)[0];
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, kind: SegmentKind) -> Option<&Segment> {
        self.segments.iter().find(|s| s.kind == kind)
    }

    /// Values of a segment; empty when the segment is absent.
    pub fn get(&self, kind: SegmentKind) -> &[f64] {
        match self.segment(kind) {
            Some(s) => &self.values.as_slice()[s.start..s.start + s.len],
            None => &[],
        }
    }

    pub fn get_mut(&mut self, kind: SegmentKind) -> &mut [f64] {
        match self.segment(kind).copied() {
            Some(s) => &mut self.values.as_mut_slice()[s.start..s.start + s.len],
            None => &mut [],
        }
    }

    fn set(&mut self, kind: SegmentKind, v: &[f64]) {
        self.get_mut(kind).copy_from_slice(v);
    }

    fn add(&mut self, kind: SegmentKind, v: &[f64]) {
        for (a, b) in self.get_mut(kind).iter_mut().zip(v) {
            *a += b;
        }
    }
}

fn rows_flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn flat_rows(v: &[f64], n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, d, v)
}

/// Packs a lower-triangular matrix: diagonal first (as logs when
/// `log_diag`), then strictly lower entries row by row.
fn pack_tril(m: &DMatrix<f64>, log_diag: bool) -> Vec<f64> {
    let n = m.nrows();
    let mut out: Vec<f64> = (0..n)
        .map(|i| if log_diag { m[(i, i)].ln() } else { m[(i, i)] })
        .collect();
    for i in 0..n {
        for j in 0..i {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn unpack_tril(v: &[f64], n: usize, log_diag: bool) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = if log_diag { v[i].exp() } else { v[i] };
    }
    let mut k = n;
    for i in 0..n {
        for j in 0..i {
            m[(i, j)] = v[k];
            k += 1;
        }
    }
    m
}

/// Adjoints flowing out of one inducing set.
struct BranchGrad {
    z: DMatrix<f64>,
    log_lengthscales: DVector<f64>,
    log_outputscale: f64,
    log_period: f64,
}

/// Pulls `Ā = ∂f/∂A` back through `A = K_XZ Λ⁻ᵀ` and `Λ Λᵀ = K_ZZ + jI`.
fn branch_backward(
    state: &ModelState,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    feats: &Features,
    a_bar: &DMatrix<f64>,
) -> Result<BranchGrad> {
    let chol = &feats.chol;
    let lam = chol.as_matrix();
    let m = chol.dim();
    // W = Λ⁻ᵀ Āᵀ, so ∂f/∂K_XZ = Wᵀ and ∂f/∂Λ = −tril(W A)
    let w = chol.solve(&a_bar.transpose(), true)?;
    let kxz_bar = w.transpose();
    let lam_bar = -(&w * &feats.a).lower_triangle();
    // symmetric Cholesky adjoint: K̄ = Λ⁻ᵀ sym(Φ(Λᵀ Λ̄)) Λ⁻¹
    let mut p = (lam.transpose() * lam_bar).lower_triangle();
    for i in 0..m {
        p[(i, i)] *= 0.5;
    }
    let p_sym = (&p + p.transpose()) * 0.5;
    let left = chol.solve(&p_sym, true)?;
    let kzz_bar = chol.solve(&left.transpose(), true)?.transpose();

    let g1 = kernel_matrix_vjp(&state.kernel, x, z, &kxz_bar)?;
    let g2 = kernel_matrix_vjp(&state.kernel, z, z, &kzz_bar)?;
    Ok(BranchGrad {
        z: g1.z + g2.x + g2.z,
        log_lengthscales: g1.log_lengthscales + g2.log_lengthscales,
        log_outputscale: g1.log_outputscale + g2.log_outputscale,
        log_period: g1.log_period + g2.log_period,
    })
}

/// Objective value and its gradient with respect to every segment of the
/// packed parameters.
pub fn objective_and_gradient(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec) -> Result<(f64, ParamVector)> {
    let fwd = forward(state, batch, spec)?;
    let n = batch.len();
    let scale = spec.minibatch_scale;
    let beta = spec.beta_reg;
    let s = fwd.moments.sigma_obs_sq;
    let fm = &fwd.mean_features;
    let fv = fwd.var_features.as_ref().unwrap_or(fm);

    let g_mu = DVector::from_fn(n, |i, _| scale * fwd.terms[i].d_mu);
    let g_kt = DVector::from_fn(n, |i, _| if fv.clamped[i] { 0.0 } else { scale * fwd.terms[i].d_kt });
    let g_q = DVector::from_fn(n, |i, _| scale * fwd.terms[i].d_quad);
    let g_s: f64 = scale * fwd.terms.iter().map(|t| t.d_s).sum::<f64>();

    let mut grad = ParamVector::zeros_like(state);

    // mean vector; every regularizer contributes ½‖m'‖²
    let gm = fm.a.transpose() * &g_mu - &state.m_prime * beta;
    grad.set(SegmentKind::MPrime, gm.as_slice());

    // covariance parameters and the variance-branch feature adjoint
    let mut a_bar_var = DMatrix::zeros(n, fv.a.ncols());
    for i in 0..n {
        let row = fv.a.row(i) * (-2.0 * g_kt[i]);
        a_bar_var.row_mut(i).copy_from(&row);
    }
    match &state.cov {
        CovParam::Delta => {}
        CovParam::Full(l) => {
            let lm = l.as_matrix();
            let sp = l.reconstruct();
            let mut ga = fv.a.clone();
            for i in 0..n {
                ga.row_mut(i).scale_mut(g_q[i]);
            }
            a_bar_var += &ga * &sp * 2.0;
            // ∂/∂L' of Σ g_q,i ‖L'ᵀ a_i‖² = 2 Aᵀ diag(g_q) A L'
            let l_bar = (fv.a.transpose() * &ga * lm * 2.0).lower_triangle();
            let dim = l.dim();
            let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
            for i in 0..dim {
                // log-diagonal: chain rule through exp, regularizer ½L²−log L
                packed.push(l_bar[(i, i)] * lm[(i, i)] - beta * (lm[(i, i)] * lm[(i, i)] - 1.0));
            }
            for i in 0..dim {
                for j in 0..i {
                    packed.push(l_bar[(i, j)] - beta * lm[(i, j)]);
                }
            }
            grad.set(SegmentKind::Cov, &packed);
        }
        CovParam::Diagonal(v) => {
            let var = v.map(|x| (2.0 * x).exp());
            let mut gv = DVector::<f64>::zeros(v.len());
            for i in 0..n {
                for j in 0..v.len() {
                    let a = fv.a[(i, j)];
                    gv[j] += g_q[i] * a * a;
                    a_bar_var[(i, j)] += 2.0 * g_q[i] * var[j] * a;
                }
            }
            let packed: Vec<f64> = (0..v.len())
                .map(|j| 2.0 * var[j] * gv[j] - beta * (var[j] - 1.0))
                .collect();
            grad.set(SegmentKind::Cov, &packed);
        }
    }

    let a_bar_mean = &g_mu * state.m_prime.transpose();
    let mut kern_ls = DVector::zeros(state.dim());
    let mut kern_os = 0.0;
    let mut kern_per = 0.0;
    // k(x_i, x_i) = σ_k² enters K̃ directly
    kern_os += g_kt.sum() * state.kernel.outputscale();

    match (&state.z_sigma, &fwd.var_features) {
        (Some(zs), Some(fvar)) => {
            let gm_b = branch_backward(state, batch.x, &state.z_mu, fm, &a_bar_mean)?;
            let gv_b = branch_backward(state, batch.x, zs, fvar, &a_bar_var)?;
            grad.set(SegmentKind::ZMu, &rows_flat(&gm_b.z));
            grad.set(SegmentKind::ZSigma, &rows_flat(&gv_b.z));
            for b in [gm_b, gv_b] {
                kern_ls += b.log_lengthscales;
                kern_os += b.log_outputscale;
                kern_per += b.log_period;
            }
        }
        _ => {
            let b = branch_backward(state, batch.x, &state.z_mu, fm, &(a_bar_mean + a_bar_var))?;
            grad.set(SegmentKind::ZMu, &rows_flat(&b.z));
            kern_ls += b.log_lengthscales;
            kern_os += b.log_outputscale;
            kern_per += b.log_period;
        }
    }
    grad.set(SegmentKind::LogLengthscales, kern_ls.as_slice());
    grad.set(SegmentKind::LogOutputscale, &[kern_os]);
    grad.add(SegmentKind::LogPeriod, &[kern_per]);
    grad.set(SegmentKind::LogSigmaObs, &[g_s * 2.0 * s]);
    Ok((fwd.value.total, grad))
}

/// Per-segment maximum relative error between two gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub segments: Vec<(SegmentKind, f64)>,
}

impl FdReport {
    pub fn max_error(&self) -> f64 {
        self.segments.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_error() < threshold
    }

    pub fn error(&self, kind: SegmentKind) -> Option<f64> {
        self.segments.iter().find(|(k, _)| *k == kind).map(|(_, e)| *e)
    }
}

/// Relative error `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares two gradients segment by segment.
pub fn compare_gradients(analytic: &ParamVector, numeric: &ParamVector) -> FdReport {
    let segments = analytic
        .segments
        .iter()
        .map(|seg| {
            let err = analytic
                .get(seg.kind)
                .iter()
                .zip(numeric.get(seg.kind))
                .map(|(a, b)| relative_error(*a, *b))
                .fold(0.0, f64::max);
            (seg.kind, err)
        })
        .collect();
    FdReport { segments }
}

/// Central differences of `f` around `params`.
pub fn numeric_gradient<F>(params: &ParamVector, h: f64, mut f: F) -> Result<ParamVector>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut out = params.clone();
    let mut probe = params.clone();
    for k in 0..params.len() {
        let x0 = params.values[k];
        probe.values[k] = x0 + h;
        let fp = f(&probe)?;
        probe.values[k] = x0 - h;
        let fm = f(&probe)?;
        probe.values[k] = x0;
        out.values[k] = (fp - fm) / (2.0 * h);
    }
    Ok(out)
}

/// Checks [`objective_and_gradient`] against central differences of the
/// objective with step `h`.
pub fn finite_diff_check(state: &ModelState, batch: Batch<'_>, spec: &ObjectiveSpec, h: f64) -> Result<FdReport> {
    let (_, analytic) = objective_and_gradient(state, batch, spec)?;
    let packed = ParamVector::pack(state);
    let numeric = numeric_gradient(&packed, h, |p| Ok(evaluate(&p.unpack(state), batch, spec)?.total))?;
    Ok(compare_gradients(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelParams;
    use crate::objectives::Method;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn random_state(rng: &mut ChaCha8Rng, method: Method, m: usize, d: usize, family: KernelFamily) -> ModelState {
        let z = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.5..1.5));
        let cov = match method.default_cov() {
            crate::model::CovKind::Full => {
                let mut l = DMatrix::from_fn(m, m, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal)).lower_triangle();
                for i in 0..m {
                    l[(i, i)] = rng.random_range(0.3..1.0);
                }
                CovParam::Full(LowerTriangular::new(l).unwrap())
            }
            crate::model::CovKind::Diagonal => CovParam::Diagonal(DVector::from_fn(m, |_, _| rng.random_range(-1.0..0.0))),
            crate::model::CovKind::Delta => CovParam::Delta,
        };
        let z_sigma = (method == Method::PpgprMfd).then(|| DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.5..1.5)));
        ModelState {
            z_mu: z,
            z_sigma,
            m_prime: DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)),
            cov,
            log_sigma_obs: rng.random_range(-1.0..0.0),
            kernel: KernelParams {
                family,
                log_lengthscales: (0..d).map(|_| rng.random_range(-0.3..0.5)).collect(),
                log_outputscale: rng.random_range(-0.3..0.3),
                log_period: rng.random_range(0.0..0.5),
            },
        }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for method in Method::ALL {
            let s = random_state(&mut rng, method, 4, 2, KernelFamily::Periodic);
            let p = ParamVector::pack(&s);
            let back = p.unpack(&s);
            assert!((ParamVector::pack(&back).values - &p.values).amax() < 1e-14);
            let total: usize = p.segments.iter().map(|s| s.len).sum();
            assert_eq!(total, p.len());
        }
    }

    #[test]
    fn value_matches_objective_module() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(10, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(10, |_, _| rng.sample::<f64, _>(StandardNormal));
        for method in Method::ALL {
            let s = random_state(&mut rng, method, 3, 2, KernelFamily::Matern52);
            let spec = ObjectiveSpec::new(method).with_beta(0.7);
            let (v, _) = objective_and_gradient(&s, Batch::new(&x, &y), &spec).unwrap();
            let e = evaluate(&s, Batch::new(&x, &y), &spec).unwrap().total;
            assert!((v - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn quadratic_objective_fd_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, Method::Svgp, 3, 2, KernelFamily::Rbf);
        let p = ParamVector::pack(&s);
        // central differences are exact for a quadratic; a coarse dyadic step
        // keeps round-off negligible
        let numeric = numeric_gradient(&p, 0.25, |q| Ok(0.5 * q.values.norm_squared())).unwrap();
        let report = compare_gradients(&p, &numeric);
        assert!(report.max_error() < 1e-10, "{report:?}");
    }

    #[test]
    fn sign_flip_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(16, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(16, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = random_state(&mut rng, Method::PpgprChol, 3, 1, KernelFamily::Matern52);
        let spec = ObjectiveSpec::new(Method::PpgprChol);
        let (_, mut analytic) = objective_and_gradient(&s, Batch::new(&x, &y), &spec).unwrap();
        analytic.get_mut(SegmentKind::LogLengthscales).iter_mut().for_each(|g| *g = -*g);
        let p = ParamVector::pack(&s);
        let numeric = numeric_gradient(&p, 1e-5, |q| Ok(evaluate(&q.unpack(&s), Batch::new(&x, &y), &spec)?.total)).unwrap();
        let report = compare_gradients(&analytic, &numeric);
        let e = report.error(SegmentKind::LogLengthscales).unwrap();
        assert!((e - 2.0).abs() < 1e-4, "{e}");
        assert!(report.error(SegmentKind::MPrime).unwrap() < 1e-4);
    }

    #[test]
    fn zero_beta_leaves_cov_gradient_to_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(8, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = random_state(&mut rng, Method::PpgprMf, 3, 1, KernelFamily::Matern52);
        let spec0 = ObjectiveSpec::new(Method::PpgprMf).with_beta(0.0);
        let spec1 = spec0.with_beta(1.0);
        let (_, g0) = objective_and_gradient(&s, Batch::new(&x, &y), &spec0).unwrap();
        let (_, g1) = objective_and_gradient(&s, Batch::new(&x, &y), &spec1).unwrap();
        // the difference is exactly the regularizer gradient
        let CovParam::Diagonal(v) = &s.cov else { unreachable!() };
        for (j, (a, b)) in g0.get(SegmentKind::Cov).iter().zip(g1.get(SegmentKind::Cov)).enumerate() {
            let reg = (2.0 * v[j]).exp() - 1.0;
            assert!((a - b - reg).abs() < 1e-12);
        }
        // with no data at all the β = 0 gradient vanishes
        let ex = DMatrix::zeros(0, 1);
        let ey = DVector::zeros(0);
        let (_, g) = objective_and_gradient(&s, Batch::new(&ex, &ey), &spec0).unwrap();
        assert!(g.get(SegmentKind::Cov).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn stationary_residual_component() {
        // at y = μ_f the PPGPR mean adjoint vanishes and the variance adjoint
        // is −1/(2σ²_tot)
        let spec = ObjectiveSpec::new(Method::PpgprChol);
        let t = crate::objectives::point_term(&spec, 0.4, 0.4, 0.3, 0.2, 0.5);
        assert_eq!(t.d_mu, 0.0);
        assert!((t.d_quad + 0.5 / 1.0).abs() < 1e-15);
    }

    #[test]
    fn all_methods_pass_fd_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for family in [KernelFamily::Matern52, KernelFamily::Rbf, KernelFamily::Periodic] {
            for method in Method::ALL {
                let x = DMatrix::from_fn(32, 2, |_, _| rng.random_range(-2.0..2.0));
                let y = DVector::from_fn(32, |_, _| rng.sample::<f64, _>(StandardNormal));
                let s = random_state(&mut rng, method, 4, 2, family);
                let spec = ObjectiveSpec::new(method).with_beta(0.5).with_gamma(1.05).with_scale(2.0);
                let r = finite_diff_check(&s, Batch::new(&x, &y), &spec, 1e-5).unwrap();
                assert!(r.passes(1e-4), "{method} {family:?}: {r:?}");
            }
        }
    }

    #[test]
    fn gradients_are_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DMatrix::from_fn(20, 2, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = random_state(&mut rng, Method::PpgprMfd, 5, 2, KernelFamily::Matern52);
        let spec = ObjectiveSpec::new(Method::PpgprMfd);
        let a = objective_and_gradient(&s, Batch::new(&x, &y), &spec).unwrap();
        let b = objective_and_gradient(&s, Batch::new(&x, &y), &spec).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert!(a.1.values.iter().zip(b.1.values.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn fd_consistent_through_jitter() {
        // a dense grid under a long lengthscale is numerically rank deficient,
        // so every nearby state factorizes at the same positive jitter
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(20, 1, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(20, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut s = random_state(&mut rng, Method::PpgprMf, 40, 1, KernelFamily::Rbf);
        s.z_mu = DMatrix::from_fn(40, 1, |i, _| -1.0 + 2.0 * i as f64 / 39.0);
        s.kernel.log_lengthscales = vec![1.0];
        let f = Features::compute(&s.kernel, &s.z_mu, &x).unwrap();
        assert!(f.jitter > 0.0);
        let spec = ObjectiveSpec::new(Method::PpgprMf);
        let r = finite_diff_check(&s, Batch::new(&x, &y), &spec, 1e-5).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }
}
