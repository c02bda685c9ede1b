//! Minibatch Adam training, k-means++ inducing-point initialization and
//! checkpointing.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpError, Result};
use crate::grad::{objective_and_gradient, ParamVector};
use crate::kernels::KernelFamily;
use crate::model::{init_state, ModelState};
use crate::objectives::{evaluate, exact_gp_value_and_grad, Batch, ExactGp, ObjectiveSpec, DEFAULT_N_MAX};

pub const KMEANS_ITERS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    /// Epochs (0-based) at whose start the learning rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    #[serde(rename = "M")]
    pub num_inducing: usize,
    pub kernel: KernelFamily,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::new(100, 256, 64)
    }
}

impl TrainConfig {
    /// Defaults with learning-rate decays at 50% and 75% of training.
    pub fn new(epochs: usize, batch_size: usize, num_inducing: usize) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            lr_initial: 0.01,
            lr_decay_epochs: vec![epochs / 2, epochs * 3 / 4],
            lr_decay_factor: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            num_inducing,
            kernel: KernelFamily::Matern52,
            checkpoint_every: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr_initial = lr;
        self
    }

    pub fn with_kernel(mut self, family: KernelFamily) -> Self {
        self.kernel = family;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(GpError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || self.batch_size > n {
            return bad(format!("batch_size must be in 1..={n}, got {}", self.batch_size));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad(format!("lr_decay_factor must be in (0, 1), got {}", self.lr_decay_factor));
        }
        if !(self.lr_initial >= 0.0) || !self.lr_initial.is_finite() {
            return bad(format!("lr_initial must be finite and non-negative, got {}", self.lr_initial));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam_beta1 and adam_beta2 must be in [0, 1)".into());
        }
        if self.num_inducing == 0 || self.num_inducing > n {
            return bad(format!("M must be in 1..={n}, got {}", self.num_inducing));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr_initial * self.lr_decay_factor.powi(k as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DVector<f64>,
    pub v: DVector<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            m: DVector::zeros(len),
            v: DVector::zeros(len),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, 0.9, 0.999, 1e-8)
    }
}

/// One bias-corrected Adam ascent step, in place.
pub fn adam_step(adam: &mut AdamState, params: &mut DVector<f64>, grad: &DVector<f64>, lr: f64) -> Result<()> {
    if params.len() != grad.len() {
        return Err(GpError::LengthMismatch { expected: params.len(), got: grad.len() });
    }
    if adam.m.len() != params.len() {
        return Err(GpError::LengthMismatch { expected: adam.m.len(), got: params.len() });
    }
    adam.t += 1;
    let (b1, b2) = (adam.beta1, adam.beta2);
    let c1 = 1.0 - b1.powi(adam.t as i32);
    let c2 = 1.0 - b2.powi(adam.t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
        let mhat = adam.m[i] / c1;
        let vhat = adam.v[i] / c2;
        params[i] += lr * mhat / (vhat.sqrt() + adam.eps);
    }
    Ok(())
}

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i).iter().zip(c.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Lloyd's algorithm with k-means++ seeding. Deterministic under `seed`.
///
/// # Panics
/// If `k == 0` or `k > n`.
pub fn kmeans(x: &DMatrix<f64>, k: usize, seed: u64, iters: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let d = x.ncols();
    assert!(k >= 1 && k <= n, "k must be in 1..={n}, got {k}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = DMatrix::zeros(k, d);

    // k-means++ seeding
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&x.row(first));
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if w > 0.0 && u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            // rounding can land on a zero-weight tail entry
            if dist[idx] == 0.0 {
                idx = dist.iter().rposition(|&w| w > 0.0).unwrap_or(idx);
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&x.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(x, i, &centers, c));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        let mut best_d = vec![0.0; n];
        for i in 0..n {
            let (mut bj, mut bd) = (0, f64::INFINITY);
            for j in 0..k {
                let dd = sq_dist(x, i, &centers, j);
                if dd < bd {
                    bj = j;
                    bd = dd;
                }
            }
            assign[i] = bj;
            best_d[i] = bd;
        }
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let mut row = sums.row_mut(assign[i]);
            row += x.row(i);
            counts[assign[i]] += 1;
        }
        let mut moved = false;
        let mut taken = vec![false; n];
        for j in 0..k {
            let new = if counts[j] > 0 {
                sums.row(j) / counts[j] as f64
            } else {
                // re-seed an empty cluster at the farthest remaining point
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| best_d[a].total_cmp(&best_d[b]))
                    .unwrap_or(0);
                taken[far] = true;
                best_d[far] = 0.0;
                x.row(far).into_owned()
            };
            if new != centers.row(j) {
                moved = true;
                centers.row_mut(j).copy_from(&new);
            }
        }
        if !moved {
            break;
        }
    }
    centers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Full-data objective at the end of the epoch, unit minibatch scale.
    pub objective: f64,
    /// Mean wall-clock milliseconds per gradient step during the epoch.
    pub step_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Wall-clock milliseconds of every gradient step.
    pub step_ms: Vec<f64>,
}

impl History {
    pub fn objectives(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.objective).collect()
    }

    pub fn median_step_ms(&self) -> f64 {
        median(&self.step_ms)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = s.len() / 2;
    if s.len() % 2 == 1 {
        s[h]
    } else {
        0.5 * (s[h - 1] + s[h])
    }
}

/// Initializes a state and trains it.
pub fn train(data: Batch<'_>, spec: &ObjectiveSpec, cfg: &TrainConfig) -> Result<(ModelState, History)> {
    cfg.validate(data.len())?;
    let state = init_state(data.x, data.y, cfg.num_inducing, spec, cfg.kernel, cfg.seed)?;
    train_from(state, data, spec, cfg, None)
}

/// Trains `state` in place of a fresh initialization, optionally writing
/// `epoch_XXXX.json` checkpoints into `checkpoint_dir`.
pub fn train_from(
    state: ModelState,
    data: Batch<'_>,
    spec: &ObjectiveSpec,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(ModelState, History)> {
    let n = data.len();
    cfg.validate(n)?;
    spec.validate()?;
    state.check_method(spec.method)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_7a11);
    let mut params = ParamVector::pack(&state);
    let mut adam = AdamState::new(params.len(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..n).collect();
    let d = data.x.ncols();
    let mut current = state;
    let full_spec = ObjectiveSpec { minibatch_scale: 1.0, ..*spec };

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_ms = Vec::new();
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let t0 = Instant::now();
            let bx = DMatrix::from_fn(chunk.len(), d, |r, c| data.x[(chunk[r], c)]);
            let by = DVector::from_fn(chunk.len(), |r, _| data.y[chunk[r]]);
            let step_spec = ObjectiveSpec {
                minibatch_scale: n as f64 / chunk.len() as f64,
                ..*spec
            };
            let (value, grad) = objective_and_gradient(&current, Batch::new(&bx, &by), &step_spec)?;
            if !value.is_finite() || grad.values.iter().any(|g| !g.is_finite()) {
                log::error!("non-finite objective {value} at epoch {epoch}, step {step}");
                return Err(GpError::NonFinite { epoch, step, value });
            }
            adam_step(&mut adam, &mut params.values, &grad.values, lr)?;
            current = match params.try_unpack(&current) {
                Ok(s) if params.values.iter().all(|v| v.is_finite()) => s,
                _ => {
                    log::error!("parameters left the representable range at epoch {epoch}, step {step}");
                    return Err(GpError::NonFinite { epoch, step, value: f64::NAN });
                }
            };
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            epoch_ms.push(ms);
            history.step_ms.push(ms);
        }
        let objective = evaluate(&current, data, &full_spec)?.total;
        if !objective.is_finite() {
            return Err(GpError::NonFinite { epoch, step: usize::MAX, value: objective });
        }
        log::debug!("epoch {epoch}: objective {objective:.6}, lr {lr}");
        history.epochs.push(EpochRecord {
            epoch,
            objective,
            step_ms: epoch_ms.iter().sum::<f64>() / epoch_ms.len() as f64,
        });
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                current.save(&dir.join(format!("epoch_{:04}.json", epoch + 1)))?;
            }
        }
    }
    Ok((current, history))
}

/// Fits exact-GP hyperparameters by full-batch Adam on the log marginal
/// likelihood, starting from `init`. Returns the fit and the objective
/// trace.
pub fn train_exact_gp(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: ExactGp,
    steps: usize,
    lr: f64,
) -> Result<(ExactGp, Vec<f64>)> {
    let mut gp = init;
    let d = x.ncols();
    let periodic = gp.kernel.family == KernelFamily::Periodic;
    let mut theta = DVector::from_iterator(
        d + 3,
        gp.kernel
            .log_lengthscales
            .iter()
            .copied()
            .chain([gp.kernel.log_outputscale, gp.kernel.log_period, gp.log_sigma_obs]),
    );
    let mut adam = AdamState::with_defaults(d + 3);
    let mut trace = Vec::with_capacity(steps);
    for step in 0..steps {
        let (value, mut grad) = exact_gp_value_and_grad(&gp, x, y, DEFAULT_N_MAX)?;
        if !value.is_finite() {
            return Err(GpError::NonFinite { epoch: 0, step, value });
        }
        if !periodic {
            grad[d + 1] = 0.0;
        }
        trace.push(value);
        adam_step(&mut adam, &mut theta, &grad, lr)?;
        gp.kernel.log_lengthscales = theta.rows(0, d).iter().copied().collect();
        gp.kernel.log_outputscale = theta[d];
        gp.kernel.log_period = theta[d + 1];
        gp.log_sigma_obs = theta[d + 2];
    }
    Ok((gp, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelParams;
    use crate::objectives::Method;
    use rand_distr::StandardNormal;

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut adam = AdamState::with_defaults(3);
        let mut p = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        adam_step(&mut adam, &mut p, &DVector::zeros(3), 0.1).unwrap();
        assert_eq!(p, DVector::from_vec(vec![1.0, -2.0, 3.0]));
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        for g in [3.7, -0.02, 1e3] {
            let mut adam = AdamState::with_defaults(1);
            let mut p = DVector::from_element(1, 0.0);
            adam_step(&mut adam, &mut p, &DVector::from_element(1, g), 0.01).unwrap();
            assert!((p[0] - 0.01 * g.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn adam_degenerate_is_sign_sgd() {
        let mut adam = AdamState::new(1, 0.0, 0.0, 1e-8);
        let mut p = DVector::from_element(1, 0.0);
        let g = DVector::from_element(1, 0.5);
        adam_step(&mut adam, &mut p, &g, 0.1).unwrap();
        let one = 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - one).abs() < 1e-15);
        adam_step(&mut adam, &mut p, &g, 0.1).unwrap();
        assert!((p[0] - 2.0 * one).abs() < 1e-15);
    }

    #[test]
    fn adam_length_mismatch() {
        let mut adam = AdamState::with_defaults(2);
        let mut p = DVector::zeros(2);
        assert!(matches!(
            adam_step(&mut adam, &mut p, &DVector::zeros(3), 0.1),
            Err(GpError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kmeans_two_blobs() {
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
        for seed in 0..10 {
            let c = kmeans(&x, 2, seed, KMEANS_ITERS);
            let mut v: Vec<f64> = c.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            assert!((v[0] - 0.05).abs() < 1e-12 && (v[1] - 10.05).abs() < 1e-12, "{v:?}");
        }
    }

    #[test]
    fn kmeans_single_center_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(50, 3, |_, _| rng.random::<f64>());
        let c = kmeans(&x, 1, 9, KMEANS_ITERS);
        let mean = x.row_mean();
        assert!((c.row(0) - mean).amax() < 1e-12);
    }

    #[test]
    fn kmeans_k_equals_n_recovers_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(12, 2, |_, _| rng.random::<f64>());
        let c = kmeans(&x, 12, 4, KMEANS_ITERS);
        for i in 0..12 {
            assert!((0..12).any(|j| (c.row(j) - x.row(i)).amax() == 0.0));
        }
    }

    #[test]
    fn kmeans_deterministic_and_handles_duplicates() {
        let x = DMatrix::from_column_slice(6, 1, &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
        let a = kmeans(&x, 3, 5, KMEANS_ITERS);
        assert_eq!(a, kmeans(&x, 3, 5, KMEANS_ITERS));
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn lr_schedule_exact() {
        let cfg = TrainConfig::new(100, 10, 4);
        assert_eq!(cfg.lr_decay_epochs, vec![50, 75]);
        assert_eq!(cfg.lr_at(0), 0.01);
        assert_eq!(cfg.lr_at(49), 0.01);
        assert_eq!(cfg.lr_at(50), 0.01 * 0.1f64.powi(1));
        assert_eq!(cfg.lr_at(75), 0.01 * 0.1f64.powi(2));
        assert_eq!(cfg.lr_at(99), 0.01 * 0.1f64.powi(2));
    }

    fn sine(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
        let y = DVector::from_fn(n, |i, _| x[(i, 0)].sin() + 0.1 * rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn zero_lr_keeps_initial_state() {
        let (x, y) = sine(40, 1);
        let spec = ObjectiveSpec::new(Method::Svgp);
        let cfg = TrainConfig::new(3, 10, 5).with_lr(0.0).with_seed(3);
        let (s, h) = train(Batch::new(&x, &y), &spec, &cfg).unwrap();
        let init = init_state(&x, &y, 5, &spec, cfg.kernel, 3).unwrap();
        assert_eq!(s, init);
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.step_ms.len(), 12);
    }

    #[test]
    fn sine_svgp_objective_climbs() {
        let (x, y) = sine(200, 2);
        let spec = ObjectiveSpec::new(Method::Svgp);
        let cfg = TrainConfig::new(100, 50, 16).with_seed(1);
        let (_, h) = train(Batch::new(&x, &y), &spec, &cfg).unwrap();
        let obj = h.objectives();
        let windows: Vec<bool> = obj.windows(5).map(|w| w[4] >= w[0]).collect();
        let frac = windows.iter().filter(|b| **b).count() as f64 / windows.len() as f64;
        assert!(frac >= 0.9, "{frac}");
        assert!(obj[99] > obj[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = sine(60, 3);
        for method in [Method::PpgprMfd, Method::GammaRobust] {
            let spec = ObjectiveSpec::new(method);
            let cfg = TrainConfig::new(5, 16, 6).with_seed(11);
            let (s1, h1) = train(Batch::new(&x, &y), &spec, &cfg).unwrap();
            let (s2, h2) = train(Batch::new(&x, &y), &spec, &cfg).unwrap();
            assert_eq!(s1, s2);
            let b1: Vec<u64> = h1.objectives().iter().map(|v| v.to_bits()).collect();
            let b2: Vec<u64> = h2.objectives().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn epoch_shuffle_covers_every_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut order: Vec<usize> = (0..23).collect();
        for _ in 0..5 {
            order.shuffle(&mut rng);
            let mut seen = vec![0; 23];
            for chunk in order.chunks(5) {
                for &i in chunk {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }

    #[test]
    fn checkpoints_and_history_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = sine(30, 4);
        let spec = ObjectiveSpec::new(Method::PpgprDelta);
        let mut cfg = TrainConfig::new(4, 10, 4);
        cfg.checkpoint_every = 2;
        let s0 = init_state(&x, &y, 4, &spec, cfg.kernel, 0).unwrap();
        let (s, h) = train_from(s0, Batch::new(&x, &y), &spec, &cfg, Some(dir.path())).unwrap();
        assert!(dir.path().join("epoch_0002.json").exists());
        let last = ModelState::load(&dir.path().join("epoch_0004.json")).unwrap();
        assert_eq!(last, s);
        let csv_path = dir.path().join("history.csv");
        h.write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert!(text.starts_with("epoch,objective,step_ms"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn invalid_config_rejected() {
        let (x, y) = sine(10, 5);
        let spec = ObjectiveSpec::new(Method::Svgp);
        let mut cfg = TrainConfig::new(1, 20, 3);
        assert!(train(Batch::new(&x, &y), &spec, &cfg).is_err());
        cfg.batch_size = 5;
        cfg.lr_decay_factor = 1.0;
        assert!(train(Batch::new(&x, &y), &spec, &cfg).is_err());
    }

    #[test]
    fn divergent_learning_rate_is_reported_not_panicked() {
        let (x, y) = sine(40, 7);
        for method in [Method::Svgp, Method::PpgprChol, Method::PpgprMf] {
            let spec = ObjectiveSpec::new(method);
            let cfg = TrainConfig::new(20, 10, 5).with_lr(1e8);
            assert!(matches!(
                train(Batch::new(&x, &y), &spec, &cfg),
                Err(GpError::NonFinite { .. }) | Err(GpError::FactorizationFailed { .. })
            ));
        }
    }

    #[test]
    fn exact_gp_training_increases_evidence() {
        let (x, y) = sine(40, 6);
        let init = ExactGp {
            kernel: KernelParams::unit(KernelFamily::Rbf, 1),
            log_sigma_obs: 0.0,
        };
        let (_, trace) = train_exact_gp(&x, &y, init, 100, 0.05).unwrap();
        assert!(trace[99] > trace[0]);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
