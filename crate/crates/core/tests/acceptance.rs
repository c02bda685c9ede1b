//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pgpr_core::data::{gen_heteroscedastic, gen_prior_draw, standardize_and_split, SplitSpec};
use pgpr_core::grad::finite_diff_check;
use pgpr_core::kernels::kernel_matrix;
use pgpr_core::linalg::{cholesky_jitter, kl_mvn, log_normal_pdf, LowerTriangular, SymMatrix, DEFAULT_JITTER};
use pgpr_core::metrics::{crps_point, normal_cdf, noise_fraction, nll, rmse, zscore_ecdf, linspace};
use pgpr_core::model::{init_state, predictive_moments};
use pgpr_core::objectives::{
    evaluate, exact_gp_log_marginal, exact_gp_predict, fitc_log_marginal, svgp_elbo, vfitc_elbo, ExactGp,
    DEFAULT_N_MAX,
};
use pgpr_core::trainer::{train, train_exact_gp, train_from, TrainConfig};
use pgpr_core::{Batch, CovParam, KernelFamily, KernelParams, Method, ModelState, ObjectiveSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_kernel(rng: &mut ChaCha8Rng, d: usize, families: &[KernelFamily]) -> KernelParams {
    KernelParams {
        family: families[rng.random_range(0..families.len())],
        log_lengthscales: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
        log_outputscale: rng.random_range(-0.5..0.5),
        log_period: rng.random_range(0.0..1.0),
    }
}

fn random_cov(rng: &mut ChaCha8Rng, kind: pgpr_core::CovKind, m: usize) -> CovParam {
    match kind {
        pgpr_core::CovKind::Full => {
            let mut l = DMatrix::from_fn(m, m, |_, _| 0.3 * normal(rng)).lower_triangle();
            for i in 0..m {
                l[(i, i)] = rng.random_range(0.2..1.2);
            }
            CovParam::Full(LowerTriangular::new(l).unwrap())
        }
        pgpr_core::CovKind::Diagonal => CovParam::Diagonal(DVector::from_fn(m, |_, _| rng.random_range(-1.5..0.3))),
        pgpr_core::CovKind::Delta => CovParam::Delta,
    }
}

fn random_state(rng: &mut ChaCha8Rng, method: Method, m: usize, d: usize, families: &[KernelFamily]) -> ModelState {
    let z = DMatrix::from_fn(m, d, |_, _| rng.random_range(-2.0..2.0));
    let z_sigma = (method == Method::PpgprMfd).then(|| DMatrix::from_fn(m, d, |_, _| rng.random_range(-2.0..2.0)));
    ModelState {
        z_mu: z,
        z_sigma,
        m_prime: DVector::from_fn(m, |_, _| normal(rng)),
        cov: random_cov(rng, method.default_cov(), m),
        log_sigma_obs: rng.random_range(-1.5..0.0),
        kernel: random_kernel(rng, d, families),
    }
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.5..2.5));
    let y = DVector::from_fn(n, |i, _| x.row(i).iter().map(|v| v.sin()).sum::<f64>() + 0.3 * normal(rng));
    (x, y)
}

const MATERN: [KernelFamily; 3] = [KernelFamily::Matern12, KernelFamily::Matern32, KernelFamily::Matern52];
const ALL_FAMILIES: [KernelFamily; 5] = [
    KernelFamily::Matern12,
    KernelFamily::Matern32,
    KernelFamily::Matern52,
    KernelFamily::Rbf,
    KernelFamily::Periodic,
];

fn oracle_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=64);
        let d = rng.random_range(1..=4);
        let (x, y) = random_problem(&mut rng, n, d);
        let mut state = random_state(&mut rng, Method::Vfitc, n, d, &MATERN);
        state.z_mu = x.clone();
        let fitc = fitc_log_marginal(&state, &x, &y, DEFAULT_N_MAX).unwrap();
        let sigma = state.log_sigma_obs.exp();
        let exact = exact_gp_log_marginal(&state.kernel, sigma, &x, &y, DEFAULT_N_MAX).unwrap();
        worst = worst.max((fitc - exact).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 10.0,
        format!("max |FITC(Z=X) − exact| = {worst:.2e} (< 1e-8), {secs:.2} s (< 10 s)"),
    )
}

fn bound_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let t0 = Instant::now();
    let (mut gap_svgp, mut gap_vfitc) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..100 {
        let n = rng.random_range(1..=64);
        let m = rng.random_range(1..=16);
        let d = rng.random_range(1..=3);
        let (x, y) = random_problem(&mut rng, n, d);
        let s_full = random_state(&mut rng, Method::Svgp, m, d, &ALL_FAMILIES);
        let sigma = s_full.log_sigma_obs.exp();
        let b = Batch::new(&x, &y);
        let exact = exact_gp_log_marginal(&s_full.kernel, sigma, &x, &y, DEFAULT_N_MAX).unwrap();
        let fitc = fitc_log_marginal(&s_full, &x, &y, DEFAULT_N_MAX).unwrap();
        let elbo = svgp_elbo(&s_full, b, &ObjectiveSpec::new(Method::Svgp)).unwrap().total;
        let velbo = vfitc_elbo(&s_full, b, &ObjectiveSpec::new(Method::Vfitc)).unwrap().total;
        gap_svgp = gap_svgp.max(elbo - exact);
        gap_vfitc = gap_vfitc.max(velbo - fitc);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        gap_svgp <= 1e-8 && gap_vfitc <= 1e-8 && secs < 30.0,
        format!("max(SVGP − exact) = {gap_svgp:.3e}, max(VFITC − FITC) = {gap_vfitc:.3e} (≤ 1e-8), {secs:.2} s (< 30 s)"),
    )
}

fn gradient_suite() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        for method in Method::ALL {
            let (x, y) = random_problem(&mut rng, 32, 2);
            let state = random_state(&mut rng, method, 4, 2, &ALL_FAMILIES);
            let spec = ObjectiveSpec::new(method)
                .with_beta(rng.random_range(0.0..1.0))
                .with_gamma(rng.random_range(1.01..1.1));
            let r = finite_diff_check(&state, Batch::new(&x, &y), &spec, 1e-5).unwrap();
            for (kind, e) in &r.segments {
                if *e > worst {
                    worst = *e;
                    worst_at = format!("{method}/{} seed {seed}", kind.name());
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 120.0,
        format!("max rel err {worst:.2e} at {worst_at} (< 1e-4), {secs:.2} s (< 120 s)"),
    )
}

/// Objectives written directly in the unwhitened parameters
/// `m = Λ m'`, `S = Λ S' Λᵀ` using a dense inverse of `K_ZZ + jI`.
fn unwhitened_objective(state: &ModelState, x: &DMatrix<f64>, y: &DVector<f64>, spec: &ObjectiveSpec) -> f64 {
    let z = &state.z_mu;
    let mut kzz = kernel_matrix(&state.kernel, z, z).unwrap();
    let (lam, jitter) = cholesky_jitter(&SymMatrix::new(kzz.clone()), DEFAULT_JITTER).unwrap();
    for i in 0..z.nrows() {
        kzz[(i, i)] += jitter;
    }
    let kinv = kzz.clone().try_inverse().unwrap();
    let lm = lam.as_matrix();
    let m = lm * &state.m_prime;
    let s_prime = state.cov.covariance().unwrap_or_else(|| DMatrix::zeros(z.nrows(), z.nrows()));
    let s = lm * s_prime * lm.transpose();
    let kxz = kernel_matrix(&state.kernel, x, z).unwrap();
    let s2 = state.sigma_obs_sq();
    let proj = &kxz * &kinv;
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let k = kxz.row(i).transpose();
        let p = proj.row(i).transpose();
        let kii = state.kernel.outputscale();
        let kt = (kii - k.dot(&p)).max(0.0);
        let mu = p.dot(&m);
        let q = (p.transpose() * &s * &p)[(0, 0)];
        total += match spec.method {
            Method::Svgp => log_normal_pdf(y[i], mu, s2) - (kt + q) / (2.0 * s2),
            Method::Vfitc => log_normal_pdf(y[i], mu, kt + s2) - 0.5 * q / (kt + s2),
            _ => log_normal_pdf(y[i], mu, s2 + kt + q),
        };
    }
    let mz = z.nrows();
    let reg = if spec.method == Method::PpgprDelta {
        0.5 * (m.transpose() * &kinv * &m)[(0, 0)]
    } else {
        // KL(N(m, S) ‖ N(0, K)) with the factor of S kept exact
        let zero = DVector::zeros(mz);
        kl_mvn(&m, &SymMatrix::new(s), &zero, &SymMatrix::new(kzz)).unwrap()
    };
    spec.minibatch_scale * total - spec.beta_reg * reg
}

fn whitening_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let methods = [Method::Svgp, Method::Vfitc, Method::PpgprChol, Method::PpgprMf, Method::PpgprDelta];
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let method = methods[k % methods.len()];
        let m = rng.random_range(2..=8);
        let d = rng.random_range(1..=3);
        let (x, y) = random_problem(&mut rng, 24, d);
        let mut state = random_state(&mut rng, method, m, d, &MATERN);
        // well separated inducing points keep the dense inverse accurate
        state.z_mu = DMatrix::from_fn(m, d, |i, j| -2.0 + 4.0 * i as f64 / (m - 1) as f64 + 0.1 * j as f64);
        let spec = ObjectiveSpec::new(method).with_beta(rng.random_range(0.1..1.0));
        let w = evaluate(&state, Batch::new(&x, &y), &spec).unwrap().total;
        let u = unwhitened_objective(&state, &x, &y, &spec);
        worst = worst.max((w - u).abs());
    }
    outcome(worst < 1e-8, format!("max |whitened − unwhitened| = {worst:.2e} (< 1e-8)"))
}

struct RegimeRun {
    nf_ppgpr: f64,
    nf_svgp: f64,
    nll_ppgpr: f64,
    nll_svgp: f64,
}

fn heteroscedastic_run(seed: u64) -> RegimeRun {
    let raw = gen_heteroscedastic(2000, seed);
    let (tr, te, _) = standardize_and_split(&raw, &SplitSpec::default().with_seed(seed)).unwrap();
    let cfg = TrainConfig::new(200, 256, 32).with_seed(seed);
    let fit = |method: Method| {
        let spec = ObjectiveSpec::new(method);
        let (state, _) = train(Batch::new(&tr.x, &tr.y), &spec, &cfg).unwrap();
        let pm = predictive_moments(&state, &te.x, &spec).unwrap();
        (noise_fraction(&pm), nll(&pm, &te.y, te.target_std).unwrap())
    };
    let (nf_ppgpr, nll_ppgpr) = fit(Method::PpgprMfd);
    let (nf_svgp, nll_svgp) = fit(Method::Svgp);
    RegimeRun {
        nf_ppgpr,
        nf_svgp,
        nll_ppgpr,
        nll_svgp,
    }
}

fn noise_regime() -> Outcome {
    let t0 = Instant::now();
    let runs: Vec<RegimeRun> = (0..5).map(heteroscedastic_run).collect();
    let mean = |f: &dyn Fn(&RegimeRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let nf_p = mean(&|r| r.nf_ppgpr);
    let nf_s = mean(&|r| r.nf_svgp);
    let gap = mean(&|r| r.nll_svgp) - mean(&|r| r.nll_ppgpr);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        nf_p < 0.4 && nf_s > 0.6 && gap >= 0.05 && secs < 300.0,
        format!(
            "noise fraction PPGPR_MFD {nf_p:.3} (< 0.4), SVGP {nf_s:.3} (> 0.6); NLL gap {gap:.3} nats (≥ 0.05); {secs:.1} s (< 300 s)"
        ),
    )
}

fn calibration() -> Outcome {
    let raw = gen_heteroscedastic(1000, 7);
    let (tr, _, _) = standardize_and_split(&raw, &SplitSpec::default()).unwrap();
    let spec = ObjectiveSpec::new(Method::PpgprMfd);
    let (state, _) = train(Batch::new(&tr.x, &tr.y), &spec, &TrainConfig::new(50, 200, 16)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let n = 10_000;
    let xs = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.7..1.7));
    let pm = predictive_moments(&state, &xs, &spec).unwrap();
    let tv = pm.total_var();
    let ys = DVector::from_fn(n, |i, _| pm.mu_f[i] + tv[i].sqrt() * normal(&mut rng));
    let e = zscore_ecdf(&pm, &ys, &linspace(-4.0, 4.0, 81)).unwrap();
    outcome(e.ks < 0.05, format!("KS distance {:.4} at n = {n} (< 0.05)", e.ks))
}

/// `∫ (F(t) − 1{t ≥ y})² dt` by composite Simpson on both sides of `y`.
fn crps_integral(mu: f64, sd: f64, y: f64) -> f64 {
    let simpson = |a: f64, b: f64, upper: bool| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let f = |t: f64| {
            let c = normal_cdf((t - mu) / sd);
            if upper {
                (1.0 - c) * (1.0 - c)
            } else {
                c * c
            }
        };
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let lo = mu.min(y) - 14.0 * sd;
    let hi = mu.max(y) + 14.0 * sd;
    simpson(lo, y, false) + simpson(y, hi, true)
}

fn crps_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mu = rng.random_range(-5.0..5.0);
        let sd = rng.random_range(0.05..4.0);
        let y = mu + sd * rng.random_range(-5.0..5.0);
        worst = worst.max((crps_point(mu, sd, y) - crps_integral(mu, sd, y)).abs());
    }
    outcome(worst < 1e-6, format!("max |closed form − integral| = {worst:.2e} (< 1e-6)"))
}

fn median_step_ms(m: usize, b: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let n = 2048;
    let (x, y) = random_problem(&mut rng, n, 4);
    let spec = ObjectiveSpec::new(Method::Svgp);
    let mut cfg = TrainConfig::new(3, b, m);
    cfg.lr_initial = 1e-3;
    let (_, h) = train(Batch::new(&x, &y), &spec, &cfg).unwrap();
    h.median_step_ms()
}

fn complexity() -> Outcome {
    // warm-up so the first measurement does not pay for page faults
    median_step_ms(64, 256);
    let base = median_step_ms(64, 256);
    let m2 = median_step_ms(128, 256);
    let b2 = median_step_ms(64, 512);
    let (rm, rb) = (m2 / base, b2 / base);
    outcome(
        rm <= 10.0 && rb <= 2.5,
        format!(
            "median step {base:.3} ms at (M=64, b=256); M doubling ×{rm:.2} (≤ 10), b doubling ×{rb:.2} (≤ 2.5)"
        ),
    )
}

/// Every positive hyperparameter starts at softplus(0) = ln 2, the usual
/// library default for this experiment.
fn default_init_kernel() -> (KernelParams, f64) {
    let ln2 = std::f64::consts::LN_2;
    let k = KernelParams::unit(KernelFamily::Periodic, 1)
        .with_lengthscale(ln2)
        .with_outputscale(ln2)
        .with_period(ln2);
    (k, 0.5 * ln2.ln())
}

fn periodic_harness() -> Outcome {
    let kernel = KernelParams::unit(KernelFamily::Periodic, 1).with_period(0.2);
    let draw = gen_prior_draw(&kernel, 200, 909, 0.0).unwrap();
    // inputs stay on [0, 1]; targets are standardized as the trainer expects
    let (ym, ys) = (draw.y.mean(), draw.y.variance().sqrt());
    let x = &draw.x;
    let y = &draw.y.map(|v| (v - ym) / ys);
    let (k0, log_sigma0) = default_init_kernel();

    let init = ExactGp { kernel: k0.clone(), log_sigma_obs: log_sigma0 };
    let (gp, _) = train_exact_gp(x, y, init, 500, 0.05).unwrap();
    let pm = exact_gp_predict(&gp, x, y, x, DEFAULT_N_MAX).unwrap();
    let r_exact = rmse(&pm, y, ys).unwrap();

    let cfg = TrainConfig::new(2000, x.nrows(), 16).with_kernel(KernelFamily::Periodic);
    let fit = |method: Method| {
        let spec = ObjectiveSpec::new(method);
        let mut s = init_state(x, y, cfg.num_inducing, &spec, KernelFamily::Periodic, cfg.seed).unwrap();
        s.kernel = k0.clone();
        s.log_sigma_obs = log_sigma0;
        let (state, _) = train_from(s, Batch::new(x, y), &spec, &cfg, None).unwrap();
        rmse(&predictive_moments(&state, x, &spec).unwrap(), y, ys).unwrap()
    };
    let r_svgp = fit(Method::Svgp);
    let r_ppgpr = fit(Method::PpgprChol);
    let worst = r_exact.max(r_svgp).max(r_ppgpr);
    outcome(
        worst < 0.2,
        format!("train RMSE exact {r_exact:.4}, SVGP {r_svgp:.4}, PPGPR {r_ppgpr:.4} (all < 0.2)"),
    )
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 oracle identity (FITC with Z = X equals exact GP)", oracle_identity),
        ("2 bound suite (SVGP ≤ exact, VFITC ≤ FITC)", bound_suite),
        ("3 gradient suite (8 methods × 20 seeds)", gradient_suite),
        ("4 whitening equivalence", whitening_equivalence),
        ("5 noise-fraction regime on heteroscedastic data", noise_regime),
        ("6 calibration self-consistency", calibration),
        ("7 CRPS closed form vs integral", crps_closed_form),
        ("8 per-step complexity scaling", complexity),
        ("9 periodic prior-draw in-sample fit", periodic_harness),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let r = run();
        println!("[{}] criterion {name}: {}", if r.pass { "PASS" } else { "FAIL" }, r.detail);
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
