//! `gen-data` and `grad-check`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pgpr_core::grad::{finite_diff_check, FdReport, ParamVector};
use pgpr_core::model::init_state;
use pgpr_core::objectives::Batch;
use pgpr_core::{KernelFamily, Method, ModelState, ObjectiveSpec};

use crate::config::DataSource;
use crate::error::{config_err, CliError, CliResult};

/// Writes the generated dataset as CSV with columns `x0..` and `y`.
pub fn gen_data(source: &DataSource, out: &Path) -> CliResult<usize> {
    if matches!(source, DataSource::Csv { .. }) {
        return config_err("data.source: gen-data needs a generator, not a csv source");
    }
    let ds = source.load()?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    ds.write_csv(out, "y")?;
    Ok(ds.len())
}

pub struct GradCheckArgs {
    pub methods: Vec<Method>,
    pub kernel: KernelFamily,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub h: f64,
}

/// A random regression problem with a perturbed initial state, so that no
/// gradient component is trivially zero.
pub fn random_problem(
    method: Method,
    kernel: KernelFamily,
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> pgpr_core::Result<(DMatrix<f64>, DVector<f64>, ModelState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: DMatrix<f64> = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = rng.sample(StandardNormal);
        (2.0 * x.row(i).sum()).sin() + 0.1 * e
    });
    let spec = ObjectiveSpec::new(method);
    let state = init_state(&x, &y, m, &spec, kernel, seed)?;
    let mut p = ParamVector::pack(&state);
    for v in p.values.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += 0.2 * e;
    }
    Ok((x, y, p.unpack(&state)))
}

pub fn grad_check(args: &GradCheckArgs) -> CliResult<Vec<(Method, FdReport)>> {
    if args.m == 0 || args.m > args.n || args.d == 0 || !(args.h > 0.0) {
        return config_err("grad-check needs 1 <= m <= n, d >= 1 and h > 0");
    }
    let mut out = Vec::new();
    for &method in &args.methods {
        let (x, y, state) = random_problem(method, args.kernel, args.n, args.m, args.d, args.seed)?;
        let spec = ObjectiveSpec::new(method).with_beta(0.7).with_gamma(1.05);
        let report = finite_diff_check(&state, Batch::new(&x, &y), &spec, args.h)?;
        out.push((method, report));
    }
    Ok(out)
}

pub fn print_report(results: &[(Method, FdReport)], threshold: f64) -> CliResult<()> {
    println!("{:<12} {:<16} {:>12}", "method", "segment", "max_rel_err");
    let mut failed = Vec::new();
    for (method, r) in results {
        for (kind, e) in &r.segments {
            println!("{:<12} {:<16} {:>12.3e}", method.name(), kind.name(), e);
        }
        let ok = r.passes(threshold);
        println!("{:<12} {:<16} {:>12.3e}  {}", method.name(), "(max)", r.max_error(), if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(method.name());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check above {threshold:e} for {}",
            failed.join(", ")
        )))
    }
}
