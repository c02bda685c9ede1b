mod compare;
mod config;
mod error;
mod eval;
mod grid;
mod tools;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pgpr_core::{KernelFamily, Method};

use crate::config::{DataSource, RunConfig, SelectBy};
use crate::error::{config_err, CliError, CliResult};
use crate::eval::{EvalRequest, SplitName};
use crate::tools::GradCheckArgs;

#[derive(Parser)]
#[command(name = "pgpr", version, about = "Train, evaluate and compare sparse Gaussian-process regressors")]
struct Cli {
    /// JSON run configuration; `compare` takes it more than once.
    #[arg(long, global = true)]
    config: Vec<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (file for `gen-data`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report metrics in standardized target units instead of original ones.
    #[arg(long, global = true)]
    standardized_metrics: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every grid cell of a config and select one on validation data.
    Train {
        #[arg(long, value_enum)]
        select_by: Option<SelectBy>,
    },
    /// Evaluate a trained model on one split of its run's data.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: Option<PathBuf>,
        /// Explicit model file; defaults to the run's chosen cell.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        cell: Option<String>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Compare method entries across repeated random splits.
    Compare {
        #[arg(long, value_enum)]
        select_by: Option<SelectBy>,
        /// Number of splits; defaults to the first config's `n_splits`.
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Write a synthetic dataset as CSV.
    GenData {
        #[arg(long, value_enum)]
        kind: Option<GenKind>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, value_parser = parse_kernel, default_value = "Periodic")]
        kernel: KernelFamily,
        #[arg(long, default_value_t = 0.1)]
        lengthscale: f64,
        #[arg(long, default_value_t = 1.0)]
        outputscale: f64,
        #[arg(long, default_value_t = 0.2)]
        period: f64,
        #[arg(long, default_value_t = 0.0)]
        noise_std: f64,
    },
    /// Compare analytic and finite-difference gradients on a random problem.
    GradCheck {
        /// One method; all eight when omitted.
        #[arg(long)]
        method: Option<Method>,
        #[arg(long, value_parser = parse_kernel, default_value = "Matern52")]
        kernel: KernelFamily,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Heteroscedastic,
    PriorDraw,
}

fn parse_kernel(s: &str) -> Result<KernelFamily, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown kernel `{s}` (Matern12, Matern32, Matern52, RBF, Periodic)"))
}

fn one_config(cli: &Cli) -> CliResult<RunConfig> {
    match cli.config.as_slice() {
        [p] => {
            let mut c = RunConfig::load(p)?;
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            Ok(c)
        }
        [] => config_err("--config is required"),
        _ => config_err("this command takes a single --config"),
    }
}

fn init_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("PGPR_NUM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Config(format!("PGPR_NUM_THREADS: expected a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("PGPR_NUM_THREADS: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        Command::Train { select_by } => {
            let mut cfg = one_config(&cli)?;
            if let Some(s) = select_by {
                cfg.select_by = *s;
            }
            if let Some(o) = &cli.out {
                cfg.out_dir = o.clone();
            }
            let out = cfg.out_dir.clone();
            train::run(&cfg, &out, cli.standardized_metrics)?;
            println!("wrote {}", out.display());
        }
        Command::Eval { run, model, cell, split } => {
            if cli.config.len() > 1 {
                return config_err("eval takes at most one --config");
            }
            eval::run(&EvalRequest {
                run: run.clone(),
                model: model.clone(),
                cell: cell.clone(),
                config: cli.config.first().cloned(),
                split: *split,
                seed: cli.seed,
                out: cli.out.clone(),
                standardized: cli.standardized_metrics,
            })?;
        }
        Command::Compare { select_by, splits } => {
            if cli.config.is_empty() {
                return config_err("--config is required");
            }
            let mut configs = cli.config.iter().map(|p| RunConfig::load(p)).collect::<CliResult<Vec<_>>>()?;
            for c in &mut configs {
                if let Some(s) = cli.seed {
                    c.seed = s;
                }
                if let Some(s) = select_by {
                    c.select_by = *s;
                }
            }
            let k = splits.unwrap_or(configs[0].n_splits);
            if k == 0 {
                return config_err("--splits must be at least 1");
            }
            let out = cli.out.clone().unwrap_or_else(|| configs[0].out_dir.clone());
            compare::run(&configs, k, &out, cli.standardized_metrics)?;
            println!("wrote {}", out.display());
        }
        Command::GenData {
            kind,
            n,
            kernel,
            lengthscale,
            outputscale,
            period,
            noise_std,
        } => {
            let seed = cli.seed.unwrap_or(0);
            let source = match (kind, cli.config.is_empty()) {
                (Some(GenKind::Heteroscedastic), _) => DataSource::Heteroscedastic { n: *n, seed },
                (Some(GenKind::PriorDraw), _) => DataSource::PriorDraw {
                    n: *n,
                    kernel: *kernel,
                    lengthscale: *lengthscale,
                    outputscale: *outputscale,
                    period: *period,
                    noise_std: *noise_std,
                    seed,
                },
                (None, false) => {
                    let mut data = one_config(&cli)?.data;
                    if let (Some(s), DataSource::Heteroscedastic { seed, .. } | DataSource::PriorDraw { seed, .. }) =
                        (cli.seed, &mut data)
                    {
                        *seed = s;
                    }
                    data
                }
                (None, true) => return config_err("gen-data needs --kind or --config"),
            };
            let Some(out) = &cli.out else {
                return config_err("gen-data needs --out <file.csv>");
            };
            let rows = tools::gen_data(&source, out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::GradCheck {
            method,
            kernel,
            n,
            m,
            d,
            h,
            threshold,
        } => {
            let args = GradCheckArgs {
                methods: method.map_or(Method::ALL.to_vec(), |m| vec![m]),
                kernel: *kernel,
                n: *n,
                m: *m,
                d: *d,
                seed: cli.seed.unwrap_or(0),
                h: *h,
            };
            let results = tools::grad_check(&args)?;
            tools::print_report(&results, *threshold)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
