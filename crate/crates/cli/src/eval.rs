use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use pgpr_core::metrics::{linspace, zscore_ecdf, EvalReport};
use pgpr_core::model::{predictive_moments, to_rows};
use pgpr_core::ModelState;

use crate::config::RunConfig;
use crate::error::{config_err, CliResult};
use crate::grid::CellFile;
use crate::train::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

pub struct EvalRequest {
    pub run: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub cell: Option<String>,
    pub config: Option<PathBuf>,
    pub split: SplitName,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub standardized: bool,
}

/// z-score grid for the ECDF table.
pub fn ecdf_grid() -> Vec<f64> {
    linspace(-4.0, 4.0, 161)
}

/// Resolves the model and run directory: an explicit `--model` lives at
/// `<run>/cells/<id>/model.json`; otherwise the cell (default: the chosen
/// one) is looked up in the run's manifest.
fn resolve(req: &EvalRequest) -> CliResult<(PathBuf, PathBuf)> {
    match (&req.model, &req.run) {
        (Some(m), run) => {
            let run = match run {
                Some(r) => r.clone(),
                None => m
                    .parent()
                    .and_then(Path::parent)
                    .and_then(Path::parent)
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
            };
            Ok((m.clone(), run))
        }
        (None, Some(run)) => {
            let manifest = Manifest::load(run)?;
            let id = req.cell.clone().unwrap_or(manifest.chosen.clone());
            match manifest.cells.iter().find(|c| c.id == id) {
                Some(c) => match &c.model {
                    Some(p) => Ok((run.join(p), run.clone())),
                    None => config_err(format!("cell `{id}` has no trained model")),
                },
                None => config_err(format!("cell `{id}` is not in {}", run.join("manifest.json").display())),
            }
        }
        (None, None) => config_err("eval needs --run or --model"),
    }
}

pub fn run(req: &EvalRequest) -> CliResult<EvalReport> {
    let (model_path, run_dir) = resolve(req)?;
    let cell: CellFile = {
        let p = model_path.with_file_name("cell.json");
        serde_json::from_str(&fs::read_to_string(&p)?)?
    };
    let state = ModelState::load(&model_path)?;
    let config_path = req.config.clone().unwrap_or_else(|| run_dir.join("config.json"));
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(s) = req.seed {
        cfg.seed = s;
    }
    let raw = cfg.data.load()?;
    let (train, test, val) = cfg.splits(&raw, 0)?;
    let ds = match req.split {
        SplitName::Train => train,
        SplitName::Val => val,
        SplitName::Test => test,
    };
    let (t_mean, t_std, x) = if req.standardized {
        (0.0, 1.0, ds.x.clone())
    } else {
        (ds.target_mean, ds.target_std, ds.unstandardize_features(&ds.x))
    };
    let m = predictive_moments(&state, &ds.x, &cell.spec)?;
    let report = EvalReport::compute(&m, &ds.y, t_std)?.with_points(&to_rows(&x), &m, &ds.y, t_mean, t_std);
    let ecdf = zscore_ecdf(&m, &ds.y, &ecdf_grid())?;

    let out = req
        .out
        .clone()
        .unwrap_or_else(|| run_dir.join("eval").join(format!("{}_{}", cell.id, req.split.as_str())));
    fs::create_dir_all(&out)?;
    let summary = EvalReport {
        per_point: None,
        ..report.clone()
    };
    fs::write(out.join("report.json"), summary.to_json()?)?;
    ecdf.write_csv(&out.join("ecdf.csv"))?;
    report.write_points_csv(&out.join("points.csv"))?;
    println!(
        "{} on {} ({} points): nll {:.4}  rmse {:.4}  crps {:.4}  noise_fraction {:.3}  ks {:.4}",
        cell.id,
        req.split.as_str(),
        ds.len(),
        report.nll,
        report.rmse,
        report.crps,
        report.noise_fraction,
        report.ks
    );
    println!("wrote {}", out.display());
    Ok(report)
}
