use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use pgpr_core::model::STATE_VERSION;

use crate::config::{RunConfig, SelectBy};
use crate::error::CliResult;
use crate::grid::{fit_grid, select, CellRecord};

/// Version string recorded in every run directory.
pub fn version() -> String {
    match option_env!("PGPR_GIT_DESCRIBE") {
        Some(g) if !g.is_empty() => format!("pgpr {} ({g})", env!("CARGO_PKG_VERSION")),
        _ => format!("pgpr {}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub version: String,
    pub state_version: String,
    pub seed: u64,
    pub command: String,
}

/// Writes the config snapshot and `run.json`, the two files needed to
/// reproduce a run directory.
pub fn write_run_files(cfg: &RunConfig, out: &Path, command: &str) -> CliResult<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let info = RunInfo {
        version: version(),
        state_version: STATE_VERSION.to_string(),
        seed: cfg.seed,
        command: command.to_string(),
    };
    fs::write(out.join("run.json"), serde_json::to_string_pretty(&info)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub select_by: SelectBy,
    pub standardized_metrics: bool,
    pub dataset: DatasetInfo,
    pub cells: Vec<CellRecord>,
    pub chosen: String,
    pub chosen_model: String,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> CliResult<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json"))?)?)
    }
}

pub fn run(cfg: &RunConfig, out: &Path, standardized: bool) -> CliResult<Manifest> {
    write_run_files(cfg, out, "train")?;
    let raw = cfg.data.load()?;
    let (train, test, val) = cfg.splits(&raw, 0)?;
    log::info!("{}: {} train / {} val / {} test", raw.name, train.len(), val.len(), test.len());
    let cells: Vec<_> = cfg.cells().concat();
    let fits = fit_grid(&cells, &train, &val, &cfg.train_config(0), standardized, Some(out))?;
    let records: Vec<CellRecord> = fits.into_iter().map(|f| f.record).collect();
    let best = select(&records, cfg.select_by)?;
    let manifest = Manifest {
        version: version(),
        seed: cfg.seed,
        select_by: cfg.select_by,
        standardized_metrics: standardized,
        dataset: DatasetInfo {
            name: raw.name.clone(),
            dim: train.dim(),
            n_train: train.len(),
            n_val: val.len(),
            n_test: test.len(),
        },
        chosen: records[best].id.clone(),
        chosen_model: records[best].model.clone().expect("successful cells have a model"),
        cells: records,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    print_summary(&manifest);
    Ok(manifest)
}

fn print_summary(m: &Manifest) {
    println!("{:<28} {:>10} {:>10} {:>10} {:>8}", "cell", "val_nll", "val_rmse", "val_crps", "noise");
    for c in &m.cells {
        match &c.val {
            Some(v) => println!(
                "{:<28} {:>10.4} {:>10.4} {:>10.4} {:>8.3}{}",
                c.id,
                v.nll,
                v.rmse,
                v.crps,
                v.noise_fraction,
                if c.id == m.chosen { "  *" } else { "" }
            ),
            None => println!("{:<28} failed: {}", c.id, c.error.as_deref().unwrap_or("?")),
        }
    }
    println!("chosen: {} ({})", m.chosen, m.chosen_model);
}
