//! Training a grid of objectives on one split and picking the best cell on
//! validation data.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pgpr_core::data::Dataset;
use pgpr_core::metrics::EvalReport;
use pgpr_core::model::{init_state, predictive_moments};
use pgpr_core::objectives::Batch;
use pgpr_core::trainer::{train_from, TrainConfig};
use pgpr_core::{Method, ModelState, ObjectiveSpec};

use crate::config::{Cell, SelectBy};
use crate::error::{is_numerical, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub nll: f64,
    pub rmse: f64,
    pub crps: f64,
    pub noise_fraction: f64,
}

impl Metrics {
    pub fn get(&self, by: SelectBy) -> f64 {
        match by {
            SelectBy::Nll => self.nll,
            SelectBy::Rmse => self.rmse,
        }
    }
}

impl From<&EvalReport> for Metrics {
    fn from(r: &EvalReport) -> Self {
        Metrics {
            nll: r.nll,
            rmse: r.rmse,
            crps: r.crps,
            noise_fraction: r.noise_fraction,
        }
    }
}

/// Outcome of one grid cell as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub label: String,
    pub method: Method,
    pub beta_reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Model path relative to the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct CellFit {
    pub cell: Cell,
    pub record: CellRecord,
    pub state: Option<ModelState>,
}

/// Cell metadata stored next to its model so the model can be evaluated
/// on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFile {
    pub id: String,
    pub label: String,
    pub spec: ObjectiveSpec,
}

pub fn metrics_on(state: &ModelState, spec: &ObjectiveSpec, ds: &Dataset, standardized: bool) -> pgpr_core::Result<EvalReport> {
    let m = predictive_moments(state, &ds.x, spec)?;
    EvalReport::compute(&m, &ds.y, if standardized { 1.0 } else { ds.target_std })
}

/// Trains one cell. Numerical failures are recorded rather than returned
/// so that the rest of the grid can still be compared.
pub fn fit_cell(
    cell: &Cell,
    train: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
    standardized: bool,
    dir: Option<&Path>,
) -> CliResult<CellFit> {
    let mut record = CellRecord {
        id: cell.id.clone(),
        label: cell.label.clone(),
        method: cell.spec.method,
        beta_reg: cell.spec.beta_reg,
        gamma: (cell.spec.method == Method::GammaRobust).then_some(cell.spec.gamma),
        model: None,
        final_objective: None,
        val: None,
        error: None,
    };
    let ckpt = match dir {
        Some(d) => {
            let c = d.join("checkpoints");
            fs::create_dir_all(&c)?;
            let meta = CellFile {
                id: cell.id.clone(),
                label: cell.label.clone(),
                spec: cell.spec,
            };
            fs::write(d.join("cell.json"), serde_json::to_string_pretty(&meta)?)?;
            Some(c)
        }
        None => None,
    };
    let outcome = init_state(&train.x, &train.y, tc.num_inducing, &cell.spec, tc.kernel, tc.seed)
        .and_then(|s| train_from(s, Batch::new(&train.x, &train.y), &cell.spec, tc, ckpt.as_deref()))
        .and_then(|(state, history)| {
            let report = metrics_on(&state, &cell.spec, val, standardized)?;
            Ok((state, history, report))
        });
    match outcome {
        Ok((state, history, report)) => {
            if let Some(d) = dir {
                state.save(&d.join("model.json"))?;
                history.write_csv(&d.join("history.csv"))?;
                record.model = Some(format!("cells/{}/model.json", cell.id));
            }
            record.final_objective = history.epochs.last().map(|e| e.objective);
            record.val = Some(Metrics::from(&report));
            Ok(CellFit {
                cell: cell.clone(),
                record,
                state: Some(state),
            })
        }
        Err(e) if is_numerical(&e) => {
            log::warn!("cell {} failed: {e}", cell.id);
            record.error = Some(e.to_string());
            Ok(CellFit {
                cell: cell.clone(),
                record,
                state: None,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Trains every cell in parallel; results keep the order of `cells`. When
/// `root` is given each cell writes only inside `root/cells/<id>`.
pub fn fit_grid(
    cells: &[Cell],
    train: &Dataset,
    val: &Dataset,
    tc: &TrainConfig,
    standardized: bool,
    root: Option<&Path>,
) -> CliResult<Vec<CellFit>> {
    cells
        .par_iter()
        .map(|c| {
            let dir = root.map(|r| r.join("cells").join(&c.id));
            fit_cell(c, train, val, tc, standardized, dir.as_deref())
        })
        .collect()
}

/// Index of the successful cell with the smallest validation metric; ties
/// go to the earlier cell.
pub fn select(records: &[CellRecord], by: SelectBy) -> CliResult<usize> {
    records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.val.map(|m| (i, m.get(by))))
        .filter(|(_, v)| !v.is_nan())
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| CliError::Numerical("every grid cell failed to train".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, nll: Option<f64>, rmse: f64) -> CellRecord {
        CellRecord {
            id: id.into(),
            label: "SVGP".into(),
            method: Method::Svgp,
            beta_reg: 1.0,
            gamma: None,
            model: None,
            final_objective: None,
            val: nll.map(|nll| Metrics {
                nll,
                rmse,
                crps: 0.0,
                noise_fraction: 0.5,
            }),
            error: None,
        }
    }

    #[test]
    fn selection_takes_the_minimum_and_skips_failures() {
        let r = vec![rec("a", Some(1.0), 0.3), rec("b", None, 0.0), rec("c", Some(0.5), 0.9), rec("d", Some(f64::NAN), 0.1)];
        assert_eq!(select(&r, SelectBy::Nll).unwrap(), 2);
        assert_eq!(select(&r, SelectBy::Rmse).unwrap(), 3);
    }

    #[test]
    fn selection_ties_go_to_the_first_cell() {
        let r = vec![rec("a", Some(2.0), 0.0), rec("b", Some(1.0), 0.0), rec("c", Some(1.0), 0.0)];
        assert_eq!(select(&r, SelectBy::Nll).unwrap(), 1);
    }

    #[test]
    fn all_failed_is_numerical() {
        let e = select(&[rec("a", None, 0.0)], SelectBy::Nll).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}
