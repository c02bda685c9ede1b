//! Multi-split comparison: per split, each method entry searches its own
//! grid on validation data and the chosen cell is scored on test data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pgpr_core::data::Dataset;
use pgpr_core::trainer::TrainConfig;
use pgpr_core::Method;

use crate::config::{unique_labels, Cell, RunConfig, SelectBy};
use crate::error::{config_err, CliError, CliResult};
use crate::grid::{fit_cell, metrics_on, select, CellFit, Metrics};
use crate::train::write_run_files;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation over √k; undefined (NaN) for fewer than two
/// values.
pub fn std_err(v: &[f64]) -> f64 {
    let k = v.len();
    if k < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// 1-based ranks, lowest value first; tied values share the mean of the
/// ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

struct Entry {
    label: String,
    cells: Vec<Cell>,
    train: TrainConfig,
    select_by: SelectBy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: usize,
    pub method: String,
    pub chosen: String,
    pub beta_reg: f64,
    pub gamma: Option<f64>,
    pub nll: f64,
    pub rmse: f64,
    pub crps: f64,
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub n_splits: usize,
    pub nll_mean: f64,
    pub nll_se: f64,
    pub rmse_mean: f64,
    pub rmse_se: f64,
    pub crps_mean: f64,
    pub crps_se: f64,
    pub noise_fraction_mean: f64,
    pub noise_fraction_se: f64,
    pub nll_rank: f64,
    pub rmse_rank: f64,
    pub crps_rank: f64,
}

/// Summary statistics for rows of `labels.len()` methods over `k` splits,
/// given in split-major order.
pub fn summarize(labels: &[String], rows: &[SplitRow]) -> Vec<SummaryRow> {
    let n = labels.len();
    let k = rows.len() / n;
    let metric = |f: fn(&SplitRow) -> f64, e: usize| -> Vec<f64> { (0..k).map(|s| f(&rows[s * n + e])).collect() };
    let rank = |f: fn(&SplitRow) -> f64, e: usize| -> f64 {
        (0..k)
            .map(|s| average_ranks(&rows[s * n..(s + 1) * n].iter().map(f).collect::<Vec<_>>())[e])
            .sum::<f64>()
            / k as f64
    };
    let nll: fn(&SplitRow) -> f64 = |r| r.nll;
    let rmse: fn(&SplitRow) -> f64 = |r| r.rmse;
    let crps: fn(&SplitRow) -> f64 = |r| r.crps;
    let nf: fn(&SplitRow) -> f64 = |r| r.noise_fraction;
    labels
        .iter()
        .enumerate()
        .map(|(e, label)| SummaryRow {
            method: label.clone(),
            n_splits: k,
            nll_mean: mean(&metric(nll, e)),
            nll_se: std_err(&metric(nll, e)),
            rmse_mean: mean(&metric(rmse, e)),
            rmse_se: std_err(&metric(rmse, e)),
            crps_mean: mean(&metric(crps, e)),
            crps_se: std_err(&metric(crps, e)),
            noise_fraction_mean: mean(&metric(nf, e)),
            noise_fraction_se: std_err(&metric(nf, e)),
            nll_rank: rank(nll, e),
            rmse_rank: rank(rmse, e),
            crps_rank: rank(crps, e),
        })
        .collect()
}

fn pm(m: f64, se: f64) -> String {
    if se.is_nan() {
        format!("{m:.4}")
    } else {
        format!("{m:.4} ± {se:.4}")
    }
}

pub fn render_table(summary: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>19} {:>19} {:>19} {:>19}  {:>5} {:>5} {:>5}",
        "method", "nll", "rmse", "crps", "noise_fraction", "r_nll", "r_rms", "r_crp"
    );
    for r in summary {
        let _ = writeln!(
            s,
            "{:<14} {:>19} {:>19} {:>19} {:>19}  {:>5.2} {:>5.2} {:>5.2}",
            r.method,
            pm(r.nll_mean, r.nll_se),
            pm(r.rmse_mean, r.rmse_se),
            pm(r.crps_mean, r.crps_se),
            pm(r.noise_fraction_mean, r.noise_fraction_se),
            r.nll_rank,
            r.rmse_rank,
            r.crps_rank
        );
    }
    s
}

fn check_shared(configs: &[RunConfig]) -> CliResult<()> {
    let first = &configs[0];
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.data != first.data {
            return config_err(format!("config[{i}].data: all compared runs must share the dataset"));
        }
        if c.split != first.split {
            return config_err(format!("config[{i}].split: all compared runs must share the split proportions"));
        }
        if c.seed != first.seed {
            return config_err(format!("config[{i}].seed: all compared runs must share the seed"));
        }
    }
    Ok(())
}

pub fn run(configs: &[RunConfig], n_splits: usize, out: &Path, standardized: bool) -> CliResult<()> {
    if configs.is_empty() {
        return config_err("compare needs at least one --config");
    }
    check_shared(configs)?;
    fs::create_dir_all(out)?;
    write_run_files(&configs[0], out, "compare")?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        fs::write(out.join(format!("config_{i}.json")), serde_json::to_string_pretty(c)?)?;
    }

    let grids: Vec<_> = configs.iter().flat_map(|c| c.methods.iter().map(move |m| (c, m))).collect();
    if grids.len() < 2 {
        return config_err("methods: compare needs at least two method entries");
    }
    let labels = unique_labels(grids.iter().map(|(_, m)| m.base_label()));
    let entries: Vec<Entry> = grids
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, ((c, m), label))| Entry {
            label: label.clone(),
            cells: m.cells(i, label),
            train: c.train.clone(),
            select_by: c.select_by,
        })
        .collect();

    let raw = configs[0].data.load()?;
    let splits: Vec<(Dataset, Dataset, Dataset)> = (0..n_splits)
        .map(|k| {
            let parts = configs[0].splits(&raw, k)?;
            for c in &configs[1..] {
                c.splits(&raw, k)?;
            }
            Ok(parts)
        })
        .collect::<CliResult<_>>()?;

    let jobs: Vec<(usize, usize, usize)> = (0..n_splits)
        .flat_map(|k| {
            entries
                .iter()
                .enumerate()
                .flat_map(move |(e, en)| (0..en.cells.len()).map(move |c| (k, e, c)))
        })
        .collect();
    let fits: Vec<CellFit> = jobs
        .par_iter()
        .map(|&(k, e, c)| {
            let (train, _, val) = &splits[k];
            let tc = TrainConfig {
                seed: configs[0].seed.wrapping_add(k as u64),
                ..entries[e].train.clone()
            };
            fit_cell(&entries[e].cells[c], train, val, &tc, standardized, None)
        })
        .collect::<CliResult<_>>()?;

    let mut rows = Vec::new();
    let mut it = fits.into_iter();
    for (k, (_, test, _)) in splits.iter().enumerate() {
        for en in &entries {
            let group: Vec<CellFit> = it.by_ref().take(en.cells.len()).collect();
            let records: Vec<_> = group.iter().map(|f| f.record.clone()).collect();
            let best = select(&records, en.select_by)
                .map_err(|_| CliError::Numerical(format!("every grid cell of {} failed on split {k}", en.label)))?;
            let fit = &group[best];
            let state = fit.state.as_ref().expect("selected cells trained");
            let m = Metrics::from(&metrics_on(state, &fit.cell.spec, test, standardized)?);
            rows.push(SplitRow {
                split: k,
                method: en.label.clone(),
                chosen: fit.cell.id.clone(),
                beta_reg: fit.cell.spec.beta_reg,
                gamma: (fit.cell.spec.method == Method::GammaRobust).then_some(fit.cell.spec.gamma),
                nll: m.nll,
                rmse: m.rmse,
                crps: m.crps,
                noise_fraction: m.noise_fraction,
            });
        }
    }
    let summary = summarize(&labels, &rows);

    let mut w = csv::Writer::from_path(out.join("per_split.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for r in &summary {
        w.serialize(r)?;
    }
    w.flush()?;
    let table = render_table(&summary);
    fs::write(out.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}
