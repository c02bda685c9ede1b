use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use pgpr_core::data::{gen_heteroscedastic, gen_prior_draw, load_csv, standardize_and_split, Dataset, SplitSpec};
use pgpr_core::trainer::TrainConfig;
use pgpr_core::{KernelFamily, KernelParams, Method, ObjectiveSpec};

use crate::error::{config_err, CliError, CliResult};

pub const SVGP_BETAS: [f64; 4] = [0.1, 0.3, 0.5, 1.0];
pub const PPGPR_BETAS: [f64; 4] = [0.01, 0.05, 0.2, 1.0];
pub const GAMMAS: [f64; 4] = [1.01, 1.03, 1.05, 1.07];

/// β grid searched when a method entry gives none.
pub fn default_beta_grid(method: Method) -> Vec<f64> {
    match method {
        Method::Svgp | Method::Vfitc => SVGP_BETAS.to_vec(),
        m if m.is_ppgpr() => PPGPR_BETAS.to_vec(),
        _ => vec![1.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        target: String,
    },
    Heteroscedastic {
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    PriorDraw {
        n: usize,
        #[serde(default)]
        kernel: KernelFamily,
        #[serde(default = "default_lengthscale")]
        lengthscale: f64,
        #[serde(default = "one")]
        outputscale: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_lengthscale() -> f64 {
    0.1
}

fn default_period() -> f64 {
    0.2
}

fn one() -> f64 {
    1.0
}

impl DataSource {
    pub fn load(&self) -> CliResult<Dataset> {
        Ok(match self {
            DataSource::Csv { path, target } => load_csv(path, target)?,
            DataSource::Heteroscedastic { n, seed } => gen_heteroscedastic(*n, *seed),
            DataSource::PriorDraw {
                n,
                kernel,
                lengthscale,
                outputscale,
                period,
                noise_std,
                seed,
            } => {
                let k = KernelParams::unit(*kernel, 1)
                    .with_lengthscale(*lengthscale)
                    .with_outputscale(*outputscale)
                    .with_period(*period);
                gen_prior_draw(&k, *n, *seed, *noise_std)?
            }
        })
    }

    fn validate(&self) -> CliResult<()> {
        match self {
            DataSource::Csv { target, .. } if target.is_empty() => config_err("data.target: must not be empty"),
            DataSource::Csv { .. } => Ok(()),
            DataSource::Heteroscedastic { n, .. } if *n < 10 => {
                config_err(format!("data.n: need at least 10 points, got {n}"))
            }
            DataSource::Heteroscedastic { .. } => Ok(()),
            DataSource::PriorDraw {
                n,
                lengthscale,
                outputscale,
                period,
                noise_std,
                ..
            } => {
                if !(10..=4096).contains(n) {
                    return config_err(format!("data.n: must be in 10..=4096, got {n}"));
                }
                for (name, v) in [("lengthscale", lengthscale), ("outputscale", outputscale), ("period", period)] {
                    if !(v.is_finite() && *v > 0.0) {
                        return config_err(format!("data.{name}: must be positive, got {v}"));
                    }
                }
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return config_err(format!("data.noise_std: must be non-negative, got {noise_std}"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitWeights {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for SplitWeights {
    fn default() -> Self {
        SplitWeights {
            train: 15.0,
            test: 3.0,
            val: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelectBy {
    #[default]
    Nll,
    Rmse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodGrid {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_grid: Option<Vec<f64>>,
    /// γ-Robust only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl MethodGrid {
    pub fn betas(&self) -> Vec<f64> {
        self.beta_grid.clone().unwrap_or_else(|| default_beta_grid(self.method))
    }

    pub fn gammas(&self) -> Vec<f64> {
        match self.method {
            Method::GammaRobust => self.gamma_grid.clone().unwrap_or_else(|| GAMMAS.to_vec()),
            _ => vec![ObjectiveSpec::new(self.method).gamma],
        }
    }

    /// Grid cells of this entry, which sits at position `entry` of the
    /// run and carries the (unique) `label`.
    pub fn cells(&self, entry: usize, label: &str) -> Vec<Cell> {
        self.specs()
            .into_iter()
            .map(|spec| Cell {
                id: cell_id(entry, label, &spec),
                label: label.to_string(),
                spec,
            })
            .collect()
    }

    pub fn base_label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.name().to_string())
    }

    /// One objective per (β, γ) pair, β outermost.
    pub fn specs(&self) -> Vec<ObjectiveSpec> {
        let gammas = self.gammas();
        self.betas()
            .into_iter()
            .flat_map(|b| {
                gammas
                    .iter()
                    .map(move |&g| ObjectiveSpec::new(self.method).with_beta(b).with_gamma(g))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitWeights,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<MethodGrid>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub select_by: SelectBy,
    #[serde(default = "default_n_splits")]
    pub n_splits: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_n_splits() -> usize {
    1
}

/// One trainable grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub label: String,
    pub spec: ObjectiveSpec,
}

impl RunConfig {
    /// Parses and validates a config. Relative CSV paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        if let Some(Value::Array(methods)) = value.get_mut("methods") {
            for m in methods.iter_mut() {
                if let Value::String(s) = m {
                    *m = serde_json::json!({ "method": s });
                }
            }
        }
        let has_decay = value.pointer("/train/lr_decay_epochs").is_some();
        let mut cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        if !has_decay {
            let e = cfg.train.epochs;
            cfg.train.lr_decay_epochs = vec![e / 2, e * 3 / 4];
        }
        if let DataSource::Csv { path, .. } = &mut cfg.data {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.data.validate()?;
        let w = self.split;
        for (name, v) in [("train", w.train), ("test", w.test), ("val", w.val)] {
            if !(v.is_finite() && v > 0.0) {
                return config_err(format!("split.{name}: must be positive, got {v}"));
            }
        }
        if self.methods.is_empty() {
            return config_err("methods: must list at least one method");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if let Some(b) = &m.beta_grid {
                if b.is_empty() {
                    return config_err(format!("methods[{i}].beta_grid: must not be empty"));
                }
                if let Some((j, v)) = b.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                    return config_err(format!("methods[{i}].beta_grid[{j}]: must be finite and non-negative, got {v}"));
                }
            }
            if let Some(g) = &m.gamma_grid {
                if m.method != Method::GammaRobust {
                    return config_err(format!("methods[{i}].gamma_grid: only applies to GammaRobust"));
                }
                if g.is_empty() {
                    return config_err(format!("methods[{i}].gamma_grid: must not be empty"));
                }
                if let Some((j, v)) = g.iter().enumerate().find(|(_, v)| !(**v > 1.0 && **v <= 1.2)) {
                    return config_err(format!("methods[{i}].gamma_grid[{j}]: must satisfy 1 < gamma <= 1.2, got {v}"));
                }
            }
            if matches!(&m.label, Some(l) if l.is_empty()) {
                return config_err(format!("methods[{i}].label: must not be empty"));
            }
        }
        if self.n_splits == 0 {
            return config_err("n_splits: must be at least 1");
        }
        self.train
            .validate(usize::MAX)
            .map_err(|e| CliError::Config(format!("train: {}", strip_prefix(&e.to_string()))))
    }

    pub fn split_spec(&self, index: usize) -> SplitSpec {
        let w = self.split;
        SplitSpec::new(w.train, w.test, w.val, self.seed.wrapping_add(index as u64))
    }

    /// Standardized (train, test, val) for split `index`, with the training
    /// configuration checked against the training size.
    pub fn splits(&self, raw: &Dataset, index: usize) -> CliResult<(Dataset, Dataset, Dataset)> {
        let parts = standardize_and_split(raw, &self.split_spec(index))?;
        self.train
            .validate(parts.0.len())
            .map_err(|e| CliError::Config(format!("train: {}", strip_prefix(&e.to_string()))))?;
        Ok(parts)
    }

    /// Grid cells of every method entry, grouped by entry.
    pub fn cells(&self) -> Vec<Vec<Cell>> {
        let labels = unique_labels(self.methods.iter().map(MethodGrid::base_label));
        self.methods
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (m, label))| m.cells(i, &label))
            .collect()
    }

    /// Train seed for split `index`.
    pub fn train_config(&self, index: usize) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(index as u64),
            ..self.train.clone()
        }
    }
}

fn strip_prefix(msg: &str) -> &str {
    msg.strip_prefix("invalid configuration: ").unwrap_or(msg)
}

/// Appends `#2`, `#3`, … to repeated labels.
pub fn unique_labels(labels: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    labels
        .into_iter()
        .map(|l| {
            let c = seen.entry(l.clone()).or_insert(0);
            *c += 1;
            if *c == 1 {
                l
            } else {
                format!("{l}#{c}")
            }
        })
        .collect()
}

pub fn cell_id(entry: usize, label: &str, spec: &ObjectiveSpec) -> String {
    let safe: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '-' })
        .collect();
    let mut id = format!("{entry:02}_{safe}_b{}", spec.beta_reg);
    if spec.method == Method::GammaRobust {
        id.push_str(&format!("_g{}", spec.gamma));
    }
    id
}
