//! Flat TOML configuration for the benchmark and diagnostics commands,
//! plus dataset resolution (file-backed or synthetic).

use std::fs;
use std::path::Path;

use nysopt::data::{BatchMode, Dataset};
use nysopt::loss::LossKind;
use nysopt::optim::{Init, Method, OptimizerConfig, OuterIterate};
use nysopt::{testkit, Error, Result};
use serde::{Deserialize, Serialize};

fn default_out_dir() -> String {
    "results".to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_rho_grid() -> Vec<f64> {
    vec![0.1]
}

fn default_m() -> usize {
    50
}

fn default_batch_size() -> usize {
    128
}

fn default_epochs() -> usize {
    20
}

fn default_batch_mode() -> BatchMode {
    BatchMode::WithReplacement
}

fn default_synthetic_n() -> usize {
    2000
}

fn default_synthetic_d() -> usize {
    100
}

fn default_synthetic_seed() -> u64 {
    7
}

fn default_sweep_seeds() -> u64 {
    5
}

/// Experiment sweep over methods x lambda x eta x rho x seeds. All keys are
/// top level so a config file reads as a flat list of `key = value` lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// LIBSVM-format training file (plain or .gz). Mutually exclusive with
    /// `synthetic`.
    #[serde(default)]
    pub train_path: Option<String>,
    /// Optional LIBSVM-format test file for error-rate traces.
    #[serde(default)]
    pub test_path: Option<String>,
    /// Force a feature dimension larger than the maximum index seen.
    #[serde(default)]
    pub dim_override: Option<usize>,
    /// Scale each feature by its max absolute value on the training split.
    #[serde(default)]
    pub normalize: bool,
    /// Synthetic dataset family: "adult_like" (sparse binary, d = 123) or
    /// "dense" (Gaussian rows).
    #[serde(default)]
    pub synthetic: Option<String>,
    #[serde(default = "default_synthetic_n")]
    pub synthetic_n: usize,
    /// Feature count for the "dense" family; "adult_like" is fixed at 123.
    #[serde(default = "default_synthetic_d")]
    pub synthetic_d: usize,
    /// Rows in the held-out synthetic test split; 0 disables it.
    #[serde(default)]
    pub synthetic_test_n: usize,
    #[serde(default = "default_synthetic_seed")]
    pub synthetic_seed: u64,

    pub loss: LossKind,
    pub lambda_grid: Vec<f64>,
    pub eta_grid: Vec<f64>,
    /// Damping grid; expanded only for methods that build a factor.
    #[serde(default = "default_rho_grid")]
    pub rho_grid: Vec<f64>,
    pub methods: Vec<Method>,

    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub ell: Option<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hessian_sample: Option<usize>,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_batch_mode")]
    pub batch_mode: BatchMode,
    #[serde(default)]
    pub svrg_outer: OuterIterate,

    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

/// Nystrom approximation-quality sweep over an m grid and a lambda grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default)]
    pub train_path: Option<String>,
    #[serde(default)]
    pub dim_override: Option<usize>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub synthetic: Option<String>,
    #[serde(default = "default_synthetic_n")]
    pub synthetic_n: usize,
    #[serde(default = "default_synthetic_d")]
    pub synthetic_d: usize,
    #[serde(default = "default_synthetic_seed")]
    pub synthetic_seed: u64,

    pub loss: LossKind,
    /// Regularizers at which closeness and effective dimension are reported;
    /// each must be positive.
    pub lambda_grid: Vec<f64>,
    /// Column counts to sweep; must be nonempty.
    pub m_grid: Vec<usize>,
    /// Independent column draws averaged per m.
    #[serde(default = "default_sweep_seeds")]
    pub sweep_seeds: u64,
    /// Point at which the Hessian is formed: "zeros" or "least_squares"
    /// (fit at the first lambda in the grid).
    #[serde(default)]
    pub at: Init,

    #[serde(default = "default_out_dir")]
    pub out_dir: String,
}

fn check_grid(name: &str, grid: &[f64], allow_zero: bool) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} must be nonempty")));
    }
    for &v in grid {
        let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
        if !ok {
            return Err(Error::Config(format!("{name} entry {v} is out of range")));
        }
    }
    Ok(())
}

fn check_dataset_keys(train_path: &Option<String>, synthetic: &Option<String>) -> Result<()> {
    match (train_path, synthetic) {
        (Some(_), Some(_)) => {
            Err(Error::Config("train_path and synthetic are mutually exclusive".into()))
        }
        (None, None) => Err(Error::Config("one of train_path or synthetic is required".into())),
        (None, Some(kind)) if kind != "adult_like" && kind != "dense" => Err(Error::Config(
            format!("unknown synthetic family {kind:?}; expected \"adult_like\" or \"dense\""),
        )),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("experiment config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_dataset_keys(&self.train_path, &self.synthetic)?;
        if self.test_path.is_some() && self.synthetic.is_some() {
            return Err(Error::Config("test_path requires train_path, not synthetic".into()));
        }
        check_grid("lambda_grid", &self.lambda_grid, true)?;
        check_grid("eta_grid", &self.eta_grid, false)?;
        check_grid("rho_grid", &self.rho_grid, false)?;
        if self.methods.is_empty() {
            return Err(Error::Config("methods must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        // Every grid cell must itself be a valid optimizer config.
        self.optimizer_config(self.methods[0], self.lambda_grid[0], self.eta_grid[0], self.rho_grid[0], self.seeds[0])
            .validate()
    }

    /// The concrete per-run config for one grid cell.
    pub fn optimizer_config(
        &self,
        method: Method,
        lambda: f64,
        eta: f64,
        rho: f64,
        seed: u64,
    ) -> OptimizerConfig {
        OptimizerConfig {
            method,
            eta,
            rho,
            lambda,
            m: self.m,
            k_max: self.k_max,
            ell: self.ell,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            hessian_sample: self.hessian_sample,
            init: self.init.clone(),
            batch_mode: self.batch_mode,
            svrg_outer: self.svrg_outer,
        }
    }

    /// Training and optional test split, normalized if requested.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        self.validate()?;
        let spec = DataSpec {
            train_path: self.train_path.clone(),
            test_path: self.test_path.clone(),
            dim_override: self.dim_override,
            normalize: self.normalize,
            synthetic: self.synthetic.clone(),
            synthetic_n: self.synthetic_n,
            synthetic_d: self.synthetic_d,
            synthetic_test_n: self.synthetic_test_n,
            synthetic_seed: self.synthetic_seed,
        };
        spec.load()
    }
}

impl DiagnoseConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("diagnose config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        check_dataset_keys(&self.train_path, &self.synthetic)?;
        check_grid("lambda_grid", &self.lambda_grid, false)?;
        if self.m_grid.is_empty() {
            return Err(Error::Config("m_grid must be nonempty".into()));
        }
        if self.m_grid.contains(&0) {
            return Err(Error::Config("m_grid entries must be at least 1".into()));
        }
        if self.sweep_seeds == 0 {
            return Err(Error::Config("sweep_seeds must be at least 1".into()));
        }
        if matches!(self.at, Init::Given(_)) {
            return Err(Error::Config("at must be \"zeros\" or \"least_squares\"".into()));
        }
        Ok(())
    }

    pub fn load_data(&self) -> Result<Dataset> {
        self.validate()?;
        let spec = DataSpec {
            train_path: self.train_path.clone(),
            test_path: None,
            dim_override: self.dim_override,
            normalize: self.normalize,
            synthetic: self.synthetic.clone(),
            synthetic_n: self.synthetic_n,
            synthetic_d: self.synthetic_d,
            synthetic_test_n: 0,
            synthetic_seed: self.synthetic_seed,
        };
        Ok(spec.load()?.0)
    }
}

struct DataSpec {
    train_path: Option<String>,
    test_path: Option<String>,
    dim_override: Option<usize>,
    normalize: bool,
    synthetic: Option<String>,
    synthetic_n: usize,
    synthetic_d: usize,
    synthetic_test_n: usize,
    synthetic_seed: u64,
}

impl DataSpec {
    fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        let (mut train, mut test) = if let Some(kind) = &self.synthetic {
            // Train and test come from one pooled draw so both splits share
            // the same planted label model.
            let total = self.synthetic_n + self.synthetic_test_n;
            let pool = match kind.as_str() {
                "adult_like" => testkit::synth_adult_like(total, self.synthetic_seed),
                "dense" => testkit::synth_dense(total, self.synthetic_d, self.synthetic_seed),
                other => return Err(Error::Config(format!("unknown synthetic family {other:?}"))),
            };
            if self.synthetic_test_n > 0 {
                let (train, test) = pool.split_at(self.synthetic_n)?;
                (train, Some(test))
            } else {
                (pool, None)
            }
        } else {
            let path = self.train_path.as_ref().expect("validated");
            let train = Dataset::from_path(path, self.dim_override)?;
            let test = match &self.test_path {
                Some(p) => Some(Dataset::from_path(p, self.dim_override)?),
                None => None,
            };
            (train, test)
        };
        if let Some(t) = test.as_mut() {
            let d = train.d().max(t.d());
            train.expand_dim(d)?;
            t.expand_dim(d)?;
        }
        if self.normalize {
            let factors = train.maxabs_factors();
            train = train.scaled_by(&factors)?;
            if let Some(t) = test.as_mut() {
                *t = t.scaled_by(&factors)?;
            }
        }
        Ok((train, test))
    }
}

/// Which config family a file parses as; used by the `validate` subcommand.
pub enum ParsedConfig {
    Experiment(Box<ExperimentConfig>),
    Diagnose(Box<DiagnoseConfig>),
}

/// Try both schemas. A file mentioning `m_grid` is treated as a diagnose
/// config; otherwise as an experiment config.
pub fn parse_any(text: &str) -> Result<ParsedConfig> {
    let looks_diagnose = toml::from_str::<toml::Value>(text)
        .map(|v| v.get("m_grid").is_some())
        .unwrap_or(false);
    if looks_diagnose {
        let cfg = DiagnoseConfig::from_toml_str(text)?;
        cfg.validate()?;
        Ok(ParsedConfig::Diagnose(Box::new(cfg)))
    } else {
        let cfg = ExperimentConfig::from_toml_str(text)?;
        cfg.validate()?;
        Ok(ParsedConfig::Experiment(Box::new(cfg)))
    }
}
