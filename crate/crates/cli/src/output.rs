//! Output artifacts: per-run CSV traces and the experiment summary JSON.
//! Every file opens with the config hash so artifacts can be tied back to
//! the exact inputs that produced them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nysopt::optim::{RunStatus, TraceRecord};
use nysopt::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 (truncated to 16 chars) of the canonical JSON form of a
/// config, after CLI overrides are applied.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    let json = serde_json::to_string(cfg)
        .map_err(|e| Error::Config(format!("config not serializable: {e}")))?;
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Format an optional float as a CSV cell; `None` becomes an empty cell and
/// non-finite values are never printed.
fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

pub const TRACE_HEADER: &str =
    "epoch,wall_time_s,train_loss,opt_error,test_error_rate,grad_norm,factor_rank,factor_build_time_s,status";

/// Columns that carry wall-clock measurements and are therefore exempt from
/// byte-for-byte reproducibility checks.
pub const TIMING_COLUMNS: [usize; 2] = [1, 7];

/// Write one run's trace. The leading comment line pins the config hash and
/// the cell coordinates; the clock note records that `wall_time_s` is
/// cumulative optimization time excluding measurement overhead.
pub fn write_run_csv(
    path: &Path,
    hash: &str,
    method: &str,
    lambda: f64,
    eta: f64,
    rho: Option<f64>,
    seed: u64,
    trace: &[TraceRecord],
    status: &RunStatus,
) -> Result<()> {
    let mut out = String::new();
    let rho_s = match rho {
        Some(r) => format!("{r}"),
        None => "none".to_string(),
    };
    out.push_str(&format!(
        "# config_hash={hash} method={method} lambda={lambda} eta={eta} rho={rho_s} seed={seed} clock=cumulative_optimizer_seconds\n"
    ));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},ok\n",
            r.epoch,
            cell(Some(r.wall_time_s)),
            cell(Some(r.train_loss)),
            cell(r.opt_error),
            cell(r.test_error_rate),
            cell(Some(r.grad_norm)),
            r.factor_rank,
            cell(Some(r.factor_build_time_s)),
        ));
    }
    if let RunStatus::Diverged { epoch, iteration: _, last_loss } = status {
        out.push_str(&format!("{},,{},,,,,,diverged\n", epoch, cell(*last_loss)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// How the reference optimum behind `opt_error` was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct FStarEntry {
    pub lambda: f64,
    pub value: f64,
    /// "newton" (damped-Newton reference) or "best_seen" (minimum observed
    /// train loss minus a small margin, used above the dense cap).
    pub method: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub source: String,
    pub train_n: usize,
    pub test_n: Option<usize>,
    pub d: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub id: String,
    pub file: String,
    pub method: String,
    pub lambda: f64,
    pub eta: f64,
    pub rho: Option<f64>,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs_recorded: usize,
    pub final_train_loss: Option<f64>,
    pub final_opt_error: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestCell {
    pub run_id: String,
    pub method: String,
    pub lambda: f64,
    pub eta: f64,
    pub rho: Option<f64>,
    pub seed: u64,
    pub final_opt_error: f64,
}

/// Experiment-level summary. Field order is the serialization order, and
/// maps are BTreeMaps, so the JSON is stable across identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub tool_version: String,
    pub dataset: DatasetInfo,
    pub f_star: BTreeMap<String, FStarEntry>,
    pub runs: Vec<RunEntry>,
    pub best: Option<BestCell>,
    pub best_by_method: BTreeMap<String, BestCell>,
    /// Run ids that did not complete (diverged or produced no trace).
    pub failures: Vec<String>,
    pub total_wall_time_s: f64,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("summary not serializable: {e}")))?;
    let mut f = fs::File::create(path)?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}
