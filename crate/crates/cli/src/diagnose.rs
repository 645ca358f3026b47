//! Approximation-quality diagnostics: the m-sweep CSV and the aggregated
//! closeness table.

use std::path::PathBuf;

use nysopt::diagnostics::{self, ApproxQualityReport};
use nysopt::linalg::DVec;
use nysopt::loss::LossModel;
use nysopt::optim::{self, Init};
use nysopt::Result;

use crate::config::DiagnoseConfig;
use crate::output::config_hash;

pub struct DiagnoseOutcome {
    pub out_dir: PathBuf,
    pub sweep_csv: PathBuf,
    pub closeness_csv: PathBuf,
    pub rows: usize,
}

/// Runs the quality sweep for every lambda in the grid at a single shared
/// evaluation point, then writes the per-draw CSV and the per-(lambda, m)
/// closeness table.
pub fn run_diagnostics(mut cfg: DiagnoseConfig, out: Option<PathBuf>) -> Result<DiagnoseOutcome> {
    if let Some(o) = out {
        cfg.out_dir = o.display().to_string();
    }
    cfg.validate()?;
    let hash = {
        let mut c = cfg.clone();
        c.out_dir = String::new();
        config_hash(&c)?
    };
    let data = cfg.load_data()?;

    // The Hessian is formed once, at a point chosen with the first lambda in
    // the grid, so rows are comparable across lambdas.
    let model = LossModel::new(cfg.loss, cfg.lambda_grid[0])?;
    let w = match &cfg.at {
        Init::Zeros => DVec::zeros(data.d()),
        _ => optim::least_squares_init(&model, &data)?,
    };

    let mut all: Vec<(f64, Vec<ApproxQualityReport>)> = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let reports =
            diagnostics::quality_sweep(&model, &data, &w, &cfg.m_grid, lambda, cfg.sweep_seeds)?;
        all.push((lambda, reports));
    }

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;

    let sweep_csv = out_dir.join("quality_sweep.csv");
    let mut text = format!("# config_hash={hash}\n");
    text.push_str(
        "lambda,m,seed,k,rel_error_fro,rel_error_spec,rank_n,lambda_min_n,lambda_max_n,newton_closeness_lhs,newton_closeness_rhs,effective_dim\n",
    );
    let mut rows = 0usize;
    for (lambda, reports) in &all {
        for r in reports {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                lambda,
                r.m,
                r.seed,
                r.k,
                r.rel_error_fro,
                r.rel_error_spec,
                r.rank_n,
                r.lambda_min_n,
                r.lambda_max_n,
                r.newton_closeness_lhs,
                r.newton_closeness_rhs,
                r.effective_dim,
            ));
            rows += 1;
        }
    }
    std::fs::write(&sweep_csv, text)?;

    let closeness_csv = out_dir.join("closeness.csv");
    let mut text = format!("# config_hash={hash}\n");
    text.push_str(
        "lambda,m,draws,mean_rel_error_fro,mean_closeness_lhs,mean_closeness_rhs,effective_dim,bound_holds\n",
    );
    for (lambda, reports) in &all {
        for &m in &cfg.m_grid {
            let group: Vec<&ApproxQualityReport> =
                reports.iter().filter(|r| r.m == m).collect();
            if group.is_empty() {
                continue;
            }
            let nd = group.len() as f64;
            let mean_fro = group.iter().map(|r| r.rel_error_fro).sum::<f64>() / nd;
            let mean_lhs = group.iter().map(|r| r.newton_closeness_lhs).sum::<f64>() / nd;
            let mean_rhs = group.iter().map(|r| r.newton_closeness_rhs).sum::<f64>() / nd;
            let holds = group
                .iter()
                .all(|r| r.newton_closeness_lhs <= r.newton_closeness_rhs + 1e-8);
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                lambda, m, group.len(), mean_fro, mean_lhs, mean_rhs, group[0].effective_dim, holds,
            ));
        }
    }
    std::fs::write(&closeness_csv, text)?;

    Ok(DiagnoseOutcome { out_dir, sweep_csv, closeness_csv, rows })
}
