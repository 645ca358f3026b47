//! Acceptance suite: fourteen end-to-end checks over the factorization,
//! the optimizers, the diagnostics, and the benchmark harness. They run
//! sequentially inside a single test so wall-clock measurements are not
//! polluted by sibling tests, and each prints one PASS/FAIL line.

use std::fs;
use std::io::Write as _;
use std::time::Instant;

use nysopt::data::{BatchMode, Dataset};
use nysopt::diagnostics;
use nysopt::linalg::{self, DMat, DVec};
use nysopt::loss::{LossKind, LossModel};
use nysopt::nystrom::{self, NystromFactor};
use nysopt::optim::{
    self, Init, Method, OptimizerConfig, RunResult, RunStatus,
};
use nysopt::rng::RngStream;
use nysopt::testkit;
use nysopt_cli::config::ExperimentConfig;
use nysopt_cli::experiment::{run_experiment, CliOverrides};
use nysopt_cli::output::TIMING_COLUMNS;

type Check = fn() -> Result<String, String>;

/// Writes directly to the stderr file descriptor so the line shows up even
/// under the test harness's output capture.
fn report(line: &str) {
    let stderr = std::io::stderr();
    let mut lock = stderr.lock();
    writeln!(lock, "{line}").ok();
}

#[test]
fn acceptance() {
    let checks: [(&str, Check); 14] = [
        ("01 woodbury_exactness", c01_woodbury_exactness),
        ("02 exact_nystrom_recovery", c02_exact_nystrom_recovery),
        ("03 sketch_identity", c03_sketch_identity),
        ("04 spectral_sandwich", c04_spectral_sandwich),
        ("05 oracle_consistency", c05_oracle_consistency),
        ("06 quadratic_contraction", c06_quadratic_contraction),
        ("07 linear_convergence", c07_linear_convergence),
        ("08 curvature_benefit", c08_curvature_benefit),
        ("09 closeness_bound", c09_closeness_bound),
        ("10 approximation_trend", c10_approximation_trend),
        ("11 unbiased_direction", c11_unbiased_direction),
        ("12 baseline_reduction", c12_baseline_reduction),
        ("13 determinism", c13_determinism),
        ("14 build_time_scaling", c14_build_time_scaling),
    ];
    report(""); // break off the harness's "test acceptance ..." prefix
    let mut failures = Vec::new();
    for (name, check) in checks {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) => {
                report(&format!("acceptance {name}: PASS ({detail}; {secs:.2}s)"));
            }
            Ok(Err(why)) => {
                report(&format!("acceptance {name}: FAIL ({why}; {secs:.2}s)"));
                failures.push(name);
            }
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                report(&format!("acceptance {name}: FAIL (panicked: {msg}; {secs:.2}s)"));
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

fn err_str(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// apply_inverse agrees with a dense solve of (ZZ^T + rho I) x = v to
/// 1e-9 relative over 100 random factors, within a 10 s budget.
fn c01_woodbury_exactness() -> Result<String, String> {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = RngStream::raw(101);
    let mut max_rel = 0.0f64;
    for _ in 0..100 {
        let d = 2 + rng.uniform(199);
        let k = 1 + rng.uniform(20.min(d));
        let rho = 10f64.powf(-3.0 * rng.uniform_f64());
        let z = testkit::random_dense(&mut rng, d, k);
        let v = testkit::random_unit(&mut rng, d) * (1.0 + 9.0 * rng.uniform_f64());
        let factor = NystromFactor::from_z(z.clone(), rho).map_err(err_str)?;
        let fast = factor.apply_inverse(&v);
        let dense = &z * z.transpose() + DMat::identity(d, d) * rho;
        let exact = linalg::spd_solve(&dense, &v).map_err(err_str)?;
        let rel = (&fast - &exact).norm() / exact.norm();
        max_rel = max_rel.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    if max_rel > TOL {
        return Err(format!("max rel error {max_rel:.3e} > {TOL:.0e}"));
    }
    if secs > 10.0 {
        return Err(format!("runtime {secs:.2}s > 10s"));
    }
    Ok(format!("100 factors, max rel error {max_rel:.2e}"))
}

/// When H has rank r and the sampled columns span range(H), the Nystrom
/// reconstruction recovers H to 1e-8 relative Frobenius.
fn c02_exact_nystrom_recovery() -> Result<String, String> {
    const TOL: f64 = 1e-8;
    let mut rng = RngStream::raw(202);
    let mut max_rel = 0.0f64;
    for _ in 0..50 {
        let d = 5 + rng.uniform(46);
        let r = 1 + rng.uniform(10.min(d));
        let g = testkit::random_dense(&mut rng, d, r);
        let h = &g * g.transpose();
        let h = (&h + h.transpose()) * 0.5;
        // any r columns whose rows of G are independent span range(H); keep
        // the selected block well conditioned so exactness is numerical too
        let mut omega = nystrom::sample_columns(d, r, &mut rng).map_err(err_str)?;
        for _ in 0..50 {
            let sub = DMat::from_fn(r, r, |i, j| g[(omega[i], j)]);
            let svals = sub.svd(false, false).singular_values;
            let (lo, hi) = (svals.min(), svals.max());
            if lo > 1e-3 * hi {
                break;
            }
            omega = nystrom::sample_columns(d, r, &mut rng).map_err(err_str)?;
        }
        let mut c = DMat::zeros(d, r);
        for (j, &col) in omega.iter().enumerate() {
            c.set_column(j, &h.column(col));
        }
        let factor = nystrom::build_factor(&c, &omega, 1.0, r, nystrom::default_clamp(r), 0)
            .map_err(err_str)?;
        let n = factor.dense_reconstruct().map_err(err_str)?;
        let rel = (&n - &h).norm() / h.norm();
        max_rel = max_rel.max(rel);
    }
    if max_rel > TOL {
        return Err(format!("max rel Frobenius error {max_rel:.3e} > {TOL:.0e}"));
    }
    Ok(format!("50 spanned low-rank matrices, max rel error {max_rel:.2e}"))
}

/// On quadratic losses the factor equals the column-sketch projection of the
/// scaled design: ZZ^T = X^T U_k U_k^T X / n with U_k the top left singular
/// block of (X/sqrt n) restricted to the sampled columns.
fn c03_sketch_identity() -> Result<String, String> {
    const TOL: f64 = 1e-8;
    let mut rng = RngStream::raw(303);
    let mut max_err = 0.0f64;
    for _ in 0..20 {
        let d = 5 + rng.uniform(26);
        let n = d + 10 + rng.uniform(30);
        let x = testkit::random_dense(&mut rng, n, d);
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| (0..d).map(|j| (j, x[(i, j)])).collect())
            .collect();
        let labels: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let data = Dataset::from_rows(&rows, &labels, d).map_err(err_str)?;
        let model = LossModel::new(LossKind::Quadratic, 0.0).map_err(err_str)?;

        let m = 1 + rng.uniform(d);
        let omega = nystrom::sample_columns(d, m, &mut rng).map_err(err_str)?;
        let all: Vec<usize> = (0..n).collect();
        let w = DVec::zeros(d);
        let c = model.hessian_columns(&data, &all, &w, &omega).map_err(err_str)?;
        let factor = nystrom::build_factor(&c, &omega, 0.5, m, nystrom::default_clamp(m), 0)
            .map_err(err_str)?;
        let zzt = factor.dense_reconstruct().map_err(err_str)?;

        let xt = &x / (n as f64).sqrt();
        let mut xw = DMat::zeros(n, m);
        for (j, &col) in omega.iter().enumerate() {
            xw.set_column(j, &xt.column(col));
        }
        let svd = xw.svd(true, false);
        let u = svd.u.as_ref().expect("left vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let k = factor.k();
        let mut uk = DMat::zeros(n, k);
        for (slot, &idx) in order.iter().take(k).enumerate() {
            uk.set_column(slot, &u.column(idx));
        }
        let proj = xt.transpose() * &uk * uk.transpose() * &xt;
        let err = (&zzt - &proj).norm() / zzt.norm().max(1.0);
        max_err = max_err.max(err);
    }
    if max_err > TOL {
        return Err(format!("max Frobenius gap {max_err:.3e} > {TOL:.0e}"));
    }
    Ok(format!("20 quadratic instances, max Frobenius gap {max_err:.2e}"))
}

/// Eigenvalues of ZZ^T + rho I stay inside [rho, lambda_max(ZZ^T) + rho]
/// up to 1e-10 slack, over 200 random factors.
fn c04_spectral_sandwich() -> Result<String, String> {
    const SLACK: f64 = 1e-10;
    let mut rng = RngStream::raw(404);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d = 2 + rng.uniform(59);
        let k = 1 + rng.uniform(8.min(d));
        let rho = 10f64.powf(-3.0 * rng.uniform_f64());
        let z = testkit::random_dense(&mut rng, d, k);
        let factor = NystromFactor::from_z(z, rho).map_err(err_str)?;
        let n_mat = factor.dense_reconstruct().map_err(err_str)?;
        let lam_max = linalg::sym_eigenvalues(&n_mat).last().copied().unwrap_or(0.0);
        let shifted = &n_mat + DMat::identity(d, d) * rho;
        for ev in linalg::sym_eigenvalues(&shifted) {
            let below = (rho - SLACK) - ev;
            let above = ev - (lam_max + rho + SLACK);
            worst = worst.max(below).max(above);
            if below > 0.0 || above > 0.0 {
                return Err(format!(
                    "eigenvalue {ev} outside [{}, {}]",
                    rho - SLACK,
                    lam_max + rho + SLACK
                ));
            }
        }
    }
    Ok(format!("200 factors, worst margin violation {worst:.1e}"))
}

/// Analytic gradients and Hessian columns agree with finite differences for
/// logistic and squared-hinge losses (points kept away from margin 1).
fn c05_oracle_consistency() -> Result<String, String> {
    const GRAD_TOL: f64 = 1e-5;
    const HESS_TOL: f64 = 1e-4;
    let mut rng = RngStream::raw(505);
    let mut max_grad = 0.0f64;
    let mut max_hess = 0.0f64;
    for kind in [LossKind::Logistic, LossKind::L2Svm] {
        for _ in 0..20 {
            let d = 3 + rng.uniform(48);
            let n = 25;
            let data = testkit::synth_dense(n, d, rng.next_u64());
            let model = LossModel::new(kind, 1e-2).map_err(err_str)?;
            let all: Vec<usize> = (0..n).collect();

            // squared hinge is C^1 but only piecewise C^2: keep every row's
            // margin clear of the kink so the FD stencil stays one-sided
            let mut w = DVec::from_fn(d, |_, _| 0.3 * rng.normal());
            if kind == LossKind::L2Svm {
                let mut tries = 0;
                while (0..n).any(|i| (data.label(i) * data.dot_row(i, &w) - 1.0).abs() < 2e-2) {
                    w = DVec::from_fn(d, |_, _| 0.3 * rng.normal());
                    tries += 1;
                    if tries > 500 {
                        return Err("could not find a margin-separated point".into());
                    }
                }
            }

            let f = |v: &DVec| model.loss(&data, &all, v);
            let g = model.grad(&data, &all, &w);
            let g_fd = testkit::fd_gradient(f, &w);
            let grad_rel = (&g - &g_fd).norm() / g.norm().max(1.0);
            max_grad = max_grad.max(grad_rel);

            for _ in 0..3 {
                let j = rng.uniform(d);
                let col = model
                    .hessian_columns(&data, &all, &w, &[j])
                    .map_err(err_str)?
                    .column(0)
                    .into_owned();
                let col_fd = testkit::fd_hessian_column(f, &w, j);
                let hess_rel = (&col - &col_fd).norm() / col.norm().max(1.0);
                max_hess = max_hess.max(hess_rel);
            }
        }
    }
    if max_grad > GRAD_TOL {
        return Err(format!("gradient FD mismatch {max_grad:.3e} > {GRAD_TOL:.0e}"));
    }
    if max_hess > HESS_TOL {
        return Err(format!("Hessian column FD mismatch {max_hess:.3e} > {HESS_TOL:.0e}"));
    }
    Ok(format!("grad rel {max_grad:.2e}, hess col rel {max_hess:.2e}"))
}

/// With m = d, full batches, and eta = 1 on a quadratic, the error map is
/// rho (H + rho I)^{-1}, so each step contracts the distance to the optimum
/// by at most rho / (rho + mu).
fn c06_quadratic_contraction() -> Result<String, String> {
    let (n, d) = (120, 15);
    let data = testkit::synth_dense(n, d, 606);
    let model = LossModel::new(LossKind::Quadratic, 0.0).map_err(err_str)?;
    let (w_star, _) = optim::newton_reference(&model, &data, 50, 1e-14).map_err(err_str)?;
    let h = model.full_hessian(&data, &DVec::zeros(d)).map_err(err_str)?;
    let mu = linalg::sym_eigenvalues(&h)[0];
    if mu <= 0.0 {
        return Err(format!("quadratic not strongly convex, mu = {mu}"));
    }
    let rho = 1.0;
    let bound = rho / (rho + mu) + 1e-6;

    let config = OptimizerConfig {
        method: Method::NysSgd,
        eta: 1.0,
        rho,
        lambda: 0.0,
        m: d,
        k_max: None,
        ell: None,
        batch_size: n,
        epochs: 1,
        seed: 33,
        hessian_sample: None,
        init: Init::Zeros,
        batch_mode: BatchMode::WithoutReplacementPerEpoch,
        svrg_outer: Default::default(),
    };

    // One full batch per epoch makes epoch t the t-th step; determinism
    // makes the runs stack, so distances come from runs of length 1..=20.
    let mut prev = w_star.norm();
    let mut max_ratio = 0.0f64;
    for t in 1..=20usize {
        let mut cfg = config.clone();
        cfg.epochs = t;
        let result = optim::run_nys_sgd(&cfg, &model, &data, None, None).map_err(err_str)?;
        if result.status != RunStatus::Completed {
            return Err(format!("run diverged at step {t}"));
        }
        let err = (&result.final_w - &w_star).norm();
        let ratio = err / prev;
        max_ratio = max_ratio.max(ratio);
        if ratio > bound {
            return Err(format!(
                "step {t} contraction {ratio:.8} exceeds bound {bound:.8}"
            ));
        }
        prev = err;
    }
    Ok(format!("20 steps, worst ratio {max_ratio:.6} vs bound {bound:.6}"))
}

fn adult_subsample() -> (Dataset, LossModel, f64) {
    let train = testkit::synth_adult_like(2000, 19);
    let model = LossModel::new(LossKind::Logistic, 1e-3).expect("valid model");
    let (_, f_star) = optim::newton_reference(&model, &train, 200, 1e-12).expect("reference");
    (train, model, f_star)
}

const GRID_ETAS: [f64; 6] = [1.0, 0.5, 0.25, 0.1, 0.05, 0.01];
const GRID_RHOS: [f64; 4] = [1.0, 0.1, 0.01, 0.001];
const GRID_SEEDS: [u64; 3] = [0, 1, 2];

fn grid_config(method: Method, eta: f64, rho: f64, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        method,
        eta,
        rho,
        lambda: 1e-3,
        m: 50,
        k_max: None,
        ell: None,
        batch_size: 128,
        epochs: 20,
        seed,
        hessian_sample: None,
        init: Init::LeastSquares,
        batch_mode: BatchMode::WithReplacement,
        svrg_outer: Default::default(),
    }
}

/// Runs every (eta, rho) cell of a method over the fixed seeds. For methods
/// without a factor the rho grid collapses to one placeholder entry.
fn run_grid(
    method: Method,
    model: &LossModel,
    train: &Dataset,
    f_star: f64,
) -> Vec<((f64, f64), Vec<RunResult>)> {
    let rhos: Vec<f64> = if method.uses_factor() {
        GRID_RHOS.to_vec()
    } else {
        vec![0.1]
    };
    let mut out = Vec::new();
    for &eta in &GRID_ETAS {
        for &rho in &rhos {
            let runs: Vec<RunResult> = GRID_SEEDS
                .iter()
                .map(|&seed| {
                    let cfg = grid_config(method, eta, rho, seed);
                    optim::run(&cfg, model, train, None, Some(f_star)).expect("run")
                })
                .collect();
            out.push(((eta, rho), runs));
        }
    }
    out
}

fn cell_completed(runs: &[RunResult]) -> bool {
    runs.iter().all(|r| {
        r.status == RunStatus::Completed
            && r.trace.len() == 20
            && r.trace.iter().all(|t| t.opt_error.is_some_and(|g| g > 0.0))
    })
}

fn mean_final_gap(runs: &[RunResult]) -> f64 {
    let sum: f64 = runs
        .iter()
        .map(|r| r.trace.last().and_then(|t| t.opt_error).unwrap_or(f64::INFINITY))
        .sum();
    sum / runs.len() as f64
}

/// Best completed cell by mean final optimality gap.
fn best_cell(
    grid: &[((f64, f64), Vec<RunResult>)],
) -> Option<(&(f64, f64), &Vec<RunResult>)> {
    grid.iter()
        .filter(|(_, runs)| cell_completed(runs))
        .min_by(|a, b| mean_final_gap(&a.1).total_cmp(&mean_final_gap(&b.1)))
        .map(|(cell, runs)| (cell, runs))
}

/// At the grid-searched (eta, rho), the seed-averaged log optimality gap of
/// the preconditioned variance-reduced method falls linearly in the epoch
/// count: negative slope with R^2 > 0.9 over epochs 2..=20.
fn c07_linear_convergence() -> Result<String, String> {
    let start = Instant::now();
    let (train, model, f_star) = adult_subsample();
    let grid = run_grid(Method::NysSvrg, &model, &train, f_star);
    let Some(((eta, rho), runs)) = best_cell(&grid) else {
        return Err("no grid cell completed on all seeds".into());
    };

    let epochs: Vec<usize> = (2..=20).collect();
    let xs: Vec<f64> = epochs.iter().map(|&e| e as f64).collect();
    let ys: Vec<f64> = epochs
        .iter()
        .map(|&e| {
            let mean_log: f64 = runs
                .iter()
                .map(|r| r.trace[e - 1].opt_error.expect("completed cell").log10())
                .sum::<f64>()
                / runs.len() as f64;
            mean_log
        })
        .collect();
    let fit = testkit::ols_fit(&xs, &ys);
    let secs = start.elapsed().as_secs_f64();
    if fit.slope >= 0.0 {
        return Err(format!("slope {:.4} is not negative (eta {eta}, rho {rho})", fit.slope));
    }
    if fit.r2 <= 0.9 {
        return Err(format!("R^2 {:.4} <= 0.9 (eta {eta}, rho {rho})", fit.r2));
    }
    if secs > 120.0 {
        return Err(format!("runtime {secs:.1}s > 120s"));
    }
    Ok(format!(
        "best cell eta {eta}, rho {rho}: slope {:.3} decades/epoch, R^2 {:.3}",
        fit.slope, fit.r2
    ))
}

/// Epoch at which a run first reaches the gap threshold; one past the last
/// epoch if it never does.
fn first_reach(run: &RunResult, threshold: f64) -> usize {
    run.trace
        .iter()
        .find(|t| t.opt_error.is_some_and(|g| g <= threshold))
        .map(|t| t.epoch)
        .unwrap_or(run.trace.len() + 1)
}

/// At each method's best grid cell, the preconditioned method reaches a
/// 1e-6 optimality gap in no more epochs than plain SVRG for a majority of
/// seeds.
fn c08_curvature_benefit() -> Result<String, String> {
    const THRESHOLD: f64 = 1e-6;
    let (train, model, f_star) = adult_subsample();
    let nys_grid = run_grid(Method::NysSvrg, &model, &train, f_star);
    let svrg_grid = run_grid(Method::Svrg, &model, &train, f_star);
    let Some((nys_cell, nys_runs)) = best_cell(&nys_grid) else {
        return Err("no preconditioned cell completed".into());
    };
    let Some((svrg_cell, svrg_runs)) = best_cell(&svrg_grid) else {
        return Err("no baseline cell completed".into());
    };

    let mut wins = 0usize;
    let mut detail = Vec::new();
    for (a, b) in nys_runs.iter().zip(svrg_runs.iter()) {
        let na = first_reach(a, THRESHOLD);
        let nb = first_reach(b, THRESHOLD);
        if na <= nb {
            wins += 1;
        }
        detail.push(format!("{na}v{nb}"));
    }
    if wins * 2 <= GRID_SEEDS.len() {
        return Err(format!(
            "preconditioned method slower on most seeds (epochs to 1e-6, nys vs svrg: {})",
            detail.join(", ")
        ));
    }
    Ok(format!(
        "epochs to 1e-6 (nys vs svrg): {} at cells eta {} rho {} / eta {}",
        detail.join(", "),
        nys_cell.0,
        nys_cell.1,
        svrg_cell.0
    ))
}

/// The resolvent-difference bound: for 0 <= N <= H and lambda > 0,
/// ||(N+lambda I)^{-1} - (H+lambda I)^{-1}|| <= ||H-N|| / (lambda (||H-N|| + lambda)),
/// with equality in the scalar case N = 0, H = sigma I.
fn c09_closeness_bound() -> Result<String, String> {
    const SLACK: f64 = 1e-10;
    let mut rng = RngStream::raw(909);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..100 {
        let d = 2 + rng.uniform(14);
        let rank = 1 + rng.uniform(d);
        let h = testkit::random_spsd(&mut rng, d, rank);
        let lambda = 10f64.powf(-4.0 * rng.uniform_f64());
        let m = 1 + rng.uniform(d);
        let omega = nystrom::sample_columns(d, m, &mut rng).map_err(err_str)?;
        let mut c = DMat::zeros(d, m);
        for (j, &col) in omega.iter().enumerate() {
            c.set_column(j, &h.column(col));
        }
        let factor = nystrom::build_factor(&c, &omega, 1.0, m, nystrom::default_clamp(m), 0)
            .map_err(err_str)?;
        let n_mat = factor.dense_reconstruct().map_err(err_str)?;
        let (lhs, rhs) = diagnostics::newton_closeness(&h, &n_mat, lambda).map_err(err_str)?;
        worst_gap = worst_gap.max(lhs - rhs);
        if lhs > rhs + SLACK {
            return Err(format!("bound violated: lhs {lhs:.6e} > rhs {rhs:.6e}"));
        }
    }

    let mut max_eq_gap = 0.0f64;
    for sigma in [1e-3, 0.5, 2.0, 10.0] {
        for lambda in [1e-4, 1e-2, 1.0] {
            let d = 3;
            let h = DMat::identity(d, d) * sigma;
            let n = DMat::zeros(d, d);
            let (lhs, rhs) = diagnostics::newton_closeness(&h, &n, lambda).map_err(err_str)?;
            let gap = (lhs - rhs).abs() / rhs.max(1e-300);
            max_eq_gap = max_eq_gap.max(gap);
            if gap > 1e-10 {
                return Err(format!(
                    "scalar case sigma {sigma}, lambda {lambda}: |lhs-rhs|/rhs = {gap:.3e}"
                ));
            }
        }
    }
    Ok(format!(
        "100 instances, worst lhs-rhs {worst_gap:.1e}; scalar equality gap {max_eq_gap:.1e}"
    ))
}

/// Mean relative Frobenius error of the approximation is nonincreasing in
/// the column budget on a d = 123 logistic problem, and full sampling
/// reconstructs the Hessian to 1e-8.
fn c10_approximation_trend() -> Result<String, String> {
    let data = testkit::synth_adult_like(800, 23);
    let model = LossModel::new(LossKind::Logistic, 1e-3).map_err(err_str)?;
    let w = optim::least_squares_init(&model, &data).map_err(err_str)?;
    let m_grid = [5usize, 10, 25, 50, 123];
    let reports =
        diagnostics::quality_sweep(&model, &data, &w, &m_grid, 1e-3, 30).map_err(err_str)?;

    let mut means = Vec::new();
    for &m in &m_grid {
        let errs: Vec<f64> = reports
            .iter()
            .filter(|r| r.m == m)
            .map(|r| r.rel_error_fro)
            .collect();
        if errs.len() != 30 {
            return Err(format!("expected 30 draws at m={m}, got {}", errs.len()));
        }
        means.push(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    for pair in means.windows(2) {
        if pair[1] > pair[0] {
            return Err(format!("means not nonincreasing: {means:?}"));
        }
    }
    let full = *means.last().unwrap();
    if full > 1e-8 {
        return Err(format!("m = d mean error {full:.3e} > 1e-8"));
    }
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.1e}")).collect();
    Ok(format!("means over m {:?}: {}", m_grid, shown.join(" -> ")))
}

/// Averaging the variance-reduced direction over all n singleton batches
/// recovers the full gradient at w.
fn c11_unbiased_direction() -> Result<String, String> {
    const TOL: f64 = 1e-12;
    let (n, d) = (80, 20);
    let data = testkit::synth_dense(n, d, 1111);
    let model = LossModel::new(LossKind::Logistic, 1e-2).map_err(err_str)?;
    let all: Vec<usize> = (0..n).collect();
    let mut rng = RngStream::raw(1112);
    let mut max_rel = 0.0f64;
    for _ in 0..10 {
        let w = DVec::from_fn(d, |_, _| rng.normal());
        let w_snap = DVec::from_fn(d, |_, _| rng.normal());
        let g_full = model.grad(&data, &all, &w_snap);
        let mut avg = DVec::zeros(d);
        for i in 0..n {
            avg += optim::svrg_direction(&model, &data, &[i], &w, &w_snap, &g_full);
        }
        avg /= n as f64;
        let g_w = model.grad(&data, &all, &w);
        let rel = (&avg - &g_w).norm() / (1.0 + g_w.norm());
        max_rel = max_rel.max(rel);
        if rel > TOL {
            return Err(format!("bias {rel:.3e} > {TOL:.0e}"));
        }
    }
    Ok(format!("10 snapshot pairs, max bias {max_rel:.2e}"))
}

fn assert_bit_identical(a: &RunResult, b: &RunResult) -> Result<(), String> {
    if a.final_w != b.final_w {
        return Err("final iterates differ".into());
    }
    if a.trace.len() != b.trace.len() {
        return Err("trace lengths differ".into());
    }
    for (ra, rb) in a.trace.iter().zip(&b.trace) {
        if ra.train_loss != rb.train_loss || ra.grad_norm != rb.grad_norm {
            return Err(format!("epoch {} metrics differ", ra.epoch));
        }
    }
    Ok(())
}

/// With the factor forced to rank 0 and rho = 1, the preconditioned methods
/// replay their plain counterparts bit for bit.
fn c12_baseline_reduction() -> Result<String, String> {
    let train = testkit::synth_adult_like(500, 41);
    let model = LossModel::new(LossKind::Logistic, 1e-3).map_err(err_str)?;
    let base = OptimizerConfig {
        method: Method::NysSvrg,
        eta: 0.2,
        rho: 1.0,
        lambda: 1e-3,
        m: 10,
        k_max: Some(0),
        ell: None,
        batch_size: 64,
        epochs: 5,
        seed: 3,
        hessian_sample: None,
        init: Init::Zeros,
        batch_mode: BatchMode::WithReplacement,
        svrg_outer: Default::default(),
    };

    let mut svrg_cfg = base.clone();
    svrg_cfg.method = Method::Svrg;
    let a = optim::run(&base, &model, &train, None, None).map_err(err_str)?;
    let b = optim::run(&svrg_cfg, &model, &train, None, None).map_err(err_str)?;
    assert_bit_identical(&a, &b).map_err(|e| format!("svrg pair: {e}"))?;

    let mut nys_sgd = base.clone();
    nys_sgd.method = Method::NysSgd;
    let mut sgd = base;
    sgd.method = Method::Sgd;
    let c = optim::run(&nys_sgd, &model, &train, None, None).map_err(err_str)?;
    let d = optim::run(&sgd, &model, &train, None, None).map_err(err_str)?;
    assert_bit_identical(&c, &d).map_err(|e| format!("sgd pair: {e}"))?;
    Ok("both pairs bit-identical over 5 epochs".into())
}

fn strip_timing(text: &str) -> String {
    text.lines()
        .map(|line| {
            if line.starts_with('#') {
                return line.to_string();
            }
            line.split(',')
                .enumerate()
                .map(|(i, f)| if TIMING_COLUMNS.contains(&i) { "" } else { f })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A full experiment config rerun reproduces every trace byte for byte,
/// timing columns aside.
fn c13_determinism() -> Result<String, String> {
    let dir_a = tempfile::tempdir().map_err(err_str)?;
    let dir_b = tempfile::tempdir().map_err(err_str)?;
    let toml = format!(
        r#"
synthetic = "adult_like"
synthetic_n = 600
synthetic_test_n = 200
synthetic_seed = 7
loss = "logistic"
lambda_grid = [1e-3]
eta_grid = [0.25, 0.05]
rho_grid = [0.1]
methods = ["nys_sgd", "nys_svrg", "sgd", "svrg"]
m = 25
batch_size = 64
epochs = 3
seeds = [0, 1]
out_dir = "{}"
"#,
        dir_a.path().display()
    );
    let cfg = ExperimentConfig::from_toml_str(&toml).map_err(err_str)?;
    let mut cfg_b = cfg.clone();
    cfg_b.out_dir = dir_b.path().display().to_string();
    let a = run_experiment(cfg, &CliOverrides::default()).map_err(err_str)?;
    let b = run_experiment(cfg_b, &CliOverrides::default()).map_err(err_str)?;
    if a.summary.config_hash != b.summary.config_hash {
        return Err("config hashes differ between reruns".into());
    }
    if a.summary.runs.len() != b.summary.runs.len() {
        return Err("run counts differ".into());
    }
    for run in &a.summary.runs {
        let ta = fs::read_to_string(dir_a.path().join(&run.file)).map_err(err_str)?;
        let tb = fs::read_to_string(dir_b.path().join(&run.file)).map_err(err_str)?;
        if strip_timing(&ta) != strip_timing(&tb) {
            return Err(format!("{} differs between reruns", run.file));
        }
    }
    Ok(format!("{} traces identical modulo timing", a.summary.runs.len()))
}

/// Factor build time is close to linear in m: doubling m from 25 to 50 and
/// from 50 to 100 costs at most 2.6x each.
fn c14_build_time_scaling() -> Result<String, String> {
    let (n, d) = (4000, 200);
    let data = testkit::synth_dense(n, d, 77);
    let model = LossModel::new(LossKind::Logistic, 1e-3).map_err(err_str)?;
    let w = DVec::zeros(d);
    let all: Vec<usize> = (0..n).collect();
    let ms = [25usize, 50, 100];
    let mut best = [f64::INFINITY; 3];
    // one untimed warmup round, then interleaved repetitions so cold caches
    // and ambient load hit all three sizes alike
    for round in 0..8u64 {
        for (slot, &m) in ms.iter().enumerate() {
            let mut rng = RngStream::raw(1400 + round);
            let omega = nystrom::sample_columns(d, m, &mut rng).map_err(err_str)?;
            let start = Instant::now();
            let c = model.hessian_columns(&data, &all, &w, &omega).map_err(err_str)?;
            let factor = nystrom::build_factor(&c, &omega, 0.1, m, nystrom::default_clamp(m), 0)
                .map_err(err_str)?;
            let secs = start.elapsed().as_secs_f64();
            std::hint::black_box(factor.k());
            if round > 0 {
                best[slot] = best[slot].min(secs);
            }
        }
    }
    let r1 = best[1] / best[0];
    let r2 = best[2] / best[1];
    if r1 > 2.6 || r2 > 2.6 {
        return Err(format!(
            "doubling ratios {r1:.2}, {r2:.2} exceed 2.6 (times {best:?})"
        ));
    }
    Ok(format!(
        "build times {:.1}ms / {:.1}ms / {:.1}ms, doubling ratios {r1:.2}, {r2:.2}",
        best[0] * 1e3,
        best[1] * 1e3,
        best[2] * 1e3
    ))
}
