//! Iteration engines: stochastic gradient and variance-reduced methods, each
//! optionally preconditioned by a damped Nystrom inverse, plus plain SGD and
//! SVRG baselines sharing the same trace schema.
//!
//! Every run is fully determined by its config: batch draws, column draws,
//! Hessian subsampling, and the variance-reduction outer iterate each consume
//! a dedicated RNG stream derived from the run seed, so methods that share a
//! seed see identical batch sequences. Timing fields are the only
//! nondeterministic outputs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{BatchMode, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, DVec, DENSE_CAP};
use crate::loss::{LossKind, LossModel};
use crate::nystrom::{self, NystromFactor};
use crate::rng::{RngStream, Stream};

/// Method selector. The `nys_*` variants precondition their update with the
/// damped Nystrom inverse; the plain variants apply the raw direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NysSgd,
    NysSvrg,
    Sgd,
    Svrg,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::NysSgd => "nys_sgd",
            Method::NysSvrg => "nys_svrg",
            Method::Sgd => "sgd",
            Method::Svrg => "svrg",
        }
    }

    /// Variance-reduced methods count epochs on the outer loop.
    pub fn is_svrg_style(self) -> bool {
        matches!(self, Method::NysSvrg | Method::Svrg)
    }

    pub fn uses_factor(self) -> bool {
        matches!(self, Method::NysSgd | Method::NysSvrg)
    }
}

/// Starting point policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Ridge least-squares fit on the training split.
    LeastSquares,
    /// Caller-provided start (programmatic use only, not configurable from
    /// serialized configs).
    #[serde(skip)]
    Given(DVec),
}

impl Default for Init {
    fn default() -> Self {
        Init::LeastSquares
    }
}

/// Which inner iterate becomes the next variance-reduction snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterIterate {
    /// A uniformly random inner iterate, the variant the convergence
    /// analysis assumes.
    #[default]
    RandomIterate,
    /// The last inner iterate; common in practice but outside the analyzed
    /// scheme.
    LastIterate,
}

fn default_rho() -> f64 {
    0.1
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

/// Full run specification. `lambda` must agree with the loss model the run
/// is handed; the duplication exists so a config alone pins the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Step size, constant across the run.
    pub eta: f64,
    /// Damping added to the Nystrom approximation before inversion.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// l2 regularization strength of the objective.
    #[serde(default)]
    pub lambda: f64,
    /// Number of Hessian columns sampled per factor build.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Hard cap on the factor rank; defaults to `m` (clamp-limited).
    #[serde(default)]
    pub k_max: Option<usize>,
    /// Factor refresh period in iterations (gradient methods) or inner loop
    /// length (variance-reduced methods); defaults to one pass,
    /// `ceil(n / batch_size)`.
    #[serde(default)]
    pub ell: Option<usize>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Rows used when estimating Hessian columns; `None` means the full
    /// training set.
    #[serde(default)]
    pub hessian_sample: Option<usize>,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_batch_mode")]
    pub batch_mode: BatchMode,
    #[serde(default)]
    pub svrg_outer: OuterIterate,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return fail(format!("eta must be positive and finite, got {}", self.eta));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return fail(format!("rho must be positive and finite, got {}", self.rho));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return fail(format!("lambda must be nonnegative and finite, got {}", self.lambda));
        }
        if self.m == 0 {
            return fail("m must be at least 1".into());
        }
        if self.ell == Some(0) {
            return fail("ell must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.hessian_sample == Some(0) {
            return fail("hessian_sample must be at least 1".into());
        }
        Ok(())
    }

    pub fn iterations_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    pub fn resolved_ell(&self, n: usize) -> usize {
        self.ell.unwrap_or_else(|| self.iterations_per_epoch(n))
    }

    pub fn resolved_k_max(&self) -> usize {
        self.k_max.unwrap_or(self.m).min(self.m)
    }
}

/// One per-epoch measurement row. `opt_error` is `f(w) - f*` and present
/// only when a reference optimum was supplied; `test_error_rate` requires a
/// test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub wall_time_s: f64,
    pub train_loss: f64,
    pub opt_error: Option<f64>,
    pub test_error_rate: Option<f64>,
    pub grad_norm: f64,
    pub factor_rank: usize,
    pub factor_build_time_s: f64,
}

/// Terminal state of a run. Divergence is an expected outcome for bad grid
/// cells, not an error: the trace up to the last finite epoch is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged {
        epoch: usize,
        iteration: usize,
        /// Last measured train loss, if it was finite.
        last_loss: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub final_w: DVec,
    pub status: RunStatus,
}

/// Loss blowup factor over the initial loss that counts as divergence.
const DIVERGENCE_FACTOR: f64 = 1e3;

/// Fraction of test rows misclassified by `sign(x^T w)`, with ties broken
/// toward +1.
pub fn classification_error(data: &Dataset, w: &DVec) -> f64 {
    let mut wrong = 0usize;
    for i in 0..data.n() {
        let pred = if data.dot_row(i, w) >= 0.0 { 1.0 } else { -1.0 };
        if pred != data.label(i) {
            wrong += 1;
        }
    }
    wrong as f64 / data.n() as f64
}

/// Conjugate gradients on the ridge normal equations
/// `((1/n) X^T X + lambda I) w = b`, with matrix products streamed off the
/// sparse rows. Used above the dense cap.
fn cg_normal_equations(data: &Dataset, lambda: f64, b: &DVec, max_iter: usize, tol: f64) -> DVec {
    let n = data.n() as f64;
    let d = data.d();
    let matvec = |v: &DVec| -> DVec {
        let mut out = v * lambda;
        for i in 0..data.n() {
            let zi = data.dot_row(i, v);
            if zi != 0.0 {
                data.add_row_scaled(i, zi / n, &mut out);
            }
        }
        out
    };
    let mut w = DVec::zeros(d);
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs = r.norm_squared();
    let stop = tol * b.norm();
    for _ in 0..max_iter {
        if rs.sqrt() <= stop {
            break;
        }
        let ap = matvec(&p);
        let alpha = rs / p.dot(&ap);
        w.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rs_new = r.norm_squared();
        p = &r + &p * (rs_new / rs);
        rs = rs_new;
    }
    w
}

/// Ridge least-squares fit `argmin (1/2n)||Xw - y||^2 + (lam/2)||w||^2` on
/// the training split, the standard warm start for these methods. Uses the
/// model's lambda floored at 1e-8 so rank-deficient designs stay solvable;
/// solves directly up to the dense cap and by conjugate gradients above it.
pub fn least_squares_init(model: &LossModel, data: &Dataset) -> Result<DVec> {
    let lam = model.lambda().max(1e-8);
    let n = data.n() as f64;
    let d = data.d();
    let mut b = DVec::zeros(d);
    for i in 0..data.n() {
        data.add_row_scaled(i, data.label(i) / n, &mut b);
    }
    if d <= DENSE_CAP {
        let quad = LossModel::new(LossKind::Quadratic, lam)?;
        let a = quad.full_hessian(data, &DVec::zeros(d))?;
        linalg::spd_solve(&a, &b)
    } else {
        Ok(cg_normal_equations(data, lam, &b, 200, 1e-12))
    }
}

fn initial_point(config: &OptimizerConfig, model: &LossModel, train: &Dataset) -> Result<DVec> {
    match &config.init {
        Init::Zeros => Ok(DVec::zeros(train.d())),
        Init::LeastSquares => least_squares_init(model, train),
        Init::Given(w) => {
            if w.len() != train.d() {
                return Err(Error::Config(format!(
                    "given init has dimension {}, data has {}",
                    w.len(),
                    train.d()
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("given init has non-finite entries".into()));
            }
            Ok(w.clone())
        }
    }
}

/// Variance-reduced direction `grad_B(w) - grad_B(w_snap) + g_full`, where
/// `g_full` is the full gradient at the snapshot. At `w == w_snap` the batch
/// terms cancel bitwise and the direction is exactly `g_full`.
pub fn svrg_direction(
    model: &LossModel,
    data: &Dataset,
    batch: &[usize],
    w: &DVec,
    w_snap: &DVec,
    g_full: &DVec,
) -> DVec {
    let gw = model.grad(data, batch, w);
    let gs = model.grad(data, batch, w_snap);
    gw - gs + g_full
}

/// Shared per-epoch measurement state.
struct Meter<'a> {
    model: &'a LossModel,
    train: &'a Dataset,
    test: Option<&'a Dataset>,
    f_star: Option<f64>,
    all: Vec<usize>,
    start: Instant,
}

impl<'a> Meter<'a> {
    fn new(
        model: &'a LossModel,
        train: &'a Dataset,
        test: Option<&'a Dataset>,
        f_star: Option<f64>,
    ) -> Self {
        Self { model, train, test, f_star, all: (0..train.n()).collect(), start: Instant::now() }
    }

    fn train_loss(&self, w: &DVec) -> f64 {
        self.model.loss(self.train, &self.all, w)
    }

    fn full_grad(&self, w: &DVec) -> DVec {
        self.model.grad(self.train, &self.all, w)
    }

    fn record(&self, epoch: usize, w: &DVec, factor_rank: usize, build_time_s: f64) -> TraceRecord {
        let train_loss = self.train_loss(w);
        TraceRecord {
            epoch,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            train_loss,
            opt_error: self.f_star.map(|fs| train_loss - fs),
            test_error_rate: self.test.map(|t| classification_error(t, w)),
            grad_norm: self.full_grad(w).norm(),
            factor_rank,
            factor_build_time_s: build_time_s,
        }
    }
}

/// Context shared by the run entry points after validation.
struct RunCtx<'a> {
    config: &'a OptimizerConfig,
    model: &'a LossModel,
    train: &'a Dataset,
    meter: Meter<'a>,
    col_rng: RngStream,
    hess_rng: RngStream,
    tau: usize,
}

impl<'a> RunCtx<'a> {
    fn new(
        config: &'a OptimizerConfig,
        model: &'a LossModel,
        train: &'a Dataset,
        test: Option<&'a Dataset>,
        f_star: Option<f64>,
        expect: &[Method],
    ) -> Result<Self> {
        config.validate()?;
        if !expect.contains(&config.method) {
            return Err(Error::Config(format!(
                "method {} not handled by this entry point",
                config.method.as_str()
            )));
        }
        if (config.lambda - model.lambda()).abs() != 0.0 {
            return Err(Error::Config(format!(
                "config lambda {} disagrees with model lambda {}",
                config.lambda,
                model.lambda()
            )));
        }
        if config.method.uses_factor() && config.resolved_k_max() > 0 && config.m > train.d() {
            return Err(Error::Config(format!(
                "m={} exceeds feature dimension d={}",
                config.m,
                train.d()
            )));
        }
        if let Some(s) = config.hessian_sample {
            if s > train.n() {
                return Err(Error::Config(format!(
                    "hessian_sample {s} exceeds sample count {}",
                    train.n()
                )));
            }
        }
        Ok(Self {
            config,
            model,
            train,
            meter: Meter::new(model, train, test, f_star),
            col_rng: RngStream::new(config.seed, Stream::Columns),
            hess_rng: RngStream::new(config.seed, Stream::HessianSample),
            tau: 0,
        })
    }

    /// Rebuilds the factor at the current point, advancing the build
    /// counter. With `k_max = 0` no columns are formed and the degenerate
    /// factor (pure `1/rho` scaling) is returned directly.
    fn refresh_factor(&mut self, w: &DVec) -> Result<NystromFactor> {
        self.tau += 1;
        let cfg = self.config;
        let k_max = cfg.resolved_k_max();
        if k_max == 0 {
            return NystromFactor::degenerate(self.train.d(), cfg.rho, self.tau);
        }
        let omega = nystrom::sample_columns(self.train.d(), cfg.m, &mut self.col_rng)?;
        let sample: Vec<usize> = match cfg.hessian_sample {
            None => (0..self.train.n()).collect(),
            Some(s) => self.hess_rng.sample_distinct_sorted(self.train.n(), s),
        };
        let c = self.model.hessian_columns(self.train, &sample, w, &omega)?;
        nystrom::build_factor(&c, &omega, cfg.rho, k_max, nystrom::default_clamp(cfg.m), self.tau)
    }
}

fn finite(w: &DVec) -> bool {
    w.iter().all(|x| x.is_finite())
}

/// Stochastic gradient loop with a periodically refreshed Nystrom
/// preconditioner: every `ell` iterations the factor is rebuilt at the
/// current iterate, and each step applies the damped inverse to a mini-batch
/// gradient. An epoch is `ceil(n / batch_size)` iterations.
pub fn run_nys_sgd(
    config: &OptimizerConfig,
    model: &LossModel,
    train: &Dataset,
    test: Option<&Dataset>,
    f_star: Option<f64>,
) -> Result<RunResult> {
    let mut ctx = RunCtx::new(config, model, train, test, f_star, &[Method::NysSgd])?;
    let n = train.n();
    let ipe = config.iterations_per_epoch(n);
    let ell = config.resolved_ell(n);
    let mut sampler = BatchSampler::new(config.seed, config.batch_size, config.batch_mode);

    let mut w = initial_point(config, model, train)?;
    let initial_loss = ctx.meter.train_loss(&w);
    if !initial_loss.is_finite() {
        return Ok(RunResult {
            trace: Vec::new(),
            final_w: w,
            status: RunStatus::Diverged { epoch: 0, iteration: 0, last_loss: None },
        });
    }

    let mut factor = NystromFactor::degenerate(train.d(), config.rho, 0)?;
    let mut trace = Vec::with_capacity(config.epochs);
    let mut last_good = w.clone();
    let mut t = 0usize;

    for epoch in 1..=config.epochs {
        let mut build_time = 0.0;
        for _ in 0..ipe {
            t += 1;
            if (t - 1) % ell == 0 {
                let tick = Instant::now();
                factor = ctx.refresh_factor(&w)?;
                build_time += tick.elapsed().as_secs_f64();
            }
            let batch = sampler.next_batch(n)?;
            let v = model.grad(train, &batch, &w);
            let dir = factor.apply_inverse(&v);
            w.axpy(-config.eta, &dir, 1.0);
            if !finite(&w) {
                return Ok(RunResult {
                    trace,
                    final_w: last_good,
                    status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
                });
            }
        }
        let rec = ctx.meter.record(epoch, &w, factor.k(), build_time);
        let loss = rec.train_loss;
        if !loss.is_finite() {
            return Ok(RunResult {
                trace,
                final_w: last_good,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
            });
        }
        trace.push(rec);
        if loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE) {
            return Ok(RunResult {
                trace,
                final_w: w,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: Some(loss) },
            });
        }
        last_good.copy_from(&w);
    }
    Ok(RunResult { trace, final_w: w, status: RunStatus::Completed })
}

/// Variance-reduced loop with a per-snapshot Nystrom preconditioner. Each
/// outer epoch computes the full gradient at the snapshot, rebuilds the
/// factor there, runs `ell` preconditioned inner steps, and promotes a
/// uniformly random inner iterate (or the last, if configured) to the next
/// snapshot.
pub fn run_nys_svrg(
    config: &OptimizerConfig,
    model: &LossModel,
    train: &Dataset,
    test: Option<&Dataset>,
    f_star: Option<f64>,
) -> Result<RunResult> {
    let mut ctx = RunCtx::new(config, model, train, test, f_star, &[Method::NysSvrg])?;
    svrg_engine(&mut ctx, true)
}

/// Plain SGD and SVRG baselines over the identical trace schema, batch
/// stream, and (for SVRG) snapshot selection stream, so preconditioned and
/// plain runs with the same seed are batch-for-batch comparable.
pub fn run_baseline(
    config: &OptimizerConfig,
    model: &LossModel,
    train: &Dataset,
    test: Option<&Dataset>,
    f_star: Option<f64>,
) -> Result<RunResult> {
    match config.method {
        Method::Sgd => {
            let mut ctx = RunCtx::new(config, model, train, test, f_star, &[Method::Sgd])?;
            sgd_engine(&mut ctx)
        }
        Method::Svrg => {
            let mut ctx = RunCtx::new(config, model, train, test, f_star, &[Method::Svrg])?;
            svrg_engine(&mut ctx, false)
        }
        other => {
            Err(Error::Config(format!("method {} is not a baseline", other.as_str())))
        }
    }
}

/// Dispatch on `config.method`.
pub fn run(
    config: &OptimizerConfig,
    model: &LossModel,
    train: &Dataset,
    test: Option<&Dataset>,
    f_star: Option<f64>,
) -> Result<RunResult> {
    match config.method {
        Method::NysSgd => run_nys_sgd(config, model, train, test, f_star),
        Method::NysSvrg => run_nys_svrg(config, model, train, test, f_star),
        Method::Sgd | Method::Svrg => run_baseline(config, model, train, test, f_star),
    }
}

fn sgd_engine(ctx: &mut RunCtx) -> Result<RunResult> {
    let config = ctx.config;
    let (model, train) = (ctx.model, ctx.train);
    let n = train.n();
    let ipe = config.iterations_per_epoch(n);
    let mut sampler = BatchSampler::new(config.seed, config.batch_size, config.batch_mode);

    let mut w = initial_point(config, model, train)?;
    let initial_loss = ctx.meter.train_loss(&w);
    if !initial_loss.is_finite() {
        return Ok(RunResult {
            trace: Vec::new(),
            final_w: w,
            status: RunStatus::Diverged { epoch: 0, iteration: 0, last_loss: None },
        });
    }
    let mut trace = Vec::with_capacity(config.epochs);
    let mut last_good = w.clone();
    let mut t = 0usize;

    for epoch in 1..=config.epochs {
        for _ in 0..ipe {
            t += 1;
            let batch = sampler.next_batch(n)?;
            let v = model.grad(train, &batch, &w);
            w.axpy(-config.eta, &v, 1.0);
            if !finite(&w) {
                return Ok(RunResult {
                    trace,
                    final_w: last_good,
                    status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
                });
            }
        }
        let rec = ctx.meter.record(epoch, &w, 0, 0.0);
        let loss = rec.train_loss;
        if !loss.is_finite() {
            return Ok(RunResult {
                trace,
                final_w: last_good,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
            });
        }
        trace.push(rec);
        if loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE) {
            return Ok(RunResult {
                trace,
                final_w: w,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: Some(loss) },
            });
        }
        last_good.copy_from(&w);
    }
    Ok(RunResult { trace, final_w: w, status: RunStatus::Completed })
}

/// Shared variance-reduced engine. With `preconditioned = false` the factor
/// is never built and directions are applied raw, which reproduces plain
/// SVRG; the RNG stream usage is identical either way, so the two variants
/// see the same batches and snapshot choices.
fn svrg_engine(ctx: &mut RunCtx, preconditioned: bool) -> Result<RunResult> {
    let config = ctx.config;
    let (model, train) = (ctx.model, ctx.train);
    let n = train.n();
    let ell = config.resolved_ell(n);
    let mut sampler = BatchSampler::new(config.seed, config.batch_size, config.batch_mode);
    let mut outer_rng = RngStream::new(config.seed, Stream::OuterIterate);

    let mut snap = initial_point(config, model, train)?;
    let initial_loss = ctx.meter.train_loss(&snap);
    if !initial_loss.is_finite() {
        return Ok(RunResult {
            trace: Vec::new(),
            final_w: snap,
            status: RunStatus::Diverged { epoch: 0, iteration: 0, last_loss: None },
        });
    }
    let mut trace = Vec::with_capacity(config.epochs);
    let mut last_good = snap.clone();
    let mut t = 0usize;

    for epoch in 1..=config.epochs {
        let g_full = ctx.meter.full_grad(&snap);
        let mut build_time = 0.0;
        let mut rank = 0usize;
        let factor = if preconditioned {
            let tick = Instant::now();
            let f = ctx.refresh_factor(&snap)?;
            build_time = tick.elapsed().as_secs_f64();
            rank = f.k();
            Some(f)
        } else {
            None
        };
        // chosen before the inner loop so iterates need not be stored
        let pick = outer_rng.uniform(ell) + 1;

        let mut w = snap.clone();
        let mut picked: Option<DVec> = None;
        let mut blew_up = false;
        for inner in 1..=ell {
            t += 1;
            let batch = sampler.next_batch(n)?;
            let v = svrg_direction(model, train, &batch, &w, &snap, &g_full);
            match &factor {
                Some(f) => {
                    let dir = f.apply_inverse(&v);
                    w.axpy(-config.eta, &dir, 1.0);
                }
                None => w.axpy(-config.eta, &v, 1.0),
            }
            if !finite(&w) {
                blew_up = true;
                break;
            }
            if inner == pick {
                picked = Some(w.clone());
            }
        }
        if blew_up {
            return Ok(RunResult {
                trace,
                final_w: last_good,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
            });
        }
        snap = match config.svrg_outer {
            OuterIterate::RandomIterate => picked.expect("pick index within 1..=ell"),
            OuterIterate::LastIterate => w,
        };

        let rec = ctx.meter.record(epoch, &snap, rank, build_time);
        let loss = rec.train_loss;
        if !loss.is_finite() {
            return Ok(RunResult {
                trace,
                final_w: last_good,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: None },
            });
        }
        trace.push(rec);
        if loss > DIVERGENCE_FACTOR * initial_loss.max(f64::MIN_POSITIVE) {
            return Ok(RunResult {
                trace,
                final_w: snap,
                status: RunStatus::Diverged { epoch, iteration: t, last_loss: Some(loss) },
            });
        }
        last_good.copy_from(&snap);
    }
    Ok(RunResult { trace, final_w: snap, status: RunStatus::Completed })
}

/// Step-size admissibility against the linear-convergence conditions for the
/// preconditioned variance-reduced method, using estimated curvature
/// constants: strong convexity `mu`, smoothness `Lambda`, and the largest
/// approximation eigenvalue `Gamma`. With `delta_lo = 1/(Gamma + rho)` and
/// `delta_hi = 1/rho` (the extreme eigenvalues of the damped inverse), the
/// conditions are
///
/// ```text
/// step_size_bound:  eta < mu delta_lo / (2 Lambda^2 delta_hi^2)
/// frequency_bound:  1/(2 ell eta) + 2 eta Lambda^2 delta_hi^2 < mu delta_lo
/// ```
///
/// and the implied per-epoch contraction factor is
/// `alpha = (1 + 2 ell eta^2 Lambda^2 delta_hi^2) /
///          (2 ell eta (mu delta_lo - eta Lambda^2 delta_hi^2))`.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub eta_bound: f64,
    pub step_size_ok: bool,
    pub frequency_lhs: f64,
    pub frequency_rhs: f64,
    pub frequency_ok: bool,
    /// `None` when the contraction denominator is nonpositive.
    pub alpha: Option<f64>,
    pub admissible: bool,
    pub violated: Vec<String>,
}

pub fn check_step_admissibility(
    config: &OptimizerConfig,
    mu_est: f64,
    lambda_est: f64,
    gamma_est: f64,
) -> Result<AdmissibilityReport> {
    if !(mu_est > 0.0) || !(lambda_est > 0.0) || !(gamma_est >= 0.0) {
        return Err(Error::Config(format!(
            "curvature estimates must be positive (mu={mu_est}, Lambda={lambda_est}) \
             and Gamma nonnegative (Gamma={gamma_est})"
        )));
    }
    let Some(ell) = config.ell else {
        return Err(Error::Config("admissibility check needs an explicit ell".into()));
    };
    config.validate()?;
    let eta = config.eta;
    let delta_lo = 1.0 / (gamma_est + config.rho);
    let delta_hi = 1.0 / config.rho;
    let curv = lambda_est * lambda_est * delta_hi * delta_hi;

    let eta_bound = mu_est * delta_lo / (2.0 * curv);
    let step_size_ok = eta < eta_bound;

    let frequency_lhs = 1.0 / (2.0 * ell as f64 * eta) + 2.0 * eta * curv;
    let frequency_rhs = mu_est * delta_lo;
    let frequency_ok = frequency_lhs < frequency_rhs;

    let denom = 2.0 * ell as f64 * eta * (mu_est * delta_lo - eta * curv);
    let alpha = if denom > 0.0 {
        Some((1.0 + 2.0 * ell as f64 * eta * eta * curv) / denom)
    } else {
        None
    };

    let mut violated = Vec::new();
    if !step_size_ok {
        violated.push("step_size_bound".to_string());
    }
    if !frequency_ok {
        violated.push("frequency_bound".to_string());
    }
    Ok(AdmissibilityReport {
        delta_lo,
        delta_hi,
        eta_bound,
        step_size_ok,
        frequency_lhs,
        frequency_rhs,
        frequency_ok,
        alpha,
        admissible: step_size_ok && frequency_ok,
        violated,
    })
}

/// Deterministic damped-Newton reference minimizer with Armijo
/// backtracking; used to pin `f*` for optimality-gap traces. Dense-cap only.
/// Returns the best iterate found and its objective value.
pub fn newton_reference(
    model: &LossModel,
    data: &Dataset,
    max_iter: usize,
    grad_tol: f64,
) -> Result<(DVec, f64)> {
    let all: Vec<usize> = (0..data.n()).collect();
    let mut w = least_squares_init(model, data)?;
    let mut best_f = model.loss(data, &all, &w);
    let mut best_w = w.clone();

    for _ in 0..max_iter {
        let g = model.grad(data, &all, &w);
        if g.norm() <= grad_tol {
            break;
        }
        let h = model.full_hessian(data, &w)?;
        let p = match linalg::spd_solve(&h, &g) {
            Ok(p) => p,
            // flat directions (e.g. unregularized piecewise objectives):
            // retry with a small ridge
            Err(_) => {
                let mut hr = h.clone();
                for i in 0..hr.nrows() {
                    hr[(i, i)] += 1e-8;
                }
                linalg::spd_solve(&hr, &g)?
            }
        };
        let f0 = model.loss(data, &all, &w);
        let slope = g.dot(&p);
        let mut s = 1.0;
        let mut trial = &w - &p * s;
        while model.loss(data, &all, &trial) > f0 - 1e-4 * s * slope && s > 1e-12 {
            s *= 0.5;
            trial = &w - &p * s;
        }
        w = trial;
        let f = model.loss(data, &all, &w);
        if f < best_f {
            best_f = f;
            best_w.copy_from(&w);
        }
    }
    Ok((best_w, best_f))
}
