//! Regularized empirical risk objectives: logistic, squared-hinge (l2-SVM),
//! and least-squares losses of the form
//!
//! ```text
//! f(w) = (1/n) sum_i f_i(w) + (lambda/2) ||w||^2
//! ```
//!
//! Each model exposes analytic loss, gradient, Hessian-column, and (small-d)
//! full-Hessian oracles. Weight vectors are plain dense [`DVec`]s. The l2
//! regularizer lives here, in the true Hessian; the separate Nystrom damping
//! `rho` is added by the factorization module and the two are never mixed.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{DMat, DVec, DENSE_CAP};

/// Objective family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Logistic,
    #[serde(rename = "l2svm")]
    L2Svm,
    Quadratic,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::L2Svm => "l2svm",
            LossKind::Quadratic => "quadratic",
        }
    }
}

/// `log(1 + exp(t))` without overflow on either tail.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + exp(-t))`, branch-stable.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// An objective with a fixed loss kind and l2 strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    kind: LossKind,
    lambda: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self { kind, lambda })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Per-sample loss given the margin-side quantities `z = x^T w` and `y`.
    fn sample_loss(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => softplus(-y * z),
            LossKind::L2Svm => {
                let m = 1.0 - y * z;
                if m > 0.0 {
                    m * m
                } else {
                    0.0
                }
            }
            LossKind::Quadratic => 0.5 * (z - y) * (z - y),
        }
    }

    /// Scalar multiplying `x_i` in the per-sample gradient.
    fn grad_coef(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => -y * sigmoid(-y * z),
            LossKind::L2Svm => {
                let m = 1.0 - y * z;
                if m > 0.0 {
                    -2.0 * y * m
                } else {
                    0.0
                }
            }
            LossKind::Quadratic => z - y,
        }
    }

    /// Scalar multiplying `x_i x_i^T` in the per-sample (generalized)
    /// Hessian. The squared hinge is C1 but not C2 at margin 1; samples
    /// sitting exactly on the kink are excluded, the standard generalized
    /// Hessian convention.
    fn hess_coef(&self, z: f64, y: f64) -> f64 {
        match self.kind {
            LossKind::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            LossKind::L2Svm => {
                if y * z < 1.0 {
                    2.0
                } else {
                    0.0
                }
            }
            LossKind::Quadratic => 1.0,
        }
    }

    /// Mean loss over `batch` plus the regularizer.
    pub fn loss(&self, data: &Dataset, batch: &[usize], w: &DVec) -> f64 {
        debug_assert!(!batch.is_empty());
        let mut acc = 0.0;
        for &i in batch {
            acc += self.sample_loss(data.dot_row(i, w), data.label(i));
        }
        acc / batch.len() as f64 + 0.5 * self.lambda * w.norm_squared()
    }

    /// Mean gradient over `batch` plus `lambda * w`.
    pub fn grad(&self, data: &Dataset, batch: &[usize], w: &DVec) -> DVec {
        debug_assert!(!batch.is_empty());
        let mut g = w * self.lambda;
        let inv = 1.0 / batch.len() as f64;
        for &i in batch {
            let coef = self.grad_coef(data.dot_row(i, w), data.label(i));
            if coef != 0.0 {
                data.add_row_scaled(i, coef * inv, &mut g);
            }
        }
        g
    }

    /// Columns `omega` of the Hessian of the objective restricted to
    /// `sample`: column `j` is `(1/|S|) sum_i h_i x_i[omega_j] x_i` plus
    /// `lambda e_{omega_j}`. Indices in `omega` must be distinct and `< d`.
    pub fn hessian_columns(
        &self,
        data: &Dataset,
        sample: &[usize],
        w: &DVec,
        omega: &[usize],
    ) -> Result<DMat> {
        debug_assert!(!sample.is_empty());
        let d = data.d();
        let m = omega.len();
        // position of each feature inside omega, or MAX if absent
        let mut pos = vec![usize::MAX; d];
        for (p, &j) in omega.iter().enumerate() {
            if j >= d {
                return Err(Error::Config(format!("omega index {j} out of range for d={d}")));
            }
            if pos[j] != usize::MAX {
                return Err(Error::Config(format!("duplicate omega index {j}")));
            }
            pos[j] = p;
        }

        let mut c = DMat::zeros(d, m);
        let inv = 1.0 / sample.len() as f64;
        for &i in sample {
            let h = self.hess_coef(data.dot_row(i, w), data.label(i));
            if h == 0.0 {
                continue;
            }
            let (idxs, vals) = data.row(i);
            for (&jf, &xv) in idxs.iter().zip(vals) {
                let p = pos[jf as usize];
                if p == usize::MAX {
                    continue;
                }
                let scale = h * xv * inv;
                for (&jj, &vv) in idxs.iter().zip(vals) {
                    c[(jj as usize, p)] += scale * vv;
                }
            }
        }
        for (p, &j) in omega.iter().enumerate() {
            c[(j, p)] += self.lambda;
        }
        Ok(c)
    }

    /// Dense `d x d` Hessian over all samples. Diagnostic use only; refuses
    /// dimensions above [`DENSE_CAP`]. Implemented as `hessian_columns` over
    /// every coordinate, so column consistency is exact by construction.
    pub fn full_hessian(&self, data: &Dataset, w: &DVec) -> Result<DMat> {
        let d = data.d();
        if d > DENSE_CAP {
            return Err(Error::DenseCap { d, cap: DENSE_CAP });
        }
        let all_rows: Vec<usize> = (0..data.n()).collect();
        let all_cols: Vec<usize> = (0..d).collect();
        self.hessian_columns(data, &all_rows, w, &all_cols)
    }

    /// Estimated strong-convexity and smoothness constants `(mu, Lambda)`:
    /// the extreme eigenvalues of the full Hessian at `w`. Small-d only.
    pub fn curvature_bounds(&self, data: &Dataset, w: &DVec) -> Result<(f64, f64)> {
        let h = self.full_hessian(data, w)?;
        let evals = crate::linalg::sym_eigenvalues(&h);
        let lo = evals.first().copied().unwrap_or(0.0);
        let hi = evals.last().copied().unwrap_or(0.0);
        Ok((lo, hi))
    }
}
