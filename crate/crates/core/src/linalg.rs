//! Small dense linear algebra for the Nystrom pipeline.
//!
//! Everything here operates on matrices of side `m` or `k`, both much smaller
//! than the problem dimension `d`; sparsity lives in the data layer. Backed by
//! nalgebra's symmetric eigendecomposition and Cholesky factorization behind
//! the contracts below.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};

pub type DMat = nalgebra::DMatrix<f64>;
pub type DVec = nalgebra::DVector<f64>;

/// Dimension cap for dense `d x d` work (test and diagnostic paths only).
pub const DENSE_CAP: usize = 2000;

/// Relative tolerance for the symmetry precondition.
const SYMMETRY_TOL: f64 = 1e-10;

/// Truncated eigendecomposition of a symmetric positive semidefinite matrix:
/// orthonormal eigenvectors (columns) paired with eigenvalues sorted
/// descending, all strictly above the clamp threshold.
#[derive(Debug, Clone)]
pub struct EigenPair {
    /// `m x k` matrix with orthonormal columns.
    pub vectors: DMat,
    /// `k` eigenvalues, descending, each above the clamp threshold.
    pub values: Vec<f64>,
}

impl EigenPair {
    /// Number of retained eigenpairs.
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Side of the decomposed matrix.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }
}

pub fn check_finite(m: &DMat, what: &str) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Truncated symmetric eigendecomposition.
///
/// The input is symmetrized as `(M + M^T)/2` before decomposition; its
/// intersection-block provenance only guarantees symmetry up to floating
/// error. Eigenvalues `<= clamp * max(lambda_max, 1)` are dropped, so the
/// returned rank may be below `k_max` when the spectrum decays.
pub fn sym_eig_truncated(m: &DMat, k_max: usize, clamp: f64) -> Result<EigenPair> {
    check_finite(m, "eigendecomposition input")?;
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidMatrix(format!(
            "expected square nonempty matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if clamp < 0.0 {
        return Err(Error::Config("clamp must be nonnegative".into()));
    }
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * m.norm().max(1.0) {
        return Err(Error::InvalidMatrix(format!(
            "matrix is asymmetric beyond tolerance (||M - M^T|| = {asym:.3e})"
        )));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);

    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let lambda_max = eig.eigenvalues[order[0]];
    let threshold = clamp * lambda_max.max(1.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > threshold)
        .take(k_max)
        .collect();

    let n = m.nrows();
    let mut vectors = DMat::zeros(n, kept.len());
    let mut values = Vec::with_capacity(kept.len());
    for (col, &i) in kept.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
        values.push(eig.eigenvalues[i]);
    }
    Ok(EigenPair { vectors, values })
}

/// Pseudo-inverse `U diag(1/values) U^T` from a truncated eigendecomposition.
/// An empty pair yields the zero matrix (pseudo-inverse of zero).
pub fn pinv_from_eig(e: &EigenPair) -> DMat {
    let n = e.dim();
    let mut out = DMat::zeros(n, n);
    for (col, &v) in e.values.iter().enumerate() {
        let u = e.vectors.column(col);
        // out += (1/v) * u u^T
        out.syger(1.0 / v, &u, &u, 1.0);
    }
    // syger fills the lower triangle; mirror it
    for i in 0..n {
        for j in (i + 1)..n {
            out[(i, j)] = out[(j, i)];
        }
    }
    out
}

/// Shared Cholesky factorization for one or many right-hand sides.
pub struct SpdFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
    a: DMat,
}

impl SpdFactor {
    pub fn new(a: &DMat) -> Result<Self> {
        check_finite(a, "SPD solve input")?;
        let chol = Cholesky::new(a.clone()).ok_or_else(|| {
            Error::Singular(format!("{}x{} system has a nonpositive pivot", a.nrows(), a.ncols()))
        })?;
        Ok(Self { chol, a: a.clone() })
    }

    /// Solve with one step of iterative refinement; keeps the relative
    /// residual at roundoff level even for condition numbers near 1e8.
    pub fn solve(&self, b: &DVec) -> DVec {
        let mut x = self.chol.solve(b);
        let bnorm = b.norm();
        if bnorm > 0.0 {
            for _ in 0..2 {
                let r = b - &self.a * &x;
                if r.norm() <= 1e-14 * bnorm {
                    break;
                }
                x += self.chol.solve(&r);
            }
        }
        x
    }

    /// Column-wise solve for a matrix right-hand side.
    pub fn solve_mat(&self, b: &DMat) -> DMat {
        let mut x = self.chol.solve(b);
        for _ in 0..2 {
            let r = b - &self.a * &x;
            if r.norm() <= 1e-14 * b.norm().max(1e-300) {
                break;
            }
            x += self.chol.solve(&r);
        }
        x
    }
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMat, b: &DVec) -> Result<DVec> {
    Ok(SpdFactor::new(a)?.solve(b))
}

/// Largest-magnitude eigenvalue of a symmetric matrix (its spectral norm).
pub fn sym_spectral_norm(m: &DMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    eig.eigenvalues.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMat) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
