//! Rank-k Nystrom approximation of a Hessian from `m` sampled columns, with
//! an O(dk) damped inverse apply.
//!
//! Given columns `C` of a symmetric PSD matrix `H` at index set `Omega`, the
//! intersection block `M = C[Omega, :]` is eigen-truncated to rank k and the
//! factor
//!
//! ```text
//! Z = C U_k S_k^{-1/2},   so  N = C M_k^+ C^T = Z Z^T ~ H
//! ```
//!
//! is formed. Solves against the damped approximation go through the
//! Woodbury identity
//!
//! ```text
//! (N + rho I)^{-1} v = (1/rho) v - Q (Z^T v),
//! Q = (1/rho^2) Z (I_k + (1/rho) Z^T Z)^{-1}
//! ```
//!
//! with `Q` precomputed once per factor build.

use crate::error::{Error, Result};
use crate::linalg::{self, DMat, DVec, SpdFactor, DENSE_CAP};
use crate::rng::RngStream;

/// Default eigenvalue clamp for an `m`-column intersection block: drops
/// spectrum below `1e-10 * m` relative to the largest eigenvalue, preventing
/// `S_k^{-1/2}` blow-up on numerically rank-deficient blocks.
pub fn default_clamp(m: usize) -> f64 {
    1e-10 * m as f64
}

/// Immutable low-rank factor of a damped Hessian approximation.
///
/// `k = 0` is a valid degenerate state (e.g. from an all-zero `C`) meaning
/// `N = 0`; the inverse apply then degrades gracefully to `v / rho`.
#[derive(Debug, Clone)]
pub struct NystromFactor {
    z: DMat,
    q: DMat,
    omega: Vec<usize>,
    rho: f64,
    k: usize,
    epoch: usize,
}

/// Draws `m` distinct column indices uniformly from `{0, .., d-1}`, sorted
/// ascending. Distinct (subset) sampling is used throughout: duplicate
/// columns add no information and make the intersection block singular.
pub fn sample_columns(d: usize, m: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if m == 0 || m > d {
        return Err(Error::Config(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    Ok(rng.sample_distinct_sorted(d, m))
}

/// Builds the factor from Hessian columns `C` (d x m) at indices `omega`.
///
/// `omega` must be distinct and in range; any order is accepted as long as
/// `omega[j]` names the column stored in `C[:, j]` (the factor is invariant
/// to a consistent permutation of the pair). `k_max` caps the retained rank
/// and `clamp` is the relative eigenvalue cutoff, usually
/// [`default_clamp`]`(m)`. `epoch` tags the factor with the rebuild counter.
pub fn build_factor(
    c: &DMat,
    omega: &[usize],
    rho: f64,
    k_max: usize,
    clamp: f64,
    epoch: usize,
) -> Result<NystromFactor> {
    linalg::check_finite(c, "Nystrom column matrix")?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Config(format!("rho must be positive and finite, got {rho}")));
    }
    let (d, m) = (c.nrows(), c.ncols());
    if omega.len() != m {
        return Err(Error::Config(format!("{} omega indices for {m} columns", omega.len())));
    }
    if m == 0 || m > d {
        return Err(Error::Config(format!("need 1 <= m <= d, got m={m}, d={d}")));
    }
    let mut seen = vec![false; d];
    for &j in omega {
        if j >= d {
            return Err(Error::Config(format!("omega index {j} out of range for d={d}")));
        }
        if seen[j] {
            return Err(Error::Config(format!("duplicate omega index {j}")));
        }
        seen[j] = true;
    }

    // intersection block: rows omega of C, symmetrized against floating skew
    let mut block = DMat::zeros(m, m);
    for (i, &row) in omega.iter().enumerate() {
        for j in 0..m {
            block[(i, j)] = c[(row, j)];
        }
    }
    let block = (&block + block.transpose()) * 0.5;

    let eig = linalg::sym_eig_truncated(&block, k_max.min(m), clamp)?;
    let k = eig.k();
    if k == 0 {
        return Ok(NystromFactor {
            z: DMat::zeros(d, 0),
            q: DMat::zeros(d, 0),
            omega: omega.to_vec(),
            rho,
            k: 0,
            epoch,
        });
    }

    // Z = C * U_k * S_k^{-1/2}
    let mut u_scaled = eig.vectors.clone();
    for (j, &s) in eig.values.iter().enumerate() {
        let inv_sqrt = 1.0 / s.sqrt();
        for i in 0..m {
            u_scaled[(i, j)] *= inv_sqrt;
        }
    }
    let z = c * u_scaled;
    let q = woodbury_q(&z, rho)?;
    Ok(NystromFactor { z, q, omega: omega.to_vec(), rho, k, epoch })
}

/// `Q = (1/rho^2) Z (I_k + (1/rho) Z^T Z)^{-1}` via a k x k Cholesky solve.
fn woodbury_q(z: &DMat, rho: f64) -> Result<DMat> {
    let k = z.ncols();
    if k == 0 {
        return Ok(DMat::zeros(z.nrows(), 0));
    }
    let gram = DMat::identity(k, k) + z.transpose() * z / rho;
    let factor = SpdFactor::new(&gram)?;
    // Q^T = (1/rho^2) G^{-1} Z^T
    let qt = factor.solve_mat(&z.transpose()) / (rho * rho);
    Ok(qt.transpose())
}

impl NystromFactor {
    /// The k = 0 factor: `N = 0`, inverse apply is plain `v / rho`. Used
    /// when preconditioning is disabled outright (`k_max = 0`).
    pub fn degenerate(d: usize, rho: f64, epoch: usize) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!("rho must be positive and finite, got {rho}")));
        }
        Ok(Self {
            z: DMat::zeros(d, 0),
            q: DMat::zeros(d, 0),
            omega: Vec::new(),
            rho,
            k: 0,
            epoch,
        })
    }

    /// Synthetic factor from a given `Z` (test and diagnostic use); the
    /// omega list is empty since no columns were sampled.
    pub fn from_z(z: DMat, rho: f64) -> Result<Self> {
        linalg::check_finite(&z, "Z")?;
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!("rho must be positive and finite, got {rho}")));
        }
        let k = z.ncols();
        let q = woodbury_q(&z, rho)?;
        Ok(Self { z, q, omega: Vec::new(), rho, k, epoch: 0 })
    }

    pub fn d(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn z(&self) -> &DMat {
        &self.z
    }

    pub fn q(&self) -> &DMat {
        &self.q
    }

    /// `(N + rho I)^{-1} v` in O(dk): `(1/rho) v - Q (Z^T v)`.
    pub fn apply_inverse(&self, v: &DVec) -> DVec {
        if self.k == 0 {
            return v / self.rho;
        }
        let ztv = self.z.transpose() * v;
        v / self.rho - &self.q * ztv
    }

    /// Largest eigenvalue of `N = Z Z^T`, computed on the k x k Gram matrix.
    pub fn lambda_max(&self) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        let gram = self.z.transpose() * &self.z;
        linalg::sym_eigenvalues(&gram).last().copied().unwrap_or(0.0).max(0.0)
    }

    /// Dense `N = Z Z^T`; diagnostic only, refuses `d` above the cap.
    pub fn dense_reconstruct(&self) -> Result<DMat> {
        let d = self.d();
        if d > DENSE_CAP {
            return Err(Error::DenseCap { d, cap: DENSE_CAP });
        }
        Ok(&self.z * self.z.transpose())
    }
}
