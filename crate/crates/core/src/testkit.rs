//! Deterministic generators and numerical oracles used by the test suites.
//!
//! Everything here is seed-driven and platform-stable, so tests that compare
//! against these oracles reproduce exactly. The finite-difference oracles
//! deliberately evaluate only scalar loss values, keeping them independent of
//! the analytic gradient and Hessian code they are used to check.

use crate::data::Dataset;
use crate::linalg::{DMat, DVec};
use crate::rng::RngStream;

/// Dense matrix with independent standard normal entries.
pub fn random_dense(rng: &mut RngStream, rows: usize, cols: usize) -> DMat {
    DMat::from_fn(rows, cols, |_, _| rng.normal())
}

/// Unit-norm random direction.
pub fn random_unit(rng: &mut RngStream, d: usize) -> DVec {
    let mut v = DVec::from_fn(d, |_, _| rng.normal());
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v
}

/// Random orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut RngStream, d: usize) -> DMat {
    random_dense(rng, d, d).qr().q()
}

/// Random symmetric positive semidefinite matrix of the given rank:
/// `G * G^T` with `G` of shape `d x rank`.
pub fn random_spsd(rng: &mut RngStream, d: usize, rank: usize) -> DMat {
    let g = random_dense(rng, d, rank);
    let mut m = &g * g.transpose();
    // force exact symmetry so downstream symmetry checks see zero skew
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Random symmetric positive definite matrix with condition number `cond`:
/// eigenvalues log-spaced in `[1/cond, 1]` under a random orthogonal basis.
pub fn random_spd_with_cond(rng: &mut RngStream, d: usize, cond: f64) -> DMat {
    assert!(cond >= 1.0 && d >= 1);
    let q = random_orthogonal(rng, d);
    let evals = DVec::from_fn(d, |i, _| {
        if d == 1 {
            1.0
        } else {
            let t = i as f64 / (d - 1) as f64;
            (-t * cond.ln()).exp()
        }
    });
    let mut m = &q * DMat::from_diagonal(&evals) * q.transpose();
    for i in 0..d {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

/// Central-difference gradient of a scalar function,
/// step `h = 1e-6 * (1 + ||w||)`.
pub fn fd_gradient(f: impl Fn(&DVec) -> f64, w: &DVec) -> DVec {
    let h = 1e-6 * (1.0 + w.norm());
    let mut g = DVec::zeros(w.len());
    let mut wp = w.clone();
    for i in 0..w.len() {
        wp[i] = w[i] + h;
        let fp = f(&wp);
        wp[i] = w[i] - h;
        let fm = f(&wp);
        wp[i] = w[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Column `j` of the Hessian of a scalar function by second-order central
/// differences on the function values alone, step `h = 1e-4 * (1 + ||w||)`.
pub fn fd_hessian_column(f: impl Fn(&DVec) -> f64, w: &DVec, j: usize) -> DVec {
    let h = 1e-4 * (1.0 + w.norm());
    let d = w.len();
    let mut col = DVec::zeros(d);
    let mut x = w.clone();
    for i in 0..d {
        if i == j {
            // f(w+h e_j) - 2 f(w) + f(w-h e_j)
            x[j] = w[j] + h;
            let fp = f(&x);
            x[j] = w[j] - h;
            let fm = f(&x);
            x[j] = w[j];
            col[i] = (fp - 2.0 * f(w) + fm) / (h * h);
        } else {
            x[i] = w[i] + h;
            x[j] = w[j] + h;
            let fpp = f(&x);
            x[j] = w[j] - h;
            let fpm = f(&x);
            x[i] = w[i] - h;
            let fmm = f(&x);
            x[j] = w[j] + h;
            let fmp = f(&x);
            x[i] = w[i];
            x[j] = w[j];
            col[i] = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    col
}

/// Ordinary least squares line fit.
#[derive(Debug, Clone, Copy)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fits `y = slope * x + intercept` and reports the coefficient of
/// determination. Requires at least two points with distinct x.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> OlsFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    assert!(sxx > 0.0, "degenerate x values in OLS fit");
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    OlsFit { slope, intercept, r2 }
}

/// Sparse binary classification data shaped like the adult census split:
/// `d = 123` one-hot style features, about 14 active per row, labels drawn
/// from a planted logistic model.
pub fn synth_adult_like(n: usize, seed: u64) -> Dataset {
    let d = 123;
    let nnz = 14;
    let mut rng = RngStream::raw(seed);
    let scale = 1.0 / (nnz as f64).sqrt();
    let w_star: Vec<f64> = (0..d).map(|_| rng.normal() * scale).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let idxs = rng.sample_distinct_sorted(d, nnz);
        let margin: f64 = idxs.iter().map(|&j| w_star[j]).sum();
        let p = 1.0 / (1.0 + (-margin).exp());
        let y = if rng.uniform_f64() < p { 1.0 } else { -1.0 };
        rows.push(idxs.into_iter().map(|j| (j, 1.0)).collect::<Vec<_>>());
        labels.push(y);
    }
    Dataset::from_rows(&rows, &labels, d).expect("synthetic rows are valid")
}

/// Dense Gaussian design with labels from a planted hyperplane plus label
/// noise; useful for small smooth-loss tests.
pub fn synth_dense(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::raw(seed);
    let w_star: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let margin: f64 = x.iter().zip(&w_star).map(|(a, b)| a * b).sum();
        let noisy = margin + 0.1 * rng.normal();
        labels.push(if noisy >= 0.0 { 1.0 } else { -1.0 });
        rows.push(x.into_iter().enumerate().collect::<Vec<_>>());
    }
    Dataset::from_rows(&rows, &labels, d).expect("synthetic rows are valid")
}
