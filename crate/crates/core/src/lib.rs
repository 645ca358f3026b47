//! Stochastic second-order optimization with Nystrom-approximated Hessians.
//!
//! The crate builds a rank-`k` approximation `N = Z Z^T` of the Hessian of an
//! empirical-risk objective from `m` sampled Hessian columns, and applies the
//! regularized inverse `(N + rho I)^{-1}` to gradients in `O(d k)` per step.
//! The approximation plugs into SGD- and SVRG-style iteration engines, with
//! plain SGD/SVRG baselines, convergence traces, and Hessian-approximation
//! quality diagnostics.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod nystrom;
pub mod optim;
pub mod rng;
pub mod testkit;

pub use error::{Error, Result};
