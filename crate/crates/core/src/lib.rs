//! Low-rank semidefinite programming via penalized Burer-Monteiro
//! factorization with Gaussian-smoothed costs.
//!
//! Module map:
//! - [`sparse`]: symmetric coordinate matrices and their factored inner
//!   products.
//! - [`linalg`]: power iteration, Lanczos smallest-eigenvalue estimation,
//!   PSD projection.
//! - [`operator`]: the constraint map A(X) = b, compactifier row, norms and
//!   rank.
//! - [`perturb`]: GOE perturbation sampling and c0 calibration.
//! - [`penalty`]: penalized objectives, derivatives, smoothness bounds, and
//!   the (B, k, eps) planner.
//! - [`solve`]: saddle-escaping first-order solvers and the smallest Hessian
//!   eigenvalue oracle.
//! - [`certify`]: second-order and global-optimality certificates.
//! - [`problems`]: problem generators (Max-Cut, matrix completion, the
//!   hard-instance families) and their witnesses.
//! - [`io`]: text formats for problems, matrices, and traces.
//! - [`cli`]: the command-line front end.

pub mod certify;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod penalty;
pub mod perturb;
pub mod problems;
pub mod seed;
pub mod solve;
pub mod sparse;

pub use error::{Error, Result};
