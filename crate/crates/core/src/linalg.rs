//! Iterative eigenvalue kernels shared across the crate: shifted power
//! iteration for spectral extremes and Lanczos for smallest eigenpairs of
//! matrix-free symmetric operators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance for power-iteration Rayleigh quotients.
pub const POWER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct ExtremeEigs {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ExtremeEigs {
    pub fn spectral_norm(&self) -> f64 {
        self.lambda_min.abs().max(self.lambda_max.abs())
    }
}

/// Power iteration with the deterministic all-ones start. The operator must
/// be symmetric PSD (callers shift to guarantee it); returns its largest
/// eigenvalue to `POWER_TOL` relative accuracy, capped at max(10 dim, 100)
/// iterations.
fn power_largest(dim: usize, apply: impl Fn(&DVector<f64>) -> DVector<f64>) -> f64 {
    let mut v = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    let mut lambda = 0.0;
    let max_iters = (10 * dim).max(100);
    for _ in 0..max_iters {
        let w = apply(&v);
        let new_lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (new_lambda - lambda).abs() <= POWER_TOL * new_lambda.abs().max(1e-300) {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Extreme eigenvalues of a symmetric operator via two shifted power runs:
/// lambda_max(A) = power(A + cI) - c and lambda_min(A) = c - power(cI - A)
/// with c = spectral_bound + 1 > ||A||_2, which makes both shifted operators
/// positive definite with the sought eigenvalue dominant.
pub fn extreme_eigenvalues(
    dim: usize,
    spectral_bound: f64,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> ExtremeEigs {
    if dim == 0 {
        return ExtremeEigs {
            lambda_min: 0.0,
            lambda_max: 0.0,
        };
    }
    let c = spectral_bound + 1.0;
    let lambda_max = power_largest(dim, |v| {
        let mut w = apply(v);
        w.axpy(c, v, 1.0);
        w
    }) - c;
    let lambda_min = c - power_largest(dim, |v| {
        let mut w = apply(v);
        w *= -1.0;
        w.axpy(c, v, 1.0);
        w
    });
    ExtremeEigs {
        lambda_min,
        lambda_max,
    }
}

/// Largest eigenvalue of a dense symmetric PSD matrix (Gram matrices) by the
/// same deterministic power iteration.
pub fn power_largest_psd_dense(g: &DMatrix<f64>) -> f64 {
    power_largest(g.nrows(), |v| g * v)
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    pub value: f64,
    pub vector: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Smallest eigenpair of a symmetric operator by Lanczos with full
/// reorthogonalization. Convergence: |beta_j s_j| <= tol (1 + |theta|) for
/// the smallest Ritz pair (theta, s); a vanishing beta_j makes the captured
/// Krylov space invariant and registers as convergence through the same
/// test. Non-finite breakdown restarts with seeds seed+1, seed+2 before
/// giving up. Smallest Ritz values approach lambda_min from above, so the
/// returned value never undershoots the true minimum beyond rounding.
pub fn lanczos_smallest(
    dim: usize,
    tol: f64,
    seed: u64,
    max_iter: usize,
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<LanczosResult> {
    assert!(dim > 0, "lanczos_smallest on empty operator");
    let max_iter = max_iter.min(dim).max(1);
    let mut best: Option<LanczosResult> = None;
    for attempt in 0..3u64 {
        match lanczos_attempt(dim, tol, seed.wrapping_add(attempt), max_iter, &apply) {
            Some(res) if res.converged => return Ok(res),
            Some(res) => {
                if best.as_ref().map_or(true, |b| res.value < b.value) {
                    best = Some(res);
                }
            }
            None => continue,
        }
    }
    match best {
        // Exhausted iterations without meeting the residual test; the best
        // Ritz value is still an upper bound on lambda_min.
        Some(res) => Ok(res),
        None => Err(Error::LanczosFailed { restarts: 3 }),
    }
}

fn lanczos_attempt(
    dim: usize,
    tol: f64,
    seed: u64,
    max_iter: usize,
    apply: &impl Fn(&DVector<f64>) -> DVector<f64>,
) -> Option<LanczosResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    if !(norm > 0.0) {
        return None;
    }
    v /= norm;

    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    for j in 0..max_iter {
        let mut w = apply(&basis[j]);
        if j > 0 {
            w.axpy(-betas[j - 1], &basis[j - 1], 1.0);
        }
        let alpha = basis[j].dot(&w);
        if !alpha.is_finite() {
            return None;
        }
        w.axpy(-alpha, &basis[j], 1.0);
        // Two passes of reorthogonalization keep the basis orthonormal to
        // machine precision; dimensions here are modest, so the O(j dim)
        // cost per step is acceptable.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        alphas.push(alpha);
        let beta = w.norm();
        if !beta.is_finite() {
            return None;
        }

        let check = j + 1 == max_iter || beta <= 1e-300 || j < 64 || (j + 1) % 4 == 0;
        if check {
            let (theta, s) = smallest_tridiag_eigpair(&alphas, &betas);
            let resid = beta * s[j].abs();
            if resid <= tol * (1.0 + theta.abs()) || j + 1 == max_iter || beta <= 1e-300 {
                let mut y = DVector::zeros(dim);
                for (i, q) in basis.iter().enumerate() {
                    y.axpy(s[i], q, 1.0);
                }
                let ynorm = y.norm();
                if ynorm > 0.0 {
                    y /= ynorm;
                }
                let converged = resid <= tol * (1.0 + theta.abs()) || beta <= 1e-300;
                return Some(LanczosResult {
                    value: theta,
                    vector: y,
                    converged,
                    iterations: j + 1,
                });
            }
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    None
}

/// Smallest eigenpair of the symmetric tridiagonal with diagonal `alphas`
/// and off-diagonal `betas` (len alphas.len() - 1 used).
fn smallest_tridiag_eigpair(alphas: &[f64], betas: &[f64]) -> (f64, DVector<f64>) {
    let j = alphas.len();
    let mut t = DMatrix::zeros(j, j);
    for (i, &a) in alphas.iter().enumerate() {
        t[(i, i)] = a;
    }
    for i in 0..j.saturating_sub(1) {
        t[(i, i + 1)] = betas[i];
        t[(i + 1, i)] = betas[i];
    }
    let eig = t.symmetric_eigen();
    let mut idx = 0;
    for i in 1..j {
        if eig.eigenvalues[i] < eig.eigenvalues[idx] {
            idx = i;
        }
    }
    (eig.eigenvalues[idx], eig.eigenvectors.column(idx).into_owned())
}

/// Euclidean projection onto the PSD cone: eigendecompose and clamp negative
/// eigenvalues to zero.
pub fn psd_project(x: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (x + x.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = x.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let lam = eig.eigenvalues[i];
        if lam > 0.0 {
            let q = eig.eigenvectors.column(i);
            // out += lam q q^T
            for r in 0..n {
                let qr = q[r] * lam;
                if qr != 0.0 {
                    for c in 0..n {
                        out[(r, c)] += qr * q[c];
                    }
                }
            }
        }
    }
    out
}

/// Singular values of a rectangular matrix, sorted descending.
pub fn singular_values_desc(u: &DMatrix<f64>) -> Vec<f64> {
    let svd = u.clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Eigenvalues of a dense symmetric matrix, sorted ascending.
pub fn symmetric_eigenvalues_asc(x: &DMatrix<f64>) -> Vec<f64> {
    let eig = x.clone().symmetric_eigen();
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_apply(m: &DMatrix<f64>) -> impl Fn(&DVector<f64>) -> DVector<f64> + '_ {
        move |v| m * v
    }

    #[test]
    fn extremes_on_known_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 0.5, 2.0]));
        let e = extreme_eigenvalues(4, m.norm(), dense_apply(&m));
        assert_relative_eq!(e.lambda_max, 3.0, epsilon = 1e-6);
        assert_relative_eq!(e.lambda_min, -1.0, epsilon = 1e-6);
        assert_relative_eq!(e.spectral_norm(), 3.0, epsilon = 1e-6);
    }

    #[test]
    fn extremes_on_zero_and_identity() {
        let z = DMatrix::zeros(3, 3);
        let e = extreme_eigenvalues(3, 0.0, dense_apply(&z));
        assert_relative_eq!(e.lambda_max, 0.0, epsilon = 1e-9);
        assert_relative_eq!(e.lambda_min, 0.0, epsilon = 1e-9);
        let id = DMatrix::identity(3, 3);
        let e = extreme_eigenvalues(3, 3.0f64.sqrt(), dense_apply(&id));
        assert_relative_eq!(e.lambda_max, 1.0, epsilon = 1e-8);
        assert_relative_eq!(e.lambda_min, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn lanczos_matches_dense_eig_on_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let dim = 3 + (trial % 7);
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let sym = (&a + a.transpose()) * 0.5;
            let truth = symmetric_eigenvalues_asc(&sym)[0];
            let res = lanczos_smallest(dim, 1e-12, 7 + trial as u64, dim, dense_apply(&sym)).unwrap();
            assert_relative_eq!(res.value, truth, epsilon = 1e-9, max_relative = 1e-9);
            let hv = &sym * &res.vector;
            assert_relative_eq!((hv - res.value * &res.vector).norm(), 0.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn lanczos_handles_zero_operator_via_invariant_subspace() {
        let z = DMatrix::zeros(5, 5);
        let res = lanczos_smallest(5, 1e-10, 1, 5, dense_apply(&z)).unwrap();
        assert!(res.converged);
        assert_relative_eq!(res.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lanczos_finds_rank_one_negative_spike() {
        // spectrum {-2, 0, ..., 0}: the invariant Krylov space has dim 2
        let n = 12;
        let mut m = DMatrix::zeros(n, n);
        m[(n - 1, n - 1)] = -2.0;
        let res = lanczos_smallest(n, 1e-12, 3, n, dense_apply(&m)).unwrap();
        assert!(res.converged);
        assert_relative_eq!(res.value, -2.0, epsilon = 1e-10);
    }

    #[test]
    fn psd_projection_clamps_negative_modes() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0]);
        let p = psd_project(&x);
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], 0.0, epsilon = 1e-12);
        // idempotent on PSD input
        let q = psd_project(&p);
        assert_relative_eq!((p - q).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_values_sorted() {
        let u = DMatrix::from_row_slice(3, 2, &[3.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let sv = singular_values_desc(&u);
        assert_relative_eq!(sv[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(sv[1], 1.0, epsilon = 1e-12);
    }
}
