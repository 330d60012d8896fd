//! GOE perturbations for smoothed analysis.
//!
//! G is symmetric with upper-triangle entries (diagonal included) drawn
//! i.i.d. N(0, sigma_G^2). Sampling is counter-based: entry (i, j) comes from
//! its own generator keyed by (seed, i, j), so draws are independent of
//! traversal order and any sub-block is reproducible in isolation.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed::entry_seed;
use crate::sparse::SparseSymmetric;

/// Densest n for which calibration's dense eigendecompositions stay cheap.
pub const CALIBRATE_MAX_N: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoeSpec {
    pub n: usize,
    pub sigma_g: f64,
    pub seed: u64,
}

impl GoeSpec {
    pub fn sample(&self) -> SparseSymmetric {
        sample_goe(self.n, self.sigma_g, self.seed)
    }
}

/// A sampled GOE draw paired with the spec that produced it, so problems can
/// be serialized as (sigma_G, seed) and reconstituted exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GoePerturbation {
    pub spec: GoeSpec,
    pub matrix: SparseSymmetric,
}

impl GoePerturbation {
    pub fn sample(spec: GoeSpec) -> Self {
        let matrix = spec.sample();
        GoePerturbation { spec, matrix }
    }
}

/// Draws G ~ GOE(n, sigma_G). sigma_G = 0 yields the zero matrix.
pub fn sample_goe(n: usize, sigma_g: f64, seed: u64) -> SparseSymmetric {
    if sigma_g == 0.0 {
        return SparseSymmetric::zeros(n);
    }
    let mut triplets = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            let mut rng = ChaCha8Rng::seed_from_u64(entry_seed(seed, i, j));
            let z: f64 = rng.sample(StandardNormal);
            triplets.push((i, j, sigma_g * z));
        }
    }
    SparseSymmetric::from_triplets(n, triplets).expect("indices in range by construction")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub c0_hat: f64,
    pub violation_rate: f64,
    pub trials: usize,
}

/// Empirically calibrates the universal constant c0 in the smallest-singular-
/// value lower bound: over `trials` GOE draws, s = sum of the k smallest
/// squared singular values must satisfy s >= k^2 sigma_G^2 / (c0 n). Returns
/// the smallest c0_hat making the bound hold in every trial, plus the
/// violation rate at the caller's configured c0. The perturbed mean matrix is
/// fixed at 0 (worst case for the bound's spectral repulsion).
pub fn calibrate_c0(
    n: usize,
    k: usize,
    sigma_g: f64,
    trials: usize,
    seed: u64,
    c0: f64,
) -> Result<CalibrationReport> {
    if n > CALIBRATE_MAX_N {
        return Err(Error::CalibrationTooLarge { n });
    }
    if k == 0 || k > n {
        return Err(Error::invalid("k", format!("need 1 <= k <= n = {n}, got {k}")));
    }
    if !(sigma_g > 0.0) {
        return Err(Error::invalid("sigma_g", "calibration needs sigma_G > 0"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials", "need at least one trial"));
    }
    if !(c0 > 0.0) {
        return Err(Error::invalid("c0", "must be > 0"));
    }

    let s_values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let g = sample_goe(n, sigma_g, crate::seed::indexed_seed(seed, t as u64));
            let eigs = linalg::symmetric_eigenvalues_asc(&g.to_dense());
            let mut mags: Vec<f64> = eigs.iter().map(|l| l.abs()).collect();
            mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
            mags.iter().take(k).map(|s| s * s).sum()
        })
        .collect();

    let target = (k * k) as f64 * sigma_g * sigma_g / n as f64;
    let c0_hat = s_values
        .iter()
        .map(|&s| if s > 0.0 { target / s } else { f64::INFINITY })
        .fold(0.0f64, f64::max);
    let violations = s_values.iter().filter(|&&s| s < target / c0).count();
    Ok(CalibrationReport {
        c0_hat,
        violation_rate: violations as f64 / trials as f64,
        trials,
    })
}

/// High-probability spectral norm bound 3 sigma_G sqrt(n) used throughout the
/// residue bounds.
pub fn goe_norm_bound(n: usize, sigma_g: f64) -> f64 {
    3.0 * sigma_g * (n as f64).sqrt()
}

#[allow(dead_code)]
fn spectral_norm_of(g: &SparseSymmetric) -> f64 {
    linalg::extreme_eigenvalues(g.side(), g.frobenius_norm(), |v: &DVector<f64>| g.mul_vec(v))
        .spectral_norm()
}
