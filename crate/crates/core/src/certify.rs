//! Independent verification of candidate points.
//!
//! Everything here is read-only over (problem, point): stationarity
//! predicates, rank deficiency, the dual-style global-optimality certificate
//! lambda_min(C + G + 2 mu A*(r)) >= -gamma sqrt(eps), the induced optimality
//! gap bound, and the convex-lift KKT conditions with a PSD-projected
//! gradient oracle as the brute-force reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::FactoredPoint;
use crate::penalty::PenaltyProblem;
use crate::solve::min_hessian_eig;

/// sigma_k / sigma_1 at or below this declares rank deficiency.
pub const RANK_DEFICIENCY_THRESHOLD: f64 = 1e-6;
/// Relative accuracy requested from the eigenvalue routines.
const EIG_TOL: f64 = 1e-10;
/// Fixed seed for the certificate's Lanczos starts; certification takes no
/// seed input and must be reproducible.
const CERTIFY_SEED: u64 = 0x5eed_cef1;
/// Convex oracle defaults: iteration cap and gradient-mapping tolerance.
pub const CONVEX_MAX_ITERS: usize = 100_000;
pub const CONVEX_TOL: f64 = 1e-9;

/// Flat, serializable verdict over one candidate point. The boolean verdicts
/// are pure functions of the numeric fields and the recorded thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub eps: f64,
    pub gamma: f64,
    pub grad_norm: f64,
    pub hess_min_eig: f64,
    /// Smallest singular value of U.
    pub sigma_k: f64,
    /// lambda_min of the dual matrix C + G + 2 mu A*(r).
    pub dual_min_eig: f64,
    /// gamma sqrt(eps) * trace_bound + eps ||U||_F / 2, when a trace bound
    /// for the unknown optimum is available.
    pub gap_bound: Option<f64>,
    /// The trace bound the gap rests on; an assumption, not a derived fact.
    pub trace_bound_assumed: Option<f64>,
    /// sigma_k / sigma_1 threshold used for the rank verdict.
    pub rank_threshold: f64,
    pub is_eps_fosp: bool,
    pub is_eps_gamma_sosp: bool,
    pub is_rank_deficient: bool,
    pub certificate_holds: bool,
}

/// Certifies a candidate point. `trace_bound` feeds the optimality-gap bound;
/// when absent and the problem is compactified, b0 / lambda_min(A0) is
/// substituted. Read-only on both arguments.
pub fn certify(
    pp: &PenaltyProblem,
    pt: &FactoredPoint,
    eps: f64,
    gamma: f64,
    trace_bound: Option<f64>,
) -> Result<Certificate> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", format!("must be > 0, got {eps}")));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
    }
    // Work on a private copy so the caller's point (and any cache) is
    // untouched while all quantities share one freshly computed residue.
    let mut local = FactoredPoint::new(pt.u.clone());
    let grad = pp.gradient(&mut local)?;
    let grad_norm = grad.norm();

    let (hess_min_eig, _) = min_hessian_eig(pp, &local, EIG_TOL, CERTIFY_SEED)?;

    let dual = pp.dual_matrix(&local)?;
    let n = pp.n();
    let dual_min_eig = if dual.is_zero() {
        0.0
    } else {
        linalg::lanczos_smallest(n, EIG_TOL, CERTIFY_SEED, n, |v: &DVector<f64>| dual.mul_vec(v))?
            .value
    };

    let singular = linalg::singular_values_desc(&local.u);
    let sigma_1 = singular.first().copied().unwrap_or(0.0);
    let sigma_k = singular.last().copied().unwrap_or(0.0);
    let ratio = if sigma_1 == 0.0 { 0.0 } else { sigma_k / sigma_1 };

    let trace_bound_assumed = trace_bound.or_else(|| {
        pp.op()
            .compactifier()
            .filter(|_| pp.uses_compactifier())
            .map(|c| c.trace_bound())
    });
    let gap_bound = trace_bound_assumed
        .map(|t| gamma * eps.sqrt() * t + 0.5 * eps * local.u.norm());

    let threshold = -gamma * eps.sqrt();
    let is_eps_fosp = grad_norm <= eps;
    Ok(Certificate {
        eps,
        gamma,
        grad_norm,
        hess_min_eig,
        sigma_k,
        dual_min_eig,
        gap_bound,
        trace_bound_assumed,
        rank_threshold: RANK_DEFICIENCY_THRESHOLD,
        is_eps_fosp,
        is_eps_gamma_sosp: is_eps_fosp && hess_min_eig >= threshold,
        is_rank_deficient: ratio <= RANK_DEFICIENCY_THRESHOLD,
        certificate_holds: dual_min_eig >= threshold,
    })
}

/// Necessary-and-sufficient optimality conditions for the convex lift at
/// X = U U^T: lambda_min(grad F) >= -tol and ||grad F * X||_F <= tol (1 + ||X||_F).
pub fn convex_kkt_check(pp: &PenaltyProblem, pt: &FactoredPoint, tol: f64) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    let x = &pt.u * pt.u.transpose();
    let (_, grad) = pp.convex_objective_and_grad(&x)?;
    let lambda_min = linalg::symmetric_eigenvalues_asc(&grad)[0];
    if lambda_min < -tol {
        return Ok(false);
    }
    let complementarity = (&grad * &x).norm();
    Ok(complementarity <= tol * (1.0 + x.norm()))
}

/// Full singular spectrum of U (descending) plus the sigma_k / sigma_1 ratio
/// (0 when U = 0).
pub fn rank_deficiency_report(pt: &FactoredPoint) -> (Vec<f64>, f64) {
    let singular = linalg::singular_values_desc(&pt.u);
    let sigma_1 = singular.first().copied().unwrap_or(0.0);
    let sigma_k = singular.last().copied().unwrap_or(0.0);
    let ratio = if sigma_1 == 0.0 { 0.0 } else { sigma_k / sigma_1 };
    (singular, ratio)
}

/// Brute-force reference minimizer of F_mu over the PSD cone: projected
/// gradient with step 1/(2 mu ||A||^2) (tilde norm when compactified),
/// stopping when the gradient-mapping norm drops to `tol` or after
/// `max_iters` rounds. Exact in the limit for the smooth convex F_mu.
pub fn convex_solve(
    pp: &PenaltyProblem,
    x0: Option<DMatrix<f64>>,
    max_iters: usize,
    tol: f64,
) -> Result<(DMatrix<f64>, f64)> {
    let n = pp.n();
    let a_norm = pp.operator_norm();
    let l_f = 2.0 * pp.mu() * a_norm * a_norm;
    if !(l_f > 0.0) {
        return Err(Error::invalid(
            "mu",
            "convex oracle needs mu > 0 and a nonempty constraint system",
        ));
    }
    let eta = 1.0 / l_f;
    let mut x = match x0 {
        Some(x0) => {
            if x0.nrows() != n || x0.ncols() != n {
                return Err(Error::DimensionMismatch {
                    context: "convex oracle start X0 side",
                    expected: n,
                    got: x0.nrows().max(x0.ncols()),
                });
            }
            linalg::psd_project(&x0)
        }
        None => DMatrix::zeros(n, n),
    };
    let mut value = f64::INFINITY;
    for _ in 0..max_iters {
        let (f, grad) = pp.convex_objective_and_grad(&x)?;
        value = f;
        let next = linalg::psd_project(&(&x - &grad * eta));
        let mapping = (&x - &next).norm() / eta;
        x = next;
        if mapping <= tol {
            let (f, _) = pp.convex_objective_and_grad(&x)?;
            return Ok((x, f));
        }
    }
    Ok((x, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ConstraintOperator;
    use crate::sparse::SparseSymmetric;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// n = 2, C = diag(1, -1), single constraint Tr(X) = 1, mu = 5:
    /// F(X) = x11 - x22 + 5 (x11 + x22 - 1)^2 with PSD minimizer
    /// X* = diag(0, 1.1), F* = -1.05.
    fn trace_penalty_problem() -> PenaltyProblem {
        let c = SparseSymmetric::from_triplets(2, [(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        let op = ConstraintOperator::new(
            2,
            vec![SparseSymmetric::identity(2)],
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        PenaltyProblem::new(c, op, 5.0, None, false).unwrap()
    }

    #[test]
    fn certificate_holds_at_origin_of_psd_cost_problem() {
        let op = ConstraintOperator::new(3, vec![], DVector::zeros(0)).unwrap();
        let pp = PenaltyProblem::new(SparseSymmetric::identity(3), op, 1.0, None, false).unwrap();
        let pt = FactoredPoint::new(DMatrix::zeros(3, 2));
        let cert = certify(&pp, &pt, 1e-6, 1.0, None).unwrap();
        assert_eq!(cert.grad_norm, 0.0);
        assert!(cert.is_eps_fosp);
        assert!(cert.is_eps_gamma_sosp, "PSD Hessian at the origin");
        assert_relative_eq!(cert.dual_min_eig, 1.0, epsilon = 1e-8);
        assert!(cert.certificate_holds);
        assert!(cert.is_rank_deficient, "U = 0 has sigma_k = 0");
        assert!(cert.gap_bound.is_none(), "no trace bound available");
    }

    #[test]
    fn certify_leaves_the_point_untouched() {
        let pp = trace_penalty_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pt = FactoredPoint::new(DMatrix::from_fn(2, 2, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }));
        let before = pt.u.clone();
        let cache_before = pt.cache.is_some();
        let _ = certify(&pp, &pt, 1e-4, 1.0, Some(3.0)).unwrap();
        assert_eq!(pt.u, before);
        assert_eq!(pt.cache.is_some(), cache_before);
    }

    #[test]
    fn convex_oracle_finds_the_analytic_optimum() {
        let pp = trace_penalty_problem();
        let (x, f) = convex_solve(&pp, None, CONVEX_MAX_ITERS, CONVEX_TOL).unwrap();
        assert_relative_eq!(f, -1.05, epsilon = 1e-7);
        assert_relative_eq!(x[(0, 0)], 0.0, epsilon = 1e-6);
        assert_relative_eq!(x[(1, 1)], 1.1, epsilon = 1e-6);
        assert_relative_eq!(x[(0, 1)], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn kkt_check_accepts_the_optimum_and_rejects_a_saddle() {
        let pp = trace_penalty_problem();
        // U* = diag-sqrt of X* = diag(0, 1.1)
        let mut u = DMatrix::zeros(2, 2);
        u[(1, 1)] = 1.1f64.sqrt();
        let star = FactoredPoint::new(u);
        assert!(convex_kkt_check(&pp, &star, 1e-6).unwrap());

        // the all-mass-on-x11 point is stationary for the trace residue but
        // fails the dual PSD condition
        let mut v = DMatrix::zeros(2, 2);
        v[(0, 0)] = 1.0;
        let bad = FactoredPoint::new(v);
        assert!(!convex_kkt_check(&pp, &bad, 1e-6).unwrap());
    }

    #[test]
    fn kkt_point_beats_random_psd_competitors() {
        let pp = trace_penalty_problem();
        let mut u = DMatrix::zeros(2, 2);
        u[(1, 1)] = 1.1f64.sqrt();
        let star = FactoredPoint::new(u.clone());
        assert!(convex_kkt_check(&pp, &star, 1e-6).unwrap());
        let f_star = pp.objective_at(&u).unwrap();
        let trace_cap = 2.0 * (&u * u.transpose()).trace();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        for _ in 0..500 {
            let w = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x = &w * w.transpose();
            let t = x.trace();
            if t > trace_cap {
                x *= (trace_cap * rng.gen::<f64>()) / t;
            }
            let (f, _) = pp.convex_objective_and_grad(&x).unwrap();
            assert!(
                f_star <= f + 1e-6,
                "KKT point value {f_star} exceeded probe value {f}"
            );
        }
    }

    #[test]
    fn gap_bound_dominates_oracle_gap_on_compactified_instance() {
        // diagonal-constraint toy with compactifier (I, n)
        let n = 4;
        let mats: Vec<_> = (0..n)
            .map(|i| SparseSymmetric::from_triplets(n, [(i, i, 1.0)]).unwrap())
            .collect();
        let op = ConstraintOperator::new(n, mats, DVector::from_element(n, 1.0))
            .unwrap()
            .with_compactifier(SparseSymmetric::identity(n), n as f64)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                t.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
        let c = SparseSymmetric::from_triplets(n, t).unwrap();
        let pp = PenaltyProblem::new(c, op, 2.0, None, true).unwrap();

        let cfg = crate::solve::SolverConfig::new(1e-6, 1.0, n + 1, 3);
        let u0 = crate::solve::init_random(&pp, n + 1, 3);
        let (pt, trace) = crate::solve::pgd(&pp, u0, &cfg).unwrap();
        assert_eq!(trace.status, crate::solve::SolveStatus::SospReached);

        let cert = certify(&pp, &pt, 1e-6, 1.0, None).unwrap();
        if cert.certificate_holds {
            let (f_u, _) = pp
                .convex_objective_and_grad(&(&pt.u * pt.u.transpose()))
                .unwrap();
            let (_, f_star) = convex_solve(&pp, None, CONVEX_MAX_ITERS, 1e-11).unwrap();
            let gap = f_u - f_star;
            let bound = cert.gap_bound.expect("compactifier provides a trace bound");
            assert!(
                gap <= bound + 1e-7,
                "true gap {gap} exceeded certified bound {bound}"
            );
        }
    }

    #[test]
    fn rank_report_flags_zero_columns() {
        let mut u = DMatrix::identity(4, 3);
        u[(2, 2)] = 0.0;
        let (sv, ratio) = rank_deficiency_report(&FactoredPoint::new(u));
        assert_eq!(sv.len(), 3);
        assert_relative_eq!(sv[2], 0.0, epsilon = 1e-14);
        assert_relative_eq!(ratio, 0.0, epsilon = 1e-14);

        let full = FactoredPoint::new(DMatrix::identity(5, 4));
        let (sv, ratio) = rank_deficiency_report(&full);
        assert!(sv.iter().all(|&s| (s - 1.0).abs() < 1e-12));
        assert_relative_eq!(ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn certificate_serializes_flat() {
        let op = ConstraintOperator::new(2, vec![], DVector::zeros(0)).unwrap();
        let pp = PenaltyProblem::new(SparseSymmetric::identity(2), op, 1.0, None, false).unwrap();
        let pt = FactoredPoint::new(DMatrix::zeros(2, 1));
        let cert = certify(&pp, &pt, 1e-6, 1.0, Some(2.0)).unwrap();
        let json = serde_json::to_value(&cert).unwrap();
        let obj = json.as_object().expect("flat object");
        for key in [
            "eps",
            "gamma",
            "grad_norm",
            "hess_min_eig",
            "sigma_k",
            "dual_min_eig",
            "gap_bound",
            "trace_bound_assumed",
            "rank_threshold",
            "is_eps_fosp",
            "is_eps_gamma_sosp",
            "is_rank_deficient",
            "certificate_holds",
        ] {
            assert!(obj.contains_key(key), "missing field {key}");
            assert!(!obj[key].is_object(), "field {key} must be flat");
        }
    }
}
