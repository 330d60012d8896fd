//! Penalized low-rank objectives and their exact derivatives.
//!
//! L_mu(U) = <C + G, U U^T> + mu * ||r(U)||^2 with r(U) = A(U U^T) - b,
//! optionally in compactified ("tilde") form where the residue gains the
//! leading row <A_0, U U^T> - b_0. The convex lift F_mu(X) shares the same
//! arithmetic at X = U U^T. This module also carries the smoothness bounds
//! (l, rho), the residue bound B for approximate first-order points, and the
//! planner that resolves the mutually dependent (B, k, eps) targets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ExtremeEigs};
use crate::operator::{ConstraintOperator, FactoredPoint, PointCache};
use crate::perturb::{goe_norm_bound, GoePerturbation};
use crate::sparse::SparseSymmetric;

/// Planner rounds for the (B, k, eps) fixed point.
const PLANNER_ROUNDS: usize = 10;

/// Which norm-bound regime applies to approximate first-order points:
/// `Compact` uses the compactifier row, `PdCost` uses lambda_min(C) > 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    Compact,
    PdCost,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LipschitzBounds {
    /// Ball radius on ||U||_F inside which l and rho are valid.
    pub tau: f64,
    /// Gradient Lipschitz bound.
    pub l: f64,
    /// Hessian Lipschitz bound.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlannerOutput {
    /// Residue bound at the planned eps.
    #[serde(rename = "B")]
    pub b: f64,
    pub k_min: usize,
    pub eps_max: f64,
    /// Strict sigma_G admissibility cap (PD-cost mode only); the planner
    /// gates on this value.
    #[serde(rename = "sigma_G_max")]
    pub sigma_g_max: Option<f64>,
    /// The looser cap stated by the optimality theorem, reported alongside.
    #[serde(rename = "sigma_G_max_theorem")]
    pub sigma_g_max_theorem: Option<f64>,
    pub c0: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct PenaltyProblem {
    cost: SparseSymmetric,
    op: ConstraintOperator,
    mu: f64,
    perturbation: Option<GoePerturbation>,
    use_compactifier: bool,
    /// C + G; equals `cost` when no perturbation is attached.
    eff_cost: SparseSymmetric,
    eff_cost_eigs: ExtremeEigs,
    base_cost_eigs: ExtremeEigs,
    /// ||A~|| when compactified, ||A|| otherwise (0 for m = 0).
    op_norm_eff: f64,
    /// ||A|| of the base operator (0 for m = 0).
    op_norm_base: f64,
    /// ||b~||_2 when compactified, ||b||_2 otherwise.
    b_norm_eff: f64,
}

impl PenaltyProblem {
    /// Builds the problem and precomputes the spectral quantities every bound
    /// needs. mu = 0 is allowed (plain eigenvalue-style objectives); the
    /// planner requires mu > 0.
    pub fn new(
        cost: SparseSymmetric,
        op: ConstraintOperator,
        mu: f64,
        perturbation: Option<GoePerturbation>,
        use_compactifier: bool,
    ) -> Result<Self> {
        let n = op.n();
        if cost.side() != n {
            return Err(Error::DimensionMismatch {
                context: "penalty cost matrix side",
                expected: n,
                got: cost.side(),
            });
        }
        if !(mu >= 0.0) {
            return Err(Error::invalid("mu", format!("must be >= 0, got {mu}")));
        }
        if let Some(p) = &perturbation {
            if p.matrix.side() != n {
                return Err(Error::DimensionMismatch {
                    context: "perturbation side",
                    expected: n,
                    got: p.matrix.side(),
                });
            }
            if !(p.spec.sigma_g >= 0.0) {
                return Err(Error::invalid(
                    "sigma_g",
                    format!("must be >= 0, got {}", p.spec.sigma_g),
                ));
            }
        }
        if use_compactifier && op.compactifier().is_none() {
            return Err(Error::MissingCompactifier("penalty problem in compact form"));
        }

        let eff_cost = match &perturbation {
            Some(p) if !p.matrix.is_zero() => {
                SparseSymmetric::combine(n, [(1.0, &cost), (1.0, &p.matrix)])?
            }
            _ => cost.clone(),
        };
        let eff_cost_eigs = spectral_extremes(&eff_cost);
        let base_cost_eigs = if perturbation.is_some() {
            spectral_extremes(&cost)
        } else {
            eff_cost_eigs
        };
        let op_norm_eff = op.effective_norm(use_compactifier)?;
        let op_norm_base = if op.m() == 0 { 0.0 } else { op.norm()? };
        let b_norm_eff = if use_compactifier {
            op.b_tilde()?.norm()
        } else {
            op.b().norm()
        };
        Ok(PenaltyProblem {
            cost,
            op,
            mu,
            perturbation,
            use_compactifier,
            eff_cost,
            eff_cost_eigs,
            base_cost_eigs,
            op_norm_eff,
            op_norm_base,
            b_norm_eff,
        })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn cost(&self) -> &SparseSymmetric {
        &self.cost
    }

    /// C + G.
    pub fn effective_cost(&self) -> &SparseSymmetric {
        &self.eff_cost
    }

    pub fn op(&self) -> &ConstraintOperator {
        &self.op
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn perturbation(&self) -> Option<&GoePerturbation> {
        self.perturbation.as_ref()
    }

    pub fn sigma_g(&self) -> f64 {
        self.perturbation.as_ref().map_or(0.0, |p| p.spec.sigma_g)
    }

    pub fn uses_compactifier(&self) -> bool {
        self.use_compactifier
    }

    /// ||A~|| when compactified, else ||A||.
    pub fn operator_norm(&self) -> f64 {
        self.op_norm_eff
    }

    /// Residue in the form this problem penalizes (tilde when compactified).
    pub fn residue_at(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.op.residue_factored(u, self.use_compactifier)
    }

    /// L_mu(U); refreshes the point's cache with the residue and value.
    pub fn objective(&self, pt: &mut FactoredPoint) -> Result<f64> {
        let r = self.residue_at(&pt.u)?;
        let value = self.eff_cost.inner_factored(&pt.u) + self.mu * r.norm_squared();
        pt.cache = Some(PointCache {
            residue: r,
            objective: value,
        });
        Ok(value)
    }

    /// L_mu(U) without touching any cache.
    pub fn objective_at(&self, u: &DMatrix<f64>) -> Result<f64> {
        let r = self.residue_at(u)?;
        Ok(self.eff_cost.inner_factored(u) + self.mu * r.norm_squared())
    }

    /// grad L_mu(U) = 2 (C + G) U + 4 mu sum_i r_i (A_i U), with the
    /// compactifier row folded into the sum when active; A*(r) is never
    /// materialized. Refreshes the cache.
    pub fn gradient(&self, pt: &mut FactoredPoint) -> Result<DMatrix<f64>> {
        self.objective(pt)?;
        let r = &pt.cache.as_ref().expect("cache set by objective").residue;
        Ok(self.gradient_from(&pt.u, r))
    }

    /// Gradient without mutating the point.
    pub fn gradient_at(&self, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let r = self.residue_at(u)?;
        Ok(self.gradient_from(u, &r))
    }

    fn gradient_from(&self, u: &DMatrix<f64>, r: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(u.nrows(), u.ncols());
        self.eff_cost.mul_mat_acc(2.0, u, &mut g);
        let coeff = 4.0 * self.mu;
        if self.use_compactifier {
            let comp = self.op.compactifier().expect("checked at construction");
            comp.a0.mul_mat_acc(coeff * r[0], u, &mut g);
            let r_base = r.rows(1, self.op.m()).into_owned();
            self.op.adjoint_mul_acc(coeff, &r_base, u, &mut g);
        } else {
            self.op.adjoint_mul_acc(coeff, r, u, &mut g);
        }
        g
    }

    /// Hessian-vector product
    /// H[V] = 2 (C + G + 2 mu A*(r)) V + 4 mu A*(A(V U^T + U V^T)) U,
    /// tilde operators throughout when compactified. Read-only: uses the
    /// point's cached residue when present, recomputes otherwise.
    pub fn hessian_vec(&self, pt: &FactoredPoint, udot: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if udot.nrows() != pt.u.nrows() || udot.ncols() != pt.u.ncols() {
            return Err(Error::DimensionMismatch {
                context: "hessian_vec direction shape",
                expected: pt.u.nrows() * pt.u.ncols(),
                got: udot.nrows() * udot.ncols(),
            });
        }
        let owned;
        let r = match &pt.cache {
            Some(c) => &c.residue,
            None => {
                owned = self.residue_at(&pt.u)?;
                &owned
            }
        };
        let u = &pt.u;
        let mut h = DMatrix::zeros(u.nrows(), u.ncols());
        self.eff_cost.mul_mat_acc(2.0, udot, &mut h);
        let coeff = 4.0 * self.mu;
        let m = self.op.m();
        if self.use_compactifier {
            let comp = self.op.compactifier().expect("checked at construction");
            comp.a0.mul_mat_acc(coeff * r[0], udot, &mut h);
            let r_base = r.rows(1, m).into_owned();
            self.op.adjoint_mul_acc(coeff, &r_base, udot, &mut h);
            let w0 = comp.a0.inner_pair_factored(u, udot);
            comp.a0.mul_mat_acc(coeff * w0, u, &mut h);
            let w = self.apply_pair(u, udot);
            self.op.adjoint_mul_acc(coeff, &w, u, &mut h);
        } else {
            self.op.adjoint_mul_acc(coeff, r, udot, &mut h);
            let w = self.apply_pair(u, udot);
            self.op.adjoint_mul_acc(coeff, &w, u, &mut h);
        }
        Ok(h)
    }

    /// <V, H[V]>_F, the Hessian quadratic form.
    pub fn hessian_quadratic(&self, pt: &FactoredPoint, udot: &DMatrix<f64>) -> Result<f64> {
        Ok(self.hessian_vec(pt, udot)?.dot(udot))
    }

    /// A(V U^T + U V^T) over the base rows.
    fn apply_pair(&self, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.op.m(),
            self.op.mats().iter().map(|a| a.inner_pair_factored(u, v)),
        )
    }

    /// F_mu(X) = <C + G, X> + mu ||r(X)||^2 and its gradient
    /// C + G + 2 mu A*(r), for the convex lift over symmetric X.
    pub fn convex_objective_and_grad(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let r = self.op.residue_dense(x, self.use_compactifier)?;
        let value = self.eff_cost.inner_dense(x) + self.mu * r.norm_squared();
        Ok((value, self.dual_from(&r)?.to_dense()))
    }

    /// The dual certificate matrix C + G + 2 mu A*(r) at the point's residue.
    /// Read-only on the point.
    pub fn dual_matrix(&self, pt: &FactoredPoint) -> Result<SparseSymmetric> {
        let owned;
        let r = match &pt.cache {
            Some(c) => &c.residue,
            None => {
                owned = self.residue_at(&pt.u)?;
                &owned
            }
        };
        self.dual_from(r)
    }

    fn dual_from(&self, r: &DVector<f64>) -> Result<SparseSymmetric> {
        let two_mu = 2.0 * self.mu;
        let mut terms: Vec<(f64, &SparseSymmetric)> = vec![(1.0, &self.eff_cost)];
        let offset = if self.use_compactifier {
            let comp = self.op.compactifier().expect("checked at construction");
            terms.push((two_mu * r[0], &comp.a0));
            1
        } else {
            0
        };
        for (i, a) in self.op.mats().iter().enumerate() {
            terms.push((two_mu * r[offset + i], a));
        }
        SparseSymmetric::combine(self.n(), terms)
    }

    /// Smoothness bounds on the ball ||U||_F <= tau:
    /// l = 2||C+G||_2 + 4 mu ||A|| ||b||_2 + 12 mu tau^2 ||A||^2 and
    /// rho = 16 mu tau ||A||^2, with tilde norms when compactified.
    pub fn lipschitz_bounds(&self, tau: f64) -> Result<LipschitzBounds> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau", format!("must be > 0, got {tau}")));
        }
        let a = self.op_norm_eff;
        let cost_norm = self.eff_cost_eigs.spectral_norm();
        let l = 2.0 * cost_norm
            + 4.0 * self.mu * a * self.b_norm_eff
            + 12.0 * self.mu * tau * tau * a * a;
        let rho = 16.0 * self.mu * tau * a * a;
        Ok(LipschitzBounds { tau, l, rho })
    }

    /// Bound on ||U||_F at any eps-approximate first-order point, i.e. the
    /// square root of the max-branch inside `residue_bound_B`.
    pub fn fosp_norm_bound(&self, eps: f64, mode: PenaltyMode) -> Result<f64> {
        Ok(self.fosp_norm_sq_bound(eps, mode)?.sqrt())
    }

    fn fosp_norm_sq_bound(&self, eps: f64, mode: PenaltyMode) -> Result<f64> {
        if !(eps >= 0.0) {
            return Err(Error::invalid("eps", format!("must be >= 0, got {eps}")));
        }
        match mode {
            PenaltyMode::Compact => {
                let comp = self
                    .op
                    .compactifier()
                    .ok_or(Error::MissingCompactifier("residue bound in compact mode"))?;
                let lmax = comp.eigs.lambda_max;
                let lmin = comp.eigs.lambda_min;
                let eps_branch = if eps == 0.0 {
                    0.0
                } else {
                    let q = eps / (2.0 * self.mu * comp.b0 * lmax);
                    q * q
                };
                let cost_term = (self.base_cost_eigs.spectral_norm()
                    + goe_norm_bound(self.n(), self.sigma_g()))
                    / (2.0 * self.mu * lmin * lmin);
                let stat_branch = cost_term
                    + 3.0 * comp.b0 * lmax / (2.0 * lmin * lmin)
                    + self.op.b().norm() / (2.0 * lmin);
                Ok(eps_branch.max(stat_branch))
            }
            PenaltyMode::PdCost => {
                let lam = self.base_cost_eigs.lambda_min;
                if !(lam > 0.0) {
                    return Err(Error::CostNotPd { lambda_min: lam });
                }
                let b_norm = self.op.b().norm();
                let eps_branch = {
                    let q = 2.0 * eps / lam;
                    q * q
                };
                let stat_branch = (2.0 * self.mu / lam) * b_norm * b_norm;
                Ok(eps_branch.max(stat_branch))
            }
        }
    }

    /// Residue bound B valid at every eps-approximate first-order point:
    /// B = ||A|| * (norm-squared bound) + ||b||_2, with tilde operator and
    /// right-hand side in compact mode. eps = 0 is accepted so the planner
    /// can seed its fixed point with the stationary-branch value.
    pub fn residue_bound_b(&self, eps: f64, mode: PenaltyMode) -> Result<f64> {
        let norm_sq = self.fosp_norm_sq_bound(eps, mode)?;
        match mode {
            PenaltyMode::Compact => {
                Ok(self.op.norm_tilde()? * norm_sq + self.op.b_tilde()?.norm())
            }
            PenaltyMode::PdCost => Ok(self.op_norm_base * norm_sq + self.op.b().norm()),
        }
    }

    /// Resolves the mutually dependent (B, k, eps) targets:
    /// eps_max = (gamma k^2 sigma_G^2 / (32 c0 n mu ||A||^2))^(2/3) and
    /// k_min = 3 [ln(n/delta) + sqrt(rank(A) ln(1 + 8 mu B ||A~|| sqrt(c0 n) / sigma_G))],
    /// iterated B -> k -> eps for at most 10 rounds from eps = 0. PD-cost
    /// mode gates sigma_G at lambda_min(C) / (6 sqrt(n ln(n/delta))) and also
    /// reports the looser /4 cap.
    pub fn plan_parameters(
        &self,
        gamma: f64,
        delta: f64,
        c0: f64,
        mode: PenaltyMode,
    ) -> Result<PlannerOutput> {
        if !(gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta", format!("must be in (0,1), got {delta}")));
        }
        if !(c0 > 0.0) {
            return Err(Error::invalid("c0", format!("must be > 0, got {c0}")));
        }
        if !(self.mu > 0.0) {
            return Err(Error::invalid("mu", "planner needs mu > 0"));
        }
        let sigma_g = self.sigma_g();
        if sigma_g <= 0.0 {
            return Err(Error::PerturbationRequired(
                "parameter planning needs a Gaussian perturbation with sigma_G > 0",
            ));
        }
        if self.op.m() == 0 {
            return Err(Error::invalid("m", "planner needs at least one constraint"));
        }

        let n = self.n() as f64;
        let log_nd = (n / delta).ln();
        let (mut sigma_g_max, mut sigma_g_max_theorem) = (None, None);
        if mode == PenaltyMode::PdCost {
            let lam = self.base_cost_eigs.lambda_min;
            if !(lam > 0.0) {
                return Err(Error::CostNotPd { lambda_min: lam });
            }
            let root = (n * log_nd).sqrt();
            let cap_strict = lam / (6.0 * root);
            let cap_theorem = lam / (4.0 * root);
            if sigma_g > cap_strict {
                return Err(Error::SigmaGAboveCap {
                    sigma_g,
                    cap: cap_strict,
                });
            }
            sigma_g_max = Some(cap_strict);
            sigma_g_max_theorem = Some(cap_theorem);
        }

        let rank = self.op.rank(None)? as f64;
        let norm_k = match mode {
            PenaltyMode::Compact => self.op.norm_tilde()?,
            PenaltyMode::PdCost => self.op_norm_base,
        };
        let k_from_b = |b: f64| -> usize {
            let inner = 1.0 + 8.0 * self.mu * b * norm_k * (c0 * n).sqrt() / sigma_g;
            let val = 3.0 * (log_nd + (rank * inner.ln()).sqrt());
            (val.ceil() as usize).max(1)
        };
        let eps_from_k = |k: usize| -> f64 {
            let kk = (k * k) as f64;
            let base = gamma * kk * sigma_g * sigma_g
                / (32.0 * c0 * n * self.mu * self.op_norm_base * self.op_norm_base);
            base.powf(2.0 / 3.0)
        };

        let mut eps = 0.0;
        let (mut b, mut k) = (0.0, 0);
        for _ in 0..PLANNER_ROUNDS {
            b = self.residue_bound_b(eps, mode)?;
            let k_new = k_from_b(b);
            let eps_new = eps_from_k(k_new);
            let settled = k_new == k && (eps_new - eps).abs() <= 1e-12 * eps_new.max(1e-300);
            k = k_new;
            eps = eps_new;
            if settled {
                break;
            }
        }
        Ok(PlannerOutput {
            b,
            k_min: k,
            eps_max: eps,
            sigma_g_max,
            sigma_g_max_theorem,
            c0,
            delta,
        })
    }
}

fn spectral_extremes(a: &SparseSymmetric) -> ExtremeEigs {
    linalg::extreme_eigenvalues(a.side(), a.frobenius_norm(), |v| a.mul_vec(v))
}
