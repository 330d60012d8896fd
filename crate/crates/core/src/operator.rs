//! Constraint operators for SDP feasibility systems.
//!
//! `ConstraintOperator` carries the linear map A(X) = (<A_1, X>, ..., <A_m, X>)
//! together with the right-hand side b and an optional compactifier row
//! (A_0, b_0) with A_0 positive definite. The compactified ("tilde") variants
//! prepend that row, which bounds the feasible set: Tr(X) <= b_0 / lambda_min(A_0)
//! for every PSD X with <A_0, X> = b_0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, ExtremeEigs};
use crate::sparse::SparseSymmetric;

/// Default relative threshold for counting Gram eigenvalues in operator_rank.
pub const RANK_TOL: f64 = 1e-9;

/// PD check tolerance for A_0, relative to its largest eigenvalue.
const PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Compactifier {
    pub a0: SparseSymmetric,
    pub b0: f64,
    /// Extreme eigenvalues of A_0, computed once at construction.
    pub eigs: ExtremeEigs,
}

impl Compactifier {
    /// Trace bound b_0 / lambda_min(A_0) valid for any PSD X on the slice
    /// <A_0, X> = b_0.
    pub fn trace_bound(&self) -> f64 {
        self.b0 / self.eigs.lambda_min
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintOperator {
    n: usize,
    mats: Vec<SparseSymmetric>,
    b: DVector<f64>,
    compactifier: Option<Compactifier>,
}

impl ConstraintOperator {
    pub fn new(n: usize, mats: Vec<SparseSymmetric>, b: DVector<f64>) -> Result<Self> {
        for m in &mats {
            if m.side() != n {
                return Err(Error::DimensionMismatch {
                    context: "ConstraintOperator constraint matrix side",
                    expected: n,
                    got: m.side(),
                });
            }
        }
        if b.len() != mats.len() {
            return Err(Error::DimensionMismatch {
                context: "ConstraintOperator right-hand side length",
                expected: mats.len(),
                got: b.len(),
            });
        }
        Ok(ConstraintOperator {
            n,
            mats,
            b,
            compactifier: None,
        })
    }

    /// Attaches the compactifier row (A_0, b_0); A_0 must be positive
    /// definite (checked numerically, tolerance 1e-10 relative) and b_0 > 0.
    pub fn with_compactifier(mut self, a0: SparseSymmetric, b0: f64) -> Result<Self> {
        if a0.side() != self.n {
            return Err(Error::DimensionMismatch {
                context: "compactifier side",
                expected: self.n,
                got: a0.side(),
            });
        }
        if !(b0 > 0.0) {
            return Err(Error::invalid("b0", format!("must be > 0, got {b0}")));
        }
        let eigs = linalg::extreme_eigenvalues(self.n, a0.frobenius_norm(), |v| a0.mul_vec(v));
        if eigs.lambda_min <= PD_TOL * eigs.lambda_max.abs().max(1.0) {
            return Err(Error::CompactifierNotPd {
                lambda_min: eigs.lambda_min,
            });
        }
        self.compactifier = Some(Compactifier { a0, b0, eigs });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of constraint rows (compactifier excluded).
    pub fn m(&self) -> usize {
        self.mats.len()
    }

    pub fn mats(&self) -> &[SparseSymmetric] {
        &self.mats
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn compactifier(&self) -> Option<&Compactifier> {
        self.compactifier.as_ref()
    }

    /// Diagnostic sparsity count over all constraint matrices (and the
    /// compactifier when present); informational only.
    pub fn nnz(&self) -> usize {
        self.mats.iter().map(SparseSymmetric::nnz).sum::<usize>()
            + self.compactifier.as_ref().map_or(0, |c| c.a0.nnz())
    }

    /// A(X) for dense symmetric X.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                context: "apply_operator X side",
                expected: self.n,
                got: x.nrows().max(x.ncols()),
            });
        }
        Ok(DVector::from_iterator(
            self.m(),
            self.mats.iter().map(|a| a.inner_dense(x)),
        ))
    }

    /// A(U U^T) accumulated through row dot products.
    pub fn apply_factored(&self, u: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_factor(u)?;
        Ok(DVector::from_iterator(
            self.m(),
            self.mats.iter().map(|a| a.inner_factored(u)),
        ))
    }

    /// A*(y) = sum_i y_i A_i materialized sparsely.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<SparseSymmetric> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context: "adjoint_operator multiplier length",
                expected: self.m(),
                got: y.len(),
            });
        }
        SparseSymmetric::combine(
            self.n,
            y.iter().zip(&self.mats).map(|(&c, a)| (c, a)),
        )
    }

    /// acc += coeff * sum_i y_i (A_i U): the fused adjoint-times-factor
    /// kernel behind gradients and Hessian products; never materializes
    /// A*(y).
    pub fn adjoint_mul_acc(
        &self,
        coeff: f64,
        y: &DVector<f64>,
        u: &DMatrix<f64>,
        acc: &mut DMatrix<f64>,
    ) {
        debug_assert_eq!(y.len(), self.m());
        for (i, a) in self.mats.iter().enumerate() {
            let c = coeff * y[i];
            if c != 0.0 {
                a.mul_mat_acc(c, u, acc);
            }
        }
    }

    /// Residue r(U) = A(U U^T) - b; with `include_compactifier` the row
    /// <A_0, U U^T> - b_0 is prepended (the "tilde" residue).
    pub fn residue_factored(&self, u: &DMatrix<f64>, include_compactifier: bool) -> Result<DVector<f64>> {
        self.check_factor(u)?;
        let base = self.apply_factored(u)? - &self.b;
        if !include_compactifier {
            return Ok(base);
        }
        let comp = self.require_compactifier("residue with compactifier")?;
        let mut r = DVector::zeros(self.m() + 1);
        r[0] = comp.a0.inner_factored(u) - comp.b0;
        r.rows_mut(1, self.m()).copy_from(&base);
        Ok(r)
    }

    /// Residue at dense X, matching `residue_factored` at X = U U^T.
    pub fn residue_dense(&self, x: &DMatrix<f64>, include_compactifier: bool) -> Result<DVector<f64>> {
        let base = self.apply(x)? - &self.b;
        if !include_compactifier {
            return Ok(base);
        }
        let comp = self.require_compactifier("residue with compactifier")?;
        let mut r = DVector::zeros(self.m() + 1);
        r[0] = comp.a0.inner_dense(x) - comp.b0;
        r.rows_mut(1, self.m()).copy_from(&base);
        Ok(r)
    }

    /// b with b_0 prepended.
    pub fn b_tilde(&self) -> Result<DVector<f64>> {
        let comp = self.require_compactifier("b_tilde")?;
        let mut bt = DVector::zeros(self.m() + 1);
        bt[0] = comp.b0;
        bt.rows_mut(1, self.m()).copy_from(&self.b);
        Ok(bt)
    }

    /// Gram matrix G_ij = <A_i, A_j>; with the compactifier, A_0 occupies
    /// row/column 0.
    pub fn gram(&self, include_compactifier: bool) -> Result<DMatrix<f64>> {
        let mut all: Vec<&SparseSymmetric> = Vec::with_capacity(self.m() + 1);
        if include_compactifier {
            let comp = self.require_compactifier("gram with compactifier")?;
            all.push(&comp.a0);
        }
        all.extend(self.mats.iter());
        let d = all.len();
        let mut g = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = all[i].inner_sparse(all[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// ||A|| = sup_{||Y||_F = 1} ||A(Y)||_2 = sqrt(lambda_max(Gram)), via
    /// power iteration on the PSD Gram with the deterministic all-ones start.
    pub fn norm(&self) -> Result<f64> {
        if self.m() == 0 {
            return Err(Error::invalid("m", "operator_norm needs m >= 1"));
        }
        Ok(linalg::power_largest_psd_dense(&self.gram(false)?).max(0.0).sqrt())
    }

    /// Norm of the compactified operator [A_0; A_1; ...; A_m].
    pub fn norm_tilde(&self) -> Result<f64> {
        self.require_compactifier("norm_tilde")?;
        Ok(linalg::power_largest_psd_dense(&self.gram(true)?).max(0.0).sqrt())
    }

    /// Effective norm used in penalty bounds: tilde when requested, 0 for an
    /// empty operator (sup over an empty row set).
    pub fn effective_norm(&self, include_compactifier: bool) -> Result<f64> {
        if include_compactifier {
            self.norm_tilde()
        } else if self.m() == 0 {
            Ok(0.0)
        } else {
            self.norm()
        }
    }

    /// Rank of the constraint system: eigenvalues of the Gram matrix above
    /// tol * lambda_max (default tol 1e-9). Duplicate or linearly dependent
    /// rows do not increase it.
    pub fn rank(&self, tol: Option<f64>) -> Result<usize> {
        if self.m() == 0 {
            return Ok(0);
        }
        let tol = tol.unwrap_or(RANK_TOL);
        let ev = linalg::symmetric_eigenvalues_asc(&self.gram(false)?);
        let lmax = ev.last().copied().unwrap_or(0.0).max(0.0);
        if lmax == 0.0 {
            return Ok(0);
        }
        Ok(ev.iter().filter(|&&l| l > tol * lmax).count())
    }

    fn check_factor(&self, u: &DMatrix<f64>) -> Result<()> {
        if u.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                context: "factor row count",
                expected: self.n,
                got: u.nrows(),
            });
        }
        Ok(())
    }

    fn require_compactifier(&self, what: &'static str) -> Result<&Compactifier> {
        self.compactifier
            .as_ref()
            .ok_or(Error::MissingCompactifier(what))
    }
}

/// A low-rank factor U (n x k) with an optional evaluation cache. The cache
/// stores the residue and objective of the penalty problem that produced it;
/// validity is owned by the caller's single execution context, and the
/// penalty module refreshes it on every evaluation.
#[derive(Debug, Clone)]
pub struct FactoredPoint {
    pub u: DMatrix<f64>,
    pub cache: Option<PointCache>,
}

#[derive(Debug, Clone)]
pub struct PointCache {
    pub residue: DVector<f64>,
    pub objective: f64,
}

impl FactoredPoint {
    pub fn new(u: DMatrix<f64>) -> Self {
        FactoredPoint { u, cache: None }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.u.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn diag_constraints(n: usize) -> ConstraintOperator {
        let mats = (0..n)
            .map(|i| SparseSymmetric::from_triplets(n, [(i, i, 1.0)]).unwrap())
            .collect();
        ConstraintOperator::new(n, mats, DVector::from_element(n, 1.0)).unwrap()
    }

    fn random_sparse(n: usize, rng: &mut ChaCha8Rng) -> SparseSymmetric {
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                if rng.gen::<f64>() < 0.4 {
                    t.push((i, j, rng.sample::<f64, _>(StandardNormal)));
                }
            }
        }
        SparseSymmetric::from_triplets(n, t).unwrap()
    }

    #[test]
    fn diagonal_operator_extracts_diagonal() {
        let op = diag_constraints(4);
        let x = DMatrix::from_fn(4, 4, |i, j| (i + j) as f64);
        let y = op.apply(&x).unwrap();
        for i in 0..4 {
            assert_relative_eq!(y[i], x[(i, i)]);
        }
    }

    #[test]
    fn adjoint_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, m, k) = (6, 4, 3);
            let mats: Vec<_> = (0..m).map(|_| random_sparse(n, &mut rng)).collect();
            let op = ConstraintOperator::new(n, mats, DVector::zeros(m)).unwrap();
            let u = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = &u * u.transpose();
            let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lhs = op.adjoint(&y).unwrap().inner_dense(&x);
            let rhs = y.dot(&op.apply(&x).unwrap());
            assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn factored_and_dense_residues_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let mats: Vec<_> = (0..3).map(|_| random_sparse(n, &mut rng)).collect();
        let b = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let op = ConstraintOperator::new(n, mats, b)
            .unwrap()
            .with_compactifier(SparseSymmetric::identity(n), n as f64)
            .unwrap();
        let u = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &u * u.transpose();
        for tilde in [false, true] {
            let rf = op.residue_factored(&u, tilde).unwrap();
            let rd = op.residue_dense(&x, tilde).unwrap();
            assert_relative_eq!((rf - rd).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn residue_without_compactifier_errors_when_requested() {
        let op = diag_constraints(3);
        let u = DMatrix::identity(3, 2);
        assert!(matches!(
            op.residue_factored(&u, true),
            Err(Error::MissingCompactifier(_))
        ));
    }

    #[test]
    fn maxcut_gram_is_identity_and_norm_one() {
        let op = diag_constraints(10);
        let g = op.gram(false).unwrap();
        assert_relative_eq!((g - DMatrix::identity(10, 10)).norm(), 0.0);
        assert_relative_eq!(op.norm().unwrap(), 1.0, epsilon = 1e-8);
        assert_eq!(op.rank(None).unwrap(), 10);
    }

    #[test]
    fn duplicate_row_does_not_increase_rank() {
        let n = 10;
        let mut mats: Vec<_> = (0..n)
            .map(|i| SparseSymmetric::from_triplets(n, [(i, i, 1.0)]).unwrap())
            .collect();
        mats.push(mats[0].clone());
        let op = ConstraintOperator::new(n, mats, DVector::zeros(n + 1)).unwrap();
        assert_eq!(op.rank(None).unwrap(), n);
    }

    #[test]
    fn operator_norm_dominates_random_probes_and_is_attained() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 5;
        let mats: Vec<_> = (0..4).map(|_| random_sparse(n, &mut rng)).collect();
        let op = ConstraintOperator::new(n, mats, DVector::zeros(4)).unwrap();
        let norm = op.norm().unwrap();
        for _ in 0..1000 {
            let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = (&a + a.transpose()) * 0.5;
            let y = &y / y.norm();
            let val = op.apply(&y).unwrap().norm();
            assert!(val <= norm + 1e-6, "probe {val} exceeded norm {norm}");
        }
        // the norm is attained at Y* = A*(v) for v the Gram's top eigenvector
        let gram = op.gram(false).unwrap();
        let eig = gram.clone().symmetric_eigen();
        let top = eig.eigenvalues.imax();
        let v = DVector::from(eig.eigenvectors.column(top).into_owned());
        let witness = op.adjoint(&v).unwrap().to_dense();
        let attained = op.apply(&witness).unwrap().norm() / witness.norm();
        assert_relative_eq!(attained, norm, max_relative = 1e-7);
    }

    #[test]
    fn non_pd_compactifier_rejected() {
        let a0 = SparseSymmetric::from_triplets(3, [(0, 0, 1.0), (1, 1, -1.0), (2, 2, 1.0)]).unwrap();
        let op = ConstraintOperator::new(3, vec![], DVector::zeros(0)).unwrap();
        assert!(matches!(
            op.with_compactifier(a0, 3.0),
            Err(Error::CompactifierNotPd { .. })
        ));
    }

    #[test]
    fn trace_bound_from_compactifier() {
        let op = ConstraintOperator::new(4, vec![], DVector::zeros(0))
            .unwrap()
            .with_compactifier(SparseSymmetric::identity(4), 4.0)
            .unwrap();
        let c = op.compactifier().unwrap();
        assert_relative_eq!(c.trace_bound(), 4.0, epsilon = 1e-7);
    }

    #[test]
    fn fused_adjoint_kernel_matches_materialized_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 6;
        let mats: Vec<_> = (0..5).map(|_| random_sparse(n, &mut rng)).collect();
        let op = ConstraintOperator::new(n, mats, DVector::zeros(5)).unwrap();
        let y = DVector::from_fn(5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut acc = DMatrix::zeros(n, 3);
        op.adjoint_mul_acc(2.5, &y, &u, &mut acc);
        let dense = op.adjoint(&y).unwrap().to_dense() * &u * 2.5;
        assert_relative_eq!((acc - dense).norm(), 0.0, epsilon = 1e-12);
    }
}
