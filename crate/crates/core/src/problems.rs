//! Problem builders: Max-Cut, matrix completion, and two reference
//! instances with closed-form witnesses.
//!
//! The two reference instances exercise the solver's adversarial regime:
//!
//! * [`build_bad_sdp`] constructs a penalized problem (mu = 1/2, zero cost)
//!   whose constraint scaling is tuned so that a full-rank non-optimal
//!   critical point has positive-semidefinite Hessian. The unique feasible
//!   PSD matrix has rank one, so the spurious point is maximally wrong.
//! * [`build_constrained_ce`] constructs an equality-constrained instance
//!   whose identity-block factor is a second-order stationary point of the
//!   constrained program while a feasible comparison point has strictly
//!   smaller cost. [`verify_constrained_ce`] re-derives every claimed
//!   property numerically.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::{parse_token, tokens, ContentLines};
use crate::operator::{ConstraintOperator, FactoredPoint};
use crate::penalty::PenaltyProblem;
use crate::perturb::{GoePerturbation, GoeSpec};
use crate::seed::indexed_seed;
use crate::sparse::SparseSymmetric;

/// Tangent directions sampled by [`verify_constrained_ce`].
const CE_TANGENT_TRIALS: usize = 100;
/// Fixed seed for the tangent sampler so verification is reproducible.
const CE_TANGENT_SEED: u64 = 0x7a46_e247;

/// Undirected weighted graph. Edges are stored once with u < v.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "graph needs at least one vertex"));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(
                    "edges",
                    format!("edge ({u}, {v}) out of range for {n} vertices"),
                ));
            }
            if u == v {
                return Err(Error::invalid("edges", format!("self-loop at vertex {u}")));
            }
            if !w.is_finite() {
                return Err(Error::invalid(
                    "edges",
                    format!("edge ({u}, {v}) has non-finite weight {w}"),
                ));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::invalid(
                    "edges",
                    format!("duplicate edge ({}, {})", key.0, key.1),
                ));
            }
            normalized.push((key.0, key.1, w));
        }
        Ok(Graph {
            n,
            edges: normalized,
        })
    }

    /// Cycle on n >= 3 vertices, unit weights.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid("n", "a cycle needs at least 3 vertices"));
        }
        let edges = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        Graph::new(n, edges)
    }

    /// Complete bipartite graph K_{a,b}, unit weights. Left part is 0..a.
    pub fn complete_bipartite(a: usize, b: usize) -> Result<Self> {
        if a == 0 || b == 0 {
            return Err(Error::invalid("a", "both parts must be nonempty"));
        }
        let mut edges = Vec::with_capacity(a * b);
        for i in 0..a {
            for j in 0..b {
                edges.push((i, a + j, 1.0));
            }
        }
        Graph::new(a + b, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|&(_, _, w)| w).sum()
    }

    /// Symmetric adjacency matrix (each edge appears at (u, v) and (v, u)).
    pub fn adjacency(&self) -> SparseSymmetric {
        let triplets: Vec<_> = self.edges.iter().map(|&(u, v, w)| (u, v, w)).collect();
        SparseSymmetric::from_triplets(self.n, triplets)
            .expect("validated edges always form a matrix")
    }

    /// Parses "n m" header followed by m lines "u v [weight]", 0-based.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = ContentLines::new(text);
        let (line_no, header) = lines.expect_content("graph header 'n m'")?;
        let toks = tokens(header);
        if toks.len() != 2 {
            return Err(Error::parse(
                line_no,
                toks.first().map_or(1, |t| t.0),
                "expected header 'n m'",
            ));
        }
        let n: usize = parse_token(line_no, toks[0].0, toks[0].1, "vertex count")?;
        let m: usize = parse_token(line_no, toks[1].0, toks[1].1, "edge count")?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (line_no, line) = lines.expect_content("edge line 'u v [weight]'")?;
            let toks = tokens(line);
            if toks.len() != 2 && toks.len() != 3 {
                return Err(Error::parse(
                    line_no,
                    toks.first().map_or(1, |t| t.0),
                    "expected 'u v' or 'u v weight'",
                ));
            }
            let u: usize = parse_token(line_no, toks[0].0, toks[0].1, "vertex index")?;
            let v: usize = parse_token(line_no, toks[1].0, toks[1].1, "vertex index")?;
            let w: f64 = if toks.len() == 3 {
                parse_token(line_no, toks[2].0, toks[2].1, "edge weight")?
            } else {
                1.0
            };
            edges.push((u, v, w));
        }
        Graph::new(n, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.edges.len());
        for &(u, v, w) in &self.edges {
            out.push_str(&format!("{u} {v} {w:.16e}\n"));
        }
        out
    }
}

/// Observed entries of an n1 x n2 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("rows", "matrix dimensions must be positive"));
        }
        let mut seen = HashSet::new();
        for &(i, j, v) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::invalid(
                    "entries",
                    format!("observation ({i}, {j}) out of range for {rows}x{cols}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::invalid(
                    "entries",
                    format!("observation ({i}, {j}) has non-finite value {v}"),
                ));
            }
            if !seen.insert((i, j)) {
                return Err(Error::invalid(
                    "entries",
                    format!("duplicate observation ({i}, {j})"),
                ));
            }
        }
        Ok(ObservationSet {
            rows,
            cols,
            entries,
        })
    }

    /// Observes a fixed fraction of entries of `m`, chosen by seeded shuffle
    /// so the count is exact and reproducible.
    pub fn sample(m: &DMatrix<f64>, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid("fraction", "must lie in [0, 1]"));
        }
        let total = m.nrows() * m.ncols();
        let mut idx: Vec<usize> = (0..total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let count = (fraction * total as f64).round() as usize;
        let entries = idx[..count]
            .iter()
            .map(|&flat| {
                let (i, j) = (flat / m.ncols(), flat % m.ncols());
                (i, j, m[(i, j)])
            })
            .collect();
        ObservationSet::new(m.nrows(), m.ncols(), entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Parses "n1 n2 count" header followed by count lines "i j value".
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = ContentLines::new(text);
        let (line_no, header) = lines.expect_content("observation header 'n1 n2 count'")?;
        let toks = tokens(header);
        if toks.len() != 3 {
            return Err(Error::parse(
                line_no,
                toks.first().map_or(1, |t| t.0),
                "expected header 'n1 n2 count'",
            ));
        }
        let rows: usize = parse_token(line_no, toks[0].0, toks[0].1, "row count")?;
        let cols: usize = parse_token(line_no, toks[1].0, toks[1].1, "column count")?;
        let count: usize = parse_token(line_no, toks[2].0, toks[2].1, "observation count")?;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let (line_no, line) = lines.expect_content("observation line 'i j value'")?;
            let toks = tokens(line);
            if toks.len() != 3 {
                return Err(Error::parse(
                    line_no,
                    toks.first().map_or(1, |t| t.0),
                    "expected 'i j value'",
                ));
            }
            let i: usize = parse_token(line_no, toks[0].0, toks[0].1, "row index")?;
            let j: usize = parse_token(line_no, toks[1].0, toks[1].1, "column index")?;
            let v: f64 = parse_token(line_no, toks[2].0, toks[2].1, "observed value")?;
            entries.push((i, j, v));
        }
        ObservationSet::new(rows, cols, entries)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, self.entries.len());
        for &(i, j, v) in &self.entries {
            out.push_str(&format!("{i} {j} {v:.16e}\n"));
        }
        out
    }
}

/// Max-Cut relaxation: cost is the adjacency matrix, one diagonal constraint
/// X_ii = 1 per vertex, compactified with (I, n). sigma_g = 0 disables the
/// cost perturbation; `seed` keys it otherwise.
pub fn build_maxcut(g: &Graph, mu: f64, sigma_g: f64, seed: u64) -> Result<PenaltyProblem> {
    if sigma_g < 0.0 {
        return Err(Error::invalid("sigma_g", "must be nonnegative"));
    }
    let n = g.n();
    let cost = g.adjacency();
    let mats = (0..n)
        .map(|i| SparseSymmetric::from_triplets(n, [(i, i, 1.0)]))
        .collect::<Result<Vec<_>>>()?;
    let b = DVector::from_element(n, 1.0);
    let op = ConstraintOperator::new(n, mats, b)?
        .with_compactifier(SparseSymmetric::identity(n), n as f64)?;
    let perturbation = (sigma_g > 0.0).then(|| {
        GoePerturbation::sample(GoeSpec {
            n,
            sigma_g,
            seed,
        })
    });
    PenaltyProblem::new(cost, op, mu, perturbation, true)
}

/// Hyperplane-rounding result for a Max-Cut factor.
#[derive(Debug, Clone)]
pub struct MaxcutRounding {
    pub best_cut: f64,
    pub best_side: Vec<i8>,
    pub rounds: usize,
    pub seed: u64,
}

/// Rounds a factor U to +-1 assignments with random hyperplanes and reports
/// the best cut found. For sides s, the cut weight is
/// W/2 - <C, s s^T>/4 since the symmetric adjacency counts each edge twice.
pub fn maxcut_round(g: &Graph, u: &DMatrix<f64>, rounds: usize, seed: u64) -> MaxcutRounding {
    assert_eq!(u.nrows(), g.n(), "factor rows must match vertex count");
    let w_total = g.total_weight();
    let mut best_cut = f64::NEG_INFINITY;
    let mut best_side = vec![1i8; g.n()];
    for r in 0..rounds {
        let mut rng = ChaCha8Rng::seed_from_u64(indexed_seed(seed, r as u64));
        let dir = DVector::from_fn(u.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let scores = u * &dir;
        let side: Vec<i8> = scores.iter().map(|&s| if s >= 0.0 { 1 } else { -1 }).collect();
        let mut cross = 0.0;
        for &(a, b, w) in g.edges() {
            cross += 2.0 * w * f64::from(side[a] * side[b]);
        }
        let cut = w_total / 2.0 - cross / 4.0;
        if cut > best_cut {
            best_cut = cut;
            best_side = side;
        }
    }
    MaxcutRounding {
        best_cut,
        best_side,
        rounds,
        seed,
    }
}

/// Matrix completion: the variable is the (n1+n2)-sided symmetric lift,
/// cost is the identity (trace surrogate), and each observation (i, j, v)
/// pins the off-diagonal block entry via a matrix with 1/2 at (i, n1+j).
/// The cost is positive definite, so no compactifier is attached.
pub fn build_matcomp(
    obs: &ObservationSet,
    mu: f64,
    sigma_g: f64,
    seed: u64,
) -> Result<PenaltyProblem> {
    if sigma_g < 0.0 {
        return Err(Error::invalid("sigma_g", "must be nonnegative"));
    }
    let n = obs.rows() + obs.cols();
    let cost = SparseSymmetric::identity(n);
    let mut mats = Vec::with_capacity(obs.entries().len());
    let mut b = DVector::zeros(obs.entries().len());
    for (r, &(i, j, v)) in obs.entries().iter().enumerate() {
        mats.push(SparseSymmetric::from_triplets(n, [(i, obs.rows() + j, 0.5)])?);
        b[r] = v;
    }
    let op = ConstraintOperator::new(n, mats, b)?;
    let perturbation = (sigma_g > 0.0).then(|| {
        GoePerturbation::sample(GoeSpec {
            n,
            sigma_g,
            seed,
        })
    });
    PenaltyProblem::new(cost, op, mu, perturbation, false)
}

/// Closed-form witnesses for the bad penalized instance.
#[derive(Debug, Clone)]
pub struct BadSdpWitnesses {
    /// Full-rank spurious critical point [I_{n-1}; 0], an n x (n-1) factor.
    pub u_bar: FactoredPoint,
    /// Global minimizer: zero except sqrt(5(n-1)/3) in the last row.
    pub u_opt: FactoredPoint,
    /// Constraint scaling sqrt(6/(n-1)) at which the Hessian flattens.
    pub coupling: f64,
}

/// Penalized instance (mu = 1/2, zero cost, no compactifier) with a spurious
/// second-order stationary factor at objective 5(n-1)/3 while the global
/// minimum is 0. Constraints: n-1 couplings 2 X_{i,n-1} = 0, then
/// eps Tr(X) = eps diag-weighted trace = 5(n-1) eps / 3 twice, with
/// eps = sqrt(6/(n-1)). Requires n >= 3.
pub fn build_bad_sdp(n: usize) -> Result<(PenaltyProblem, BadSdpWitnesses)> {
    if n < 3 {
        return Err(Error::invalid("n", "bad instance needs n >= 3"));
    }
    let nf = n as f64;
    let eps = (6.0 / (nf - 1.0)).sqrt();
    let last = n - 1;
    let mut mats = Vec::with_capacity(n + 1);
    for i in 0..last {
        mats.push(SparseSymmetric::from_triplets(n, [(i, last, 1.0)])?);
    }
    mats.push(SparseSymmetric::identity(n).scale(eps));
    let mut heavy: Vec<(usize, usize, f64)> = (0..last).map(|i| (i, i, 2.0 * eps)).collect();
    heavy.push((last, last, eps));
    mats.push(SparseSymmetric::from_triplets(n, heavy)?);
    let rhs = 5.0 * (nf - 1.0) * eps / 3.0;
    let mut b = DVector::zeros(n + 1);
    b[n - 1] = rhs;
    b[n] = rhs;
    let op = ConstraintOperator::new(n, mats, b)?;
    let pp = PenaltyProblem::new(SparseSymmetric::zeros(n), op, 0.5, None, false)?;

    let u_bar = FactoredPoint::new(DMatrix::identity(n, n - 1));
    let mut opt = DMatrix::zeros(n, n - 1);
    opt[(last, 0)] = (5.0 * (nf - 1.0) / 3.0).sqrt();
    let u_opt = FactoredPoint::new(opt);
    Ok((
        pp,
        BadSdpWitnesses {
            u_bar,
            u_opt,
            coupling: eps,
        },
    ))
}

/// Equality-constrained instance with a spurious second-order stationary
/// point, together with every object needed to check it.
#[derive(Debug, Clone)]
pub struct ConstrainedCe {
    /// Cost matrix: identity block, all-ones couplings into the last two
    /// rows, and 2n in the corner before last.
    pub cost: SparseSymmetric,
    /// n-2 coupling constraints (all with zero right-hand side) plus the
    /// trace constraint Tr(X) = n-2, in that order.
    pub op: ConstraintOperator,
    /// The spurious factor U = [I_{n-2}; 0; 0], an n x (n-2) matrix.
    pub u: FactoredPoint,
    /// Direction vector (1, ..., 1, 0, -1) generating the comparison point.
    pub w: DVector<f64>,
    /// Feasible comparison point ((n-2)/n) (w w^T + e_n e_n^T) with strictly
    /// smaller cost than U U^T.
    pub x0: DMatrix<f64>,
    /// Curvature block diag(2n-1, -(n-1)); note [1,-1] D [1,-1]^T = n.
    pub d: Matrix2<f64>,
}

/// Builds the constrained counterexample for n >= 4 (factor rank n-2).
pub fn build_constrained_ce(n: usize) -> Result<ConstrainedCe> {
    if n < 4 {
        return Err(Error::invalid("n", "constrained instance needs n >= 4"));
    }
    let nf = n as f64;
    let p = n - 2;
    let mut cost_entries = Vec::new();
    for i in 0..p {
        cost_entries.push((i, i, 1.0));
        cost_entries.push((i, n - 2, 1.0));
        cost_entries.push((i, n - 1, 1.0));
    }
    cost_entries.push((n - 2, n - 2, 2.0 * nf));
    let cost = SparseSymmetric::from_triplets(n, cost_entries)?;

    let mut mats = Vec::with_capacity(p + 1);
    for i in 0..p {
        mats.push(SparseSymmetric::from_triplets(
            n,
            [(i, n - 2, 1.0), (i, n - 1, 1.0), (n - 1, n - 1, 1.0)],
        )?);
    }
    mats.push(SparseSymmetric::identity(n));
    let mut b = DVector::zeros(p + 1);
    b[p] = nf - 2.0;
    let op = ConstraintOperator::new(n, mats, b)?;

    let u = FactoredPoint::new(DMatrix::identity(n, p));
    let mut w = DVector::from_element(n, 1.0);
    w[n - 2] = 0.0;
    w[n - 1] = -1.0;
    let scale = (nf - 2.0) / nf;
    let mut x0 = &w * w.transpose();
    x0[(n - 1, n - 1)] += 1.0;
    x0 *= scale;
    let d = Matrix2::new(2.0 * nf - 1.0, 0.0, 0.0, -(nf - 1.0));
    Ok(ConstrainedCe {
        cost,
        op,
        u,
        w,
        x0,
        d,
    })
}

/// One named verification check.
#[derive(Debug, Clone)]
pub struct CeCheck {
    pub name: &'static str,
    /// The measured quantity (residual norm, eigenvalue, ratio deviation...).
    pub value: f64,
    pub passed: bool,
}

/// Outcome of re-deriving the counterexample's properties numerically.
#[derive(Debug, Clone)]
pub struct CeReport {
    pub checks: Vec<CeCheck>,
    pub all_passed: bool,
}

impl CeReport {
    pub fn check(&self, name: &str) -> Option<&CeCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Verifies the constrained counterexample from its raw data: feasibility of
/// both points, first-order stationarity of U with unit multipliers, the
/// block form of the Lagrangian curvature matrix, and positivity of the
/// second-order increase along sampled constraint-tangent directions with
/// the exact per-unit-mass ratio n. Tangents are sampled with a fixed seed.
pub fn verify_constrained_ce(ce: &ConstrainedCe, tol: f64) -> CeReport {
    let n = ce.cost.side();
    let p = n - 2;
    let nf = n as f64;
    let mut checks = Vec::new();
    let mut push = |name: &'static str, value: f64, passed: bool| {
        checks.push(CeCheck {
            name,
            value,
            passed,
        });
    };

    let uu = &ce.u.u;
    let r_u = ce
        .op
        .residue_factored(uu, false)
        .expect("factor side matches operator");
    push("u_feasible", r_u.amax(), r_u.amax() <= tol);

    let r_x0 = ce
        .op
        .residue_dense(&ce.x0, false)
        .expect("comparison point side matches operator");
    push("x0_feasible", r_x0.amax(), r_x0.amax() <= tol);

    let x0_eigs = crate::linalg::symmetric_eigenvalues_asc(&ce.x0);
    push("x0_psd", x0_eigs[0], x0_eigs[0] >= -tol);

    let obj_u = ce.cost.inner_factored(uu);
    let obj_x0 = ce.cost.inner_dense(&ce.x0);
    let gap = obj_u - obj_x0;
    push("x0_improves_objective", gap, gap > 0.0);

    // First-order stationarity with all multipliers equal to one:
    // C U = sum_i A_i U (the trace constraint contributes I U).
    let cu = ce.cost.mul_mat(uu);
    let mut expected = DMatrix::zeros(n, p);
    for a in ce.op.mats() {
        expected += a.mul_mat(uu);
    }
    let fo = (cu - expected).norm();
    push("first_order_identity", fo, fo <= tol);

    // Lagrangian curvature matrix M = C - sum_i A_i - I must be exactly
    // zero outside the trailing 2x2 block, where it equals D.
    let mut terms: Vec<(f64, &SparseSymmetric)> = vec![(1.0, &ce.cost)];
    for a in ce.op.mats() {
        terms.push((-1.0, a));
    }
    let m = SparseSymmetric::combine(n, terms).expect("all sides agree");
    let mut block_dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i >= p && j >= p {
                ce.d[(i - p, j - p)]
            } else {
                0.0
            };
            block_dev = block_dev.max((m.get(i, j) - want).abs());
        }
    }
    push("curvature_block_form", block_dev, block_dev <= tol);

    let ratio_d = Vector2::new(1.0, -1.0).dot(&(ce.d * Vector2::new(1.0, -1.0)));
    push(
        "d_contraction_equals_n",
        (ratio_d - nf).abs(),
        (ratio_d - nf).abs() <= tol,
    );

    // Constraint-tangent directions at U: traceless top block (trace
    // constraint) and bottom rows (delta, -delta) (coupling constraints).
    // The second-order increase along any feasible curve with velocity
    // DeltaU is tr(DeltaU^T M DeltaU) = n ||delta||^2, i.e. exactly n per
    // unit mass where mass is half the squared norm of the bottom rows.
    let mut rng = ChaCha8Rng::seed_from_u64(CE_TANGENT_SEED);
    let mut min_q = f64::INFINITY;
    let mut max_ratio_dev = 0.0f64;
    for _ in 0..CE_TANGENT_TRIALS {
        let mut du = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let top_trace: f64 = (0..p).map(|i| du[(i, i)]).sum();
        for i in 0..p {
            du[(i, i)] -= top_trace / p as f64;
        }
        for j in 0..p {
            du[(n - 1, j)] = -du[(n - 2, j)];
        }
        let q = m.inner_factored(&du);
        let mass: f64 = (0..p).map(|j| du[(n - 2, j)].powi(2)).sum();
        min_q = min_q.min(q);
        max_ratio_dev = max_ratio_dev.max((q / (nf * mass) - 1.0).abs());
    }
    push("tangent_curvature_positive", min_q, min_q > 0.0);
    push(
        "curvature_ratio_n",
        max_ratio_dev,
        max_ratio_dev <= tol.max(1e-12),
    );

    // Directions with zero bottom rows are exactly flat.
    let mut flat = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let top_trace: f64 = (0..p).map(|i| flat[(i, i)]).sum();
    for i in 0..p {
        flat[(i, i)] -= top_trace / p as f64;
    }
    for j in 0..p {
        flat[(n - 2, j)] = 0.0;
        flat[(n - 1, j)] = 0.0;
    }
    let q_flat = m.inner_factored(&flat).abs();
    push("top_block_directions_flat", q_flat, q_flat <= tol);

    let all_passed = checks.iter().all(|c| c.passed);
    CeReport { checks, all_passed }
}
