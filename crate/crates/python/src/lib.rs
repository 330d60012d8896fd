//! Python bindings for the lowrank-sdp solver. Matrices cross the boundary
//! as lists of rows (list[list[float]]); vectors as flat lists.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lowrank_sdp::certify::{certify, convex_solve, rank_deficiency_report};
use lowrank_sdp::io::{parse_problem, write_problem};
use lowrank_sdp::operator::FactoredPoint;
use lowrank_sdp::penalty::{PenaltyMode, PenaltyProblem};
use lowrank_sdp::perturb::{calibrate_c0, GoePerturbation, GoeSpec};
use lowrank_sdp::problems::{
    build_bad_sdp, build_constrained_ce, build_matcomp, build_maxcut, maxcut_round,
    verify_constrained_ce, Graph, ObservationSet,
};
use lowrank_sdp::solve::{gd, init_random, min_hessian_eig, pgd, SolveStatus, SolverConfig};

fn err(e: lowrank_sdp::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mat_from_rows(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err(format!(
            "{what} must be a nonempty list of nonempty rows"
        )));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn vec_to_list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::SospReached => "sosp_reached",
        SolveStatus::MaxIters => "max_iters",
        SolveStatus::Diverged => "diverged",
    }
}

fn parse_mode(mode: Option<&str>, pp: &PenaltyProblem) -> PyResult<PenaltyMode> {
    match mode {
        None => Ok(if pp.uses_compactifier() {
            PenaltyMode::Compact
        } else {
            PenaltyMode::PdCost
        }),
        Some("compact") => Ok(PenaltyMode::Compact),
        Some("pd-cost") => Ok(PenaltyMode::PdCost),
        Some(other) => Err(PyValueError::new_err(format!(
            "mode must be 'compact' or 'pd-cost', got '{other}'"
        ))),
    }
}

/// Result of a solver run.
#[pyclass(get_all, frozen)]
struct SolveResult {
    u: Vec<Vec<f64>>,
    status: String,
    iterations: usize,
    objective: f64,
    grad_norm: f64,
    residue_norm: f64,
    episodes: usize,
    final_tau: f64,
}

#[pymethods]
impl SolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(status='{}', iterations={}, objective={:.6e}, grad_norm={:.3e})",
            self.status, self.iterations, self.objective, self.grad_norm
        )
    }
}

/// A penalized low-rank SDP instance.
#[pyclass(name = "Problem")]
struct PyProblem {
    pp: PenaltyProblem,
}

#[pymethods]
impl PyProblem {
    #[getter]
    fn n(&self) -> usize {
        self.pp.n()
    }

    #[getter]
    fn num_constraints(&self) -> usize {
        self.pp.op().m()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.pp.mu()
    }

    #[getter]
    fn sigma_g(&self) -> f64 {
        self.pp.sigma_g()
    }

    #[getter]
    fn compactified(&self) -> bool {
        self.pp.uses_compactifier()
    }

    /// Penalized objective L(U).
    fn objective(&self, u: Vec<Vec<f64>>) -> PyResult<f64> {
        let u = mat_from_rows(&u, "u")?;
        self.pp.objective_at(&u).map_err(err)
    }

    /// Gradient of L at U, same shape as U.
    fn gradient(&self, u: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let u = mat_from_rows(&u, "u")?;
        Ok(mat_to_rows(&self.pp.gradient_at(&u).map_err(err)?))
    }

    /// Hessian-vector product of L at U applied to V.
    fn hessian_vec(&self, u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let u = mat_from_rows(&u, "u")?;
        let v = mat_from_rows(&v, "v")?;
        let pt = FactoredPoint::new(u);
        Ok(mat_to_rows(&self.pp.hessian_vec(&pt, &v).map_err(err)?))
    }

    /// Constraint residues A(UU^T) - b (compactifier row first when present).
    fn residue(&self, u: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let u = mat_from_rows(&u, "u")?;
        Ok(vec_to_list(&self.pp.residue_at(&u).map_err(err)?))
    }

    /// Smallest Hessian eigenvalue at U and the corresponding direction.
    #[pyo3(signature = (u, tol=1e-9, seed=0))]
    fn min_hessian_eig(
        &self,
        u: Vec<Vec<f64>>,
        tol: f64,
        seed: u64,
    ) -> PyResult<(f64, Vec<Vec<f64>>)> {
        let u = mat_from_rows(&u, "u")?;
        let pt = FactoredPoint::new(u);
        let (eig, dir) = min_hessian_eig(&self.pp, &pt, tol, seed).map_err(err)?;
        Ok((eig, mat_to_rows(&dir)))
    }

    /// Runs the solver from a random start (or `u0` when given).
    #[pyo3(signature = (k, eps=1e-5, gamma=1.0, seed=0, max_iters=None, method="pgd", u0=None))]
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &self,
        k: usize,
        eps: f64,
        gamma: f64,
        seed: u64,
        max_iters: Option<usize>,
        method: &str,
        u0: Option<Vec<Vec<f64>>>,
    ) -> PyResult<SolveResult> {
        let start = match u0 {
            Some(rows) => {
                let u = mat_from_rows(&rows, "u0")?;
                if u.nrows() != self.pp.n() || u.ncols() != k {
                    return Err(PyValueError::new_err(format!(
                        "u0 is {}x{}, expected {}x{k}",
                        u.nrows(),
                        u.ncols(),
                        self.pp.n()
                    )));
                }
                FactoredPoint::new(u)
            }
            None => init_random(&self.pp, k, seed),
        };
        let mut cfg = SolverConfig::new(eps, gamma, k, seed);
        if let Some(m) = max_iters {
            cfg.max_iters = m;
        }
        let (pt, trace) = match method {
            "pgd" => pgd(&self.pp, start, &cfg).map_err(err)?,
            "gd" => gd(&self.pp, start, &cfg).map_err(err)?,
            other => {
                return Err(PyValueError::new_err(format!(
                    "method must be 'pgd' or 'gd', got '{other}'"
                )))
            }
        };
        let objective = self.pp.objective_at(&pt.u).map_err(err)?;
        let grad_norm = self.pp.gradient_at(&pt.u).map_err(err)?.norm();
        let residue_norm = self.pp.residue_at(&pt.u).map_err(err)?.norm();
        Ok(SolveResult {
            u: mat_to_rows(&pt.u),
            status: status_str(trace.status).to_string(),
            iterations: trace.iters.len(),
            objective,
            grad_norm,
            residue_norm,
            episodes: trace.episodes,
            final_tau: trace.final_tau,
        })
    }

    /// Certifies a candidate point; returns the certificate as a dict.
    #[pyo3(signature = (u, eps=1e-5, gamma=1.0, trace_bound=None))]
    fn certify<'py>(
        &self,
        py: Python<'py>,
        u: Vec<Vec<f64>>,
        eps: f64,
        gamma: f64,
        trace_bound: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let u = mat_from_rows(&u, "u")?;
        let pt = FactoredPoint::new(u);
        let c = certify(&self.pp, &pt, eps, gamma, trace_bound).map_err(err)?;
        let d = PyDict::new_bound(py);
        d.set_item("eps", c.eps)?;
        d.set_item("gamma", c.gamma)?;
        d.set_item("grad_norm", c.grad_norm)?;
        d.set_item("hess_min_eig", c.hess_min_eig)?;
        d.set_item("sigma_k", c.sigma_k)?;
        d.set_item("dual_min_eig", c.dual_min_eig)?;
        d.set_item("gap_bound", c.gap_bound)?;
        d.set_item("trace_bound_assumed", c.trace_bound_assumed)?;
        d.set_item("rank_threshold", c.rank_threshold)?;
        d.set_item("is_eps_fosp", c.is_eps_fosp)?;
        d.set_item("is_eps_gamma_sosp", c.is_eps_gamma_sosp)?;
        d.set_item("is_rank_deficient", c.is_rank_deficient)?;
        d.set_item("certificate_holds", c.certificate_holds)?;
        Ok(d)
    }

    /// Singular values of U and the rank-deficiency ratio sigma_k / sigma_1.
    fn rank_report(&self, u: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
        let u = mat_from_rows(&u, "u")?;
        Ok(rank_deficiency_report(&FactoredPoint::new(u)))
    }

    /// Parameter plan (rank, eps cap, perturbation caps) as a dict.
    #[pyo3(signature = (gamma=1.0, delta=0.01, c0=1.0, mode=None))]
    fn plan<'py>(
        &self,
        py: Python<'py>,
        gamma: f64,
        delta: f64,
        c0: f64,
        mode: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mode = parse_mode(mode, &self.pp)?;
        let p = self.pp.plan_parameters(gamma, delta, c0, mode).map_err(err)?;
        let d = PyDict::new_bound(py);
        d.set_item("B", p.b)?;
        d.set_item("k_min", p.k_min)?;
        d.set_item("eps_max", p.eps_max)?;
        d.set_item("sigma_G_max", p.sigma_g_max)?;
        d.set_item("sigma_G_max_theorem", p.sigma_g_max_theorem)?;
        d.set_item("c0", p.c0)?;
        d.set_item("delta", p.delta)?;
        Ok(d)
    }

    /// A-priori residue bound at eps-FOSPs.
    #[pyo3(signature = (eps, mode=None))]
    fn residue_bound(&self, eps: f64, mode: Option<&str>) -> PyResult<f64> {
        let mode = parse_mode(mode, &self.pp)?;
        self.pp.residue_bound_b(eps, mode).map_err(err)
    }

    /// Gradient and Hessian Lipschitz bounds valid on the ball ||U||_F <= tau.
    fn lipschitz_bounds(&self, tau: f64) -> PyResult<(f64, f64)> {
        let b = self.pp.lipschitz_bounds(tau).map_err(err)?;
        Ok((b.l, b.rho))
    }

    /// Solves the convex penalized problem over the PSD cone by projected
    /// gradient descent; returns (X, objective value).
    #[pyo3(signature = (max_iters=100_000, tol=1e-9, x0=None))]
    fn convex_solve(
        &self,
        max_iters: usize,
        tol: f64,
        x0: Option<Vec<Vec<f64>>>,
    ) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let x0 = match x0 {
            Some(rows) => Some(mat_from_rows(&rows, "x0")?),
            None => None,
        };
        let (x, value) = convex_solve(&self.pp, x0, max_iters, tol).map_err(err)?;
        Ok((mat_to_rows(&x), value))
    }

    /// Dual matrix C + G + 2 mu A*(r) at U, densely.
    fn dual_matrix(&self, u: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let u = mat_from_rows(&u, "u")?;
        let pt = FactoredPoint::new(u);
        Ok(mat_to_rows(&self.pp.dual_matrix(&pt).map_err(err)?.to_dense()))
    }

    /// Serializes the instance to the text problem format.
    fn to_text(&self) -> String {
        write_problem(&self.pp)
    }

    /// Parses an instance from the text problem format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<PyProblem> {
        Ok(PyProblem {
            pp: parse_problem(text).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(n={}, m={}, mu={}, sigma_g={}, compactified={})",
            self.pp.n(),
            self.pp.op().m(),
            self.pp.mu(),
            self.pp.sigma_g(),
            self.pp.uses_compactifier()
        )
    }
}

/// Max-Cut relaxation with unit-diagonal constraints and a trace compactifier.
#[pyfunction]
#[pyo3(signature = (n, edges, mu=1.0, sigma_g=0.0, seed=0))]
fn maxcut(
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    mu: f64,
    sigma_g: f64,
    seed: u64,
) -> PyResult<PyProblem> {
    let g = Graph::new(n, edges).map_err(err)?;
    Ok(PyProblem {
        pp: build_maxcut(&g, mu, sigma_g, seed).map_err(err)?,
    })
}

/// Random-hyperplane rounding of a factor; returns (best cut weight, sides).
#[pyfunction]
#[pyo3(signature = (n, edges, u, rounds=100, seed=0))]
fn maxcut_rounding(
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    u: Vec<Vec<f64>>,
    rounds: usize,
    seed: u64,
) -> PyResult<(f64, Vec<i8>)> {
    let g = Graph::new(n, edges).map_err(err)?;
    let u = mat_from_rows(&u, "u")?;
    let r = maxcut_round(&g, &u, rounds, seed);
    Ok((r.best_cut, r.best_side))
}

/// Matrix completion on the block lift; entries are (row, col, value).
#[pyfunction]
#[pyo3(signature = (rows, cols, entries, mu=1.0, sigma_g=0.0, seed=0))]
fn matcomp(
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    mu: f64,
    sigma_g: f64,
    seed: u64,
) -> PyResult<PyProblem> {
    let obs = ObservationSet::new(rows, cols, entries).map_err(err)?;
    Ok(PyProblem {
        pp: build_matcomp(&obs, mu, sigma_g, seed).map_err(err)?,
    })
}

/// The penalized instance with a spurious rank-(n-1) SOSP. Returns
/// (problem, u_bar, u_opt, coupling): the spurious factor, a global
/// minimizer, and the constant tying the two constraint scales.
#[pyfunction]
fn bad_sdp(n: usize) -> PyResult<(PyProblem, Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
    let (pp, w) = build_bad_sdp(n).map_err(err)?;
    Ok((
        PyProblem { pp },
        mat_to_rows(&w.u_bar.u),
        mat_to_rows(&w.u_opt.u),
        w.coupling,
    ))
}

/// The constrained counterexample with a strict-curvature spurious point.
/// Returns (problem, u, x0, checks); checks is a list of
/// (name, measured value, passed) from the built-in verifier.
#[pyfunction]
#[pyo3(signature = (n, tol=1e-10))]
fn constrained_ce(
    n: usize,
    tol: f64,
) -> PyResult<(PyProblem, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<(String, f64, bool)>)> {
    let ce = build_constrained_ce(n).map_err(err)?;
    let report = verify_constrained_ce(&ce, tol);
    let checks = report
        .checks
        .iter()
        .map(|c| (c.name.to_string(), c.value, c.passed))
        .collect();
    let pp = PenaltyProblem::new(ce.cost.clone(), ce.op.clone(), 1.0, None, false).map_err(err)?;
    Ok((
        PyProblem { pp },
        mat_to_rows(&ce.u.u),
        mat_to_rows(&ce.x0),
        checks,
    ))
}

/// Calibrates the smallest-singular-value constant for Gaussian smoothing.
#[pyfunction]
#[pyo3(signature = (n=50, k=10, sigma_g=1.0, trials=200, seed=0, c0=1.0))]
fn calibrate<'py>(
    py: Python<'py>,
    n: usize,
    k: usize,
    sigma_g: f64,
    trials: usize,
    seed: u64,
    c0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = calibrate_c0(n, k, sigma_g, trials, seed, c0).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("c0_hat", r.c0_hat)?;
    d.set_item("violation_rate", r.violation_rate)?;
    d.set_item("trials", r.trials)?;
    Ok(d)
}

/// Samples the symmetric Gaussian perturbation for (n, sigma_g, seed).
#[pyfunction]
fn sample_goe(n: usize, sigma_g: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    if sigma_g <= 0.0 {
        return Err(PyValueError::new_err("sigma_g must be positive"));
    }
    let p = GoePerturbation::sample(GoeSpec { n, sigma_g, seed });
    Ok(mat_to_rows(&p.matrix.to_dense()))
}

#[pymodule]
fn lowrank_sdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<SolveResult>()?;
    m.add_function(wrap_pyfunction!(maxcut, m)?)?;
    m.add_function(wrap_pyfunction!(maxcut_rounding, m)?)?;
    m.add_function(wrap_pyfunction!(matcomp, m)?)?;
    m.add_function(wrap_pyfunction!(bad_sdp, m)?)?;
    m.add_function(wrap_pyfunction!(constrained_ce, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(sample_goe, m)?)?;
    Ok(())
}
