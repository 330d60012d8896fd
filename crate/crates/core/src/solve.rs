//! Saddle-escaping first-order solvers.
//!
//! `gd` runs plain gradient descent to an eps-approximate first-order point.
//! `pgd` follows the perturbed scheme: whenever the gradient is small it asks
//! the smallest-Hessian-eigenvalue oracle whether second-order stationarity
//! already holds, and otherwise kicks the iterate with uniform ball noise and
//! watches whether t_thres descent steps buy an f_thres decrease. A failed
//! escape episode certifies the pre-noise candidate as the answer.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::operator::FactoredPoint;
use crate::penalty::{PenaltyMode, PenaltyProblem};
use crate::seed::{child_seed, indexed_seed};

/// Armijo sufficient-decrease constant.
const ARMIJO_C1: f64 = 1e-4;
/// Largest step the backtracking search will open up to.
const MAX_STEP: f64 = 1e6;
/// Step floor below which backtracking declares divergence.
const MIN_STEP: f64 = 1e-20;
/// Upper cap on the derived escape-episode length.
const T_THRES_CAP: usize = 1000;
/// Relative accuracy requested from the Hessian eigenvalue oracle.
const HESS_EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Constant step 1/l from the smoothness bound at the current tau.
    #[value(name = "fixed")]
    Fixed1OverL,
    /// Armijo halving line search (c1 = 1e-4), warm-started between steps.
    Backtracking,
}

/// Escape-episode parameters in the style of perturbed gradient descent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PgdParams {
    /// Frobenius radius of the uniform perturbation ball.
    pub noise_radius: f64,
    /// Episode length in iterations.
    pub t_thres: usize,
    /// Required objective decrease for a successful escape.
    pub f_thres: f64,
    /// Failure probability budget (recorded; shapes the defaults only).
    pub delta: f64,
    /// Upper bound on f(U0) - f* (recorded; shapes the defaults only).
    pub delta_f: f64,
}

impl PgdParams {
    /// Defaults derived from the target accuracy and the smoothness bounds:
    /// noise_radius = sqrt(eps) min(1, 1/sqrt(l)),
    /// t_thres = ceil(l / sqrt(rho eps)) capped at 1000,
    /// f_thres = 0.1 (gamma sqrt(eps))^3 / rho^2.
    pub fn derived(eps: f64, gamma: f64, l: f64, rho: f64, delta: f64, delta_f: f64) -> PgdParams {
        let noise_radius = eps.sqrt() * (1.0f64).min(1.0 / l.sqrt());
        let t_thres = if rho > 0.0 {
            ((l / (rho * eps).sqrt()).ceil() as usize).clamp(1, T_THRES_CAP)
        } else {
            T_THRES_CAP
        };
        let f_thres = if rho > 0.0 {
            0.1 * (gamma * eps.sqrt()).powi(3) / (rho * rho)
        } else {
            f64::INFINITY
        };
        PgdParams {
            noise_radius,
            t_thres,
            f_thres,
            delta,
            delta_f,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Target gradient norm.
    pub eps: f64,
    /// Curvature parameter: second-order target is lambda_min >= -gamma sqrt(eps).
    pub gamma: f64,
    pub max_iters: usize,
    pub step_mode: StepMode,
    /// Escape-episode parameters; `None` lets `pgd` derive them.
    pub pgd: Option<PgdParams>,
    pub seed: u64,
    /// Trust radius for the Lipschitz bounds; `None` picks
    /// 2x the stationary-point norm bound (or 2 max(||U0||, 1) when no bound
    /// applies). Iterates escaping the ball double it and refresh l.
    pub tau: Option<f64>,
    /// Factorization rank; must match U0's column count.
    pub k: usize,
}

impl SolverConfig {
    pub fn new(eps: f64, gamma: f64, k: usize, seed: u64) -> SolverConfig {
        SolverConfig {
            eps,
            gamma,
            max_iters: 10_000,
            step_mode: StepMode::Backtracking,
            pgd: None,
            seed,
            tau: None,
            k,
        }
    }

    fn validate(&self, pt: &FactoredPoint) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid("eps", format!("must be > 0, got {}", self.eps)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("must be > 0, got {}", self.gamma)));
        }
        if self.k != pt.k() {
            return Err(Error::DimensionMismatch {
                context: "config rank k vs U0 columns",
                expected: self.k,
                got: pt.k(),
            });
        }
        if let Some(p) = &self.pgd {
            if !(p.noise_radius > 0.0) {
                return Err(Error::invalid(
                    "noise_radius",
                    format!("must be > 0, got {}", p.noise_radius),
                ));
            }
            if p.t_thres == 0 {
                return Err(Error::invalid("t_thres", "must be >= 1"));
            }
        }
        if !pt.u.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("U0", "contains non-finite entries"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    SospReached,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub residue_norm: f64,
    /// Step size taken from this point (0 on perturbation rows).
    pub step: f64,
    pub perturbed: bool,
    /// ||U||_F before the step; lets tests flag tau-ball exits.
    pub u_norm: f64,
    /// True when this iterate left the trust ball and tau was doubled.
    pub tau_doubled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iters: Vec<IterRecord>,
    pub status: SolveStatus,
    /// Number of perturbation episodes started (pgd only).
    pub episodes: usize,
    /// Trust radius in effect at termination.
    pub final_tau: f64,
}

/// Gradient descent to an eps-approximate first-order point. A point already
/// below the gradient target returns immediately with an empty trace.
pub fn gd(
    pp: &PenaltyProblem,
    u0: FactoredPoint,
    cfg: &SolverConfig,
) -> Result<(FactoredPoint, SolveTrace)> {
    run(pp, u0, cfg, false)
}

/// Perturbed gradient descent returning an approximate second-order
/// stationary point.
pub fn pgd(
    pp: &PenaltyProblem,
    u0: FactoredPoint,
    cfg: &SolverConfig,
) -> Result<(FactoredPoint, SolveTrace)> {
    run(pp, u0, cfg, true)
}

struct Episode {
    start: usize,
    f_cand: f64,
    u_cand: FactoredPoint,
}

fn run(
    pp: &PenaltyProblem,
    u0: FactoredPoint,
    cfg: &SolverConfig,
    perturbing: bool,
) -> Result<(FactoredPoint, SolveTrace)> {
    cfg.validate(&u0)?;
    let mut pt = u0;
    let mut tau = match cfg.tau {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::invalid("tau", format!("must be > 0, got {t}"))),
        None => default_tau(pp, &pt, cfg.eps),
    };
    let mut bounds = pp.lipschitz_bounds(tau)?;
    let pgd_params = if perturbing {
        Some(cfg.pgd.unwrap_or_else(|| {
            PgdParams::derived(cfg.eps, cfg.gamma, bounds.l, bounds.rho, 0.1, 1.0)
        }))
    } else {
        None
    };

    let noise_root = child_seed(cfg.seed, "noise");
    let lanczos_root = child_seed(cfg.seed, "lanczos");
    let mut trace = SolveTrace {
        iters: Vec::new(),
        status: SolveStatus::MaxIters,
        episodes: 0,
        final_tau: tau,
    };
    let mut episode: Option<Episode> = None;
    let mut eig_checks = 0u64;
    let mut eta_warm: f64 = 1.0;
    let mut tau_doubled_flag = false;

    let mut iter = 0;
    while iter < cfg.max_iters {
        let grad = pp.gradient(&mut pt)?;
        let cache = pt.cache.as_ref().expect("gradient refreshes the cache");
        let obj = cache.objective;
        let residue_norm = cache.residue.norm();
        let grad_norm = grad.norm();
        if !obj.is_finite() || !grad_norm.is_finite() {
            trace.status = SolveStatus::Diverged;
            break;
        }

        // Episode bookkeeping: at t_thres steps past the kick, a missing
        // f_thres decrease certifies the pre-noise candidate.
        if let Some(ep) = &episode {
            if iter - ep.start >= pgd_params.expect("episode implies pgd").t_thres {
                let params = pgd_params.expect("episode implies pgd");
                if obj > ep.f_cand - params.f_thres {
                    let cand = episode.take().expect("checked above").u_cand;
                    trace.status = SolveStatus::SospReached;
                    trace.final_tau = tau;
                    return Ok((cand, trace));
                }
                episode = None;
            }
        }

        if episode.is_none() && grad_norm <= cfg.eps {
            if !perturbing {
                trace.status = SolveStatus::SospReached;
                break;
            }
            let (lambda_min, _) = min_hessian_eig(
                pp,
                &pt,
                HESS_EIG_TOL,
                indexed_seed(lanczos_root, eig_checks),
            )?;
            eig_checks += 1;
            if lambda_min >= -cfg.gamma * cfg.eps.sqrt() {
                trace.status = SolveStatus::SospReached;
                break;
            }
            let params = pgd_params.expect("perturbing mode");
            trace.iters.push(IterRecord {
                iter,
                objective: obj,
                grad_norm,
                residue_norm,
                step: 0.0,
                perturbed: true,
                u_norm: pt.u.norm(),
                tau_doubled: tau_doubled_flag,
            });
            tau_doubled_flag = false;
            let kick = ball_noise(
                pt.n(),
                pt.k(),
                params.noise_radius,
                indexed_seed(noise_root, trace.episodes as u64),
            );
            episode = Some(Episode {
                start: iter,
                f_cand: obj,
                u_cand: pt.clone(),
            });
            trace.episodes += 1;
            pt.u += kick;
            pt.cache = None;
            iter += 1;
            continue;
        }

        // Descent step.
        let eta = match cfg.step_mode {
            StepMode::Fixed1OverL => 1.0 / bounds.l,
            StepMode::Backtracking => {
                let mut eta = (2.0 * eta_warm).min(MAX_STEP);
                loop {
                    let cand = &pt.u - &grad * eta;
                    let f_new = pp.objective_at(&cand)?;
                    if f_new.is_finite() && f_new <= obj - ARMIJO_C1 * eta * grad_norm * grad_norm
                    {
                        break;
                    }
                    eta *= 0.5;
                    if eta < MIN_STEP {
                        trace.status = SolveStatus::Diverged;
                        trace.final_tau = tau;
                        return Ok((pt, trace));
                    }
                }
                eta_warm = eta;
                eta
            }
        };
        trace.iters.push(IterRecord {
            iter,
            objective: obj,
            grad_norm,
            residue_norm,
            step: eta,
            perturbed: false,
            u_norm: pt.u.norm(),
            tau_doubled: tau_doubled_flag,
        });
        tau_doubled_flag = false;
        pt.u -= &grad * eta;
        pt.cache = None;

        let u_norm = pt.u.norm();
        if u_norm > tau {
            while u_norm > tau {
                tau *= 2.0;
            }
            bounds = pp.lipschitz_bounds(tau)?;
            tau_doubled_flag = true;
        }
        iter += 1;
    }

    pp.objective(&mut pt)?;
    trace.final_tau = tau;
    Ok((pt, trace))
}

/// Uniform draw from the Frobenius ball of the given radius: a Gaussian
/// direction scaled by radius * u^(1/d).
fn ball_noise(n: usize, k: usize, radius: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    if norm == 0.0 {
        return dir;
    }
    let d = (n * k) as f64;
    let scale = radius * rng.gen::<f64>().powf(1.0 / d) / norm;
    dir * scale
}

/// Smallest eigenvalue of the Hessian of L_mu at the point, together with the
/// corresponding direction, via Lanczos on the matrix-free nk-dimensional
/// operator.
pub fn min_hessian_eig(
    pp: &PenaltyProblem,
    pt: &FactoredPoint,
    tol: f64,
    seed: u64,
) -> Result<(f64, DMatrix<f64>)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    let (n, k) = (pt.n(), pt.k());
    let dim = n * k;
    // Reuse one residue across all operator applications.
    let mut frozen = pt.clone();
    if frozen.cache.is_none() {
        pp.objective(&mut frozen)?;
    }
    let res = linalg::lanczos_smallest(dim, tol, seed, dim, |v: &DVector<f64>| {
        let vm = DMatrix::from_column_slice(n, k, v.as_slice());
        let hv = pp
            .hessian_vec(&frozen, &vm)
            .expect("shape fixed by construction");
        DVector::from_column_slice(hv.as_slice())
    })?;
    let direction = DMatrix::from_column_slice(n, k, res.vector.as_slice());
    Ok((res.value, direction))
}

/// Random initialization: entry variance b0 / (n k lambda_max(A0)) when a
/// compactifier fixes the feasible trace scale, else 1/sqrt(n k).
pub fn init_random(pp: &PenaltyProblem, k: usize, seed: u64) -> FactoredPoint {
    let n = pp.n();
    let variance = match pp.op().compactifier() {
        Some(c) => c.b0 / ((n * k) as f64 * c.eigs.lambda_max),
        None => 1.0 / ((n * k) as f64).sqrt(),
    };
    let std = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "init"));
    let u = DMatrix::from_fn(n, k, |_, _| std * rng.sample::<f64, _>(StandardNormal));
    FactoredPoint::new(u)
}

/// Default trust radius: twice the stationary-point norm bound when one
/// applies (compact bound with a compactifier, PD-cost bound otherwise),
/// floored at twice max(||U0||_F, 1).
pub fn default_tau(pp: &PenaltyProblem, u0: &FactoredPoint, eps: f64) -> f64 {
    let floor = 2.0 * u0.u.norm().max(1.0);
    let bound = if pp.uses_compactifier() {
        pp.fosp_norm_bound(eps, PenaltyMode::Compact)
    } else {
        pp.fosp_norm_bound(eps, PenaltyMode::PdCost)
    };
    match bound {
        Ok(b) if b.is_finite() && b > 0.0 => {
            if pp.uses_compactifier() {
                (2.0 * b).max(floor)
            } else {
                floor.max(2.0 * b)
            }
        }
        _ => floor,
    }
}
