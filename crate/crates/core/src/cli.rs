//! Command-line surface: flags become a serializable [`RunConfig`], which
//! drives one of five commands (solve, certify, plan, generate, calibrate).
//!
//! Every run writes its artifacts under `--out` and is reproducible: all
//! randomness derives from the single `--seed` through labeled child seeds
//! ("problem" keys generator randomness and the cost perturbation, "solve"
//! keys the initial point, escape noise, and eigenvalue probes), so an
//! identical config yields byte-identical outputs.
//!
//! Exit codes: 0 success (certificate holds / SOSP reached), 1 goal not
//! reached, 2 input error, 3 divergence.

use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::certify::certify;
use crate::error::{Error, Result};
use crate::io;
use crate::operator::FactoredPoint;
use crate::penalty::{PenaltyMode, PenaltyProblem};
use crate::perturb::calibrate_c0;
use crate::problems::{
    build_bad_sdp, build_constrained_ce, build_matcomp, build_maxcut, verify_constrained_ce,
    BadSdpWitnesses, ConstrainedCe, Graph, ObservationSet,
};
use crate::seed::child_seed;
use crate::solve::{init_random, pgd, SolveStatus, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GOAL_NOT_REACHED: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Caps the global rayon pool from LOWRANK_SDP_THREADS. Safe to call more
/// than once; only the first call can take effect.
pub fn configure_threads() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(raw) = std::env::var("LOWRANK_SDP_THREADS") {
            if let Ok(threads) = raw.parse::<usize>() {
                if threads > 0 {
                    // Ignore failure: a pool may already exist in-process.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build_global();
                }
            }
        }
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Solve,
    Certify,
    Plan,
    Generate,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Maxcut,
    Matcomp,
    BadSdp,
    ConstrainedCe,
}

/// Complete description of one command invocation. Serialized verbatim to
/// config.json so a run can be replayed; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<Generator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PenaltyMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(
    name = "lowrank-sdp",
    version,
    about = "Penalized low-rank SDP solver: saddle-escaping descent, \
             second-order certificates, and reference problem generators"
)]
pub struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Solve with perturbed gradient descent, then certify the result.
    Solve(CommonArgs),
    /// Evaluate the optimality certificate at a stored point.
    Certify(CommonArgs),
    /// Print the recommended rank, accuracy, and perturbation scale.
    Plan(CommonArgs),
    /// Write a generated problem (plus witness files) to --out.
    Generate(CommonArgs),
    /// Estimate the eigenvalue-sum constant of the random perturbation.
    Calibrate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Problem file in the SDP text format.
    #[arg(long, conflicts_with = "gen")]
    problem: Option<PathBuf>,
    /// Built-in problem generator.
    #[arg(long, value_enum)]
    gen: Option<Generator>,
    /// Edge-list file for --gen maxcut (default: cycle on --n vertices).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Observation file for --gen matcomp.
    #[arg(long)]
    observations: Option<PathBuf>,
    /// Stored factor (dense text matrix) to certify.
    #[arg(long)]
    point: Option<PathBuf>,
    /// Instance size for generators.
    #[arg(long)]
    n: Option<usize>,
    /// Factor rank. Defaults to the planner's recommendation capped at n+1.
    #[arg(long)]
    k: Option<usize>,
    /// Penalty weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Cost perturbation scale (entrywise standard deviation).
    #[arg(long = "sigma-g")]
    sigma_g: Option<f64>,
    /// Target gradient-norm accuracy.
    #[arg(long)]
    eps: Option<f64>,
    /// Second-order tolerance multiplier.
    #[arg(long)]
    gamma: Option<f64>,
    /// Failure probability budget for the planner.
    #[arg(long)]
    delta: Option<f64>,
    /// Eigenvalue-sum constant (see calibrate).
    #[arg(long)]
    c0: Option<f64>,
    /// Root seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bounding mode: compact (compactifier) or pd-cost.
    #[arg(long, value_enum)]
    mode: Option<PenaltyMode>,
    /// Initial point: random, ubar, or file:PATH.
    #[arg(long)]
    init: Option<String>,
    /// Iteration cap for the solver.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Trial count for calibrate.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    pub fn into_config(self) -> RunConfig {
        let (kind, a) = match self.command {
            CliCommand::Solve(a) => (CommandKind::Solve, a),
            CliCommand::Certify(a) => (CommandKind::Certify, a),
            CliCommand::Plan(a) => (CommandKind::Plan, a),
            CliCommand::Generate(a) => (CommandKind::Generate, a),
            CliCommand::Calibrate(a) => (CommandKind::Calibrate, a),
        };
        RunConfig {
            command: kind,
            problem: a.problem,
            gen: a.gen,
            graph: a.graph,
            observations: a.observations,
            point: a.point,
            n: a.n,
            k: a.k,
            mu: a.mu,
            sigma_g: a.sigma_g,
            eps: a.eps,
            gamma: a.gamma,
            delta: a.delta,
            c0: a.c0,
            seed: a.seed,
            mode: a.mode,
            init: a.init,
            max_iters: a.max_iters,
            trials: a.trials,
            out: a.out,
        }
    }
}

/// Parses argv, runs the command, and returns the process exit code.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version by "erroring" with exit 0.
            let code = if e.use_stderr() { EXIT_INPUT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    let config = cli.into_config();
    match run(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

/// Maps library errors onto the documented exit codes.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Diverged(_) => EXIT_DIVERGED,
        _ => EXIT_INPUT_ERROR,
    }
}

/// Executes one configured command. Returns the exit code for expected
/// outcomes; hard failures (bad input, divergence) surface as errors.
pub fn run(config: &RunConfig) -> Result<i32> {
    match config.command {
        CommandKind::Solve => cmd_solve(config),
        CommandKind::Certify => cmd_certify(config),
        CommandKind::Plan => cmd_plan(config),
        CommandKind::Generate => cmd_generate(config),
        CommandKind::Calibrate => cmd_calibrate(config),
    }
}

/// A problem plus whatever witnesses its generator carries.
struct Loaded {
    pp: PenaltyProblem,
    bad: Option<BadSdpWitnesses>,
    ce: Option<ConstrainedCe>,
    graph: Option<Graph>,
    observations: Option<ObservationSet>,
}

impl Loaded {
    fn plain(pp: PenaltyProblem) -> Self {
        Loaded {
            pp,
            bad: None,
            ce: None,
            graph: None,
            observations: None,
        }
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::invalid("file", format!("cannot read {}: {e}", path.display()))
    })
}

fn require_n(config: &RunConfig) -> Result<usize> {
    config
        .n
        .ok_or_else(|| Error::invalid("n", "this generator needs --n"))
}

fn load_problem(config: &RunConfig) -> Result<Loaded> {
    if let Some(path) = &config.problem {
        let pp = io::parse_problem(&read_file(path)?)?;
        return Ok(Loaded::plain(pp));
    }
    let Some(gen) = config.gen else {
        return Err(Error::invalid(
            "problem",
            "provide --problem FILE or --gen NAME",
        ));
    };
    let mu = config.mu.unwrap_or(1.0);
    let sigma_g = config.sigma_g.unwrap_or(0.0);
    let problem_seed = child_seed(config.seed, "problem");
    match gen {
        Generator::Maxcut => {
            let graph = match &config.graph {
                Some(path) => Graph::parse(&read_file(path)?)?,
                None => Graph::cycle(require_n(config)?)?,
            };
            let pp = build_maxcut(&graph, mu, sigma_g, problem_seed)?;
            Ok(Loaded {
                graph: Some(graph),
                ..Loaded::plain(pp)
            })
        }
        Generator::Matcomp => {
            let path = config.observations.as_ref().ok_or_else(|| {
                Error::invalid("observations", "--gen matcomp needs --observations FILE")
            })?;
            let obs = ObservationSet::parse(&read_file(path)?)?;
            let pp = build_matcomp(&obs, mu, sigma_g, problem_seed)?;
            Ok(Loaded {
                observations: Some(obs),
                ..Loaded::plain(pp)
            })
        }
        Generator::BadSdp => {
            let (pp, wit) = build_bad_sdp(require_n(config)?)?;
            Ok(Loaded {
                bad: Some(wit),
                ..Loaded::plain(pp)
            })
        }
        Generator::ConstrainedCe => {
            let ce = build_constrained_ce(require_n(config)?)?;
            let pp = PenaltyProblem::new(ce.cost.clone(), ce.op.clone(), mu, None, false)?;
            Ok(Loaded {
                ce: Some(ce),
                ..Loaded::plain(pp)
            })
        }
    }
}

#[derive(Debug)]
enum InitSpec {
    Random,
    Ubar,
    File(PathBuf),
}

fn parse_init(raw: Option<&str>) -> Result<InitSpec> {
    match raw.unwrap_or("random") {
        "random" => Ok(InitSpec::Random),
        "ubar" => Ok(InitSpec::Ubar),
        s if s.starts_with("file:") => Ok(InitSpec::File(PathBuf::from(&s["file:".len()..]))),
        other => Err(Error::invalid(
            "init",
            format!("expected random, ubar, or file:PATH, got '{other}'"),
        )),
    }
}

fn default_mode(pp: &PenaltyProblem) -> PenaltyMode {
    if pp.uses_compactifier() {
        PenaltyMode::Compact
    } else {
        PenaltyMode::PdCost
    }
}

fn resolve_rank(config: &RunConfig, loaded: &Loaded, gamma: f64) -> Result<usize> {
    if let Some(k) = config.k {
        return Ok(k);
    }
    let pp = &loaded.pp;
    let mode = config.mode.unwrap_or_else(|| default_mode(pp));
    let plan = pp
        .plan_parameters(
            gamma,
            config.delta.unwrap_or(0.01),
            config.c0.unwrap_or(1.0),
            mode,
        )
        .map_err(|e| {
            Error::invalid(
                "k",
                format!("pass --k explicitly; automatic planning failed: {e}"),
            )
        })?;
    Ok(plan.k_min.min(pp.n() + 1))
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("lowrank_out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_solve(config: &RunConfig) -> Result<i32> {
    let loaded = load_problem(config)?;
    let pp = &loaded.pp;
    let n = pp.n();
    let eps = config.eps.unwrap_or(1e-5);
    let gamma = config.gamma.unwrap_or(1.0);
    let solve_seed = child_seed(config.seed, "solve");

    let init = parse_init(config.init.as_deref())?;
    let (u0, k) = match init {
        InitSpec::Random => {
            let k = resolve_rank(config, &loaded, gamma)?;
            (init_random(pp, k, solve_seed), k)
        }
        InitSpec::Ubar => {
            let pt = if let Some(bad) = &loaded.bad {
                bad.u_bar.clone()
            } else if let Some(ce) = &loaded.ce {
                ce.u.clone()
            } else {
                return Err(Error::invalid(
                    "init",
                    "ubar init is only defined for --gen bad-sdp and constrained-ce",
                ));
            };
            let k = pt.u.ncols();
            if config.k.is_some_and(|flag| flag != k) {
                return Err(Error::invalid(
                    "k",
                    format!("the built-in spurious factor has {k} columns"),
                ));
            }
            (pt, k)
        }
        InitSpec::File(path) => {
            let u = io::parse_dense(&read_file(&path)?)?;
            if u.nrows() != n {
                return Err(Error::DimensionMismatch {
                    context: "initial factor rows",
                    expected: n,
                    got: u.nrows(),
                });
            }
            let k = u.ncols();
            if config.k.is_some_and(|flag| flag != k) {
                return Err(Error::invalid(
                    "k",
                    format!("--k disagrees with the {k}-column file factor"),
                ));
            }
            (FactoredPoint::new(u), k)
        }
    };

    let mut cfg = SolverConfig::new(eps, gamma, k, solve_seed);
    if let Some(mi) = config.max_iters {
        cfg.max_iters = mi;
    }
    let (pt, trace) = pgd(pp, u0, &cfg)?;
    let certificate = certify(pp, &pt, eps, gamma, None)?;

    let dir = out_dir(config)?;
    write_artifact(&dir, "problem.txt", &io::write_problem(pp))?;
    write_artifact(&dir, "u.txt", &io::write_dense(&pt.u))?;
    let cert_json = serde_json::to_string_pretty(&certificate)?;
    write_artifact(&dir, "certificate.json", &format!("{cert_json}\n"))?;
    write_artifact(&dir, "trace.csv", &io::write_trace_csv(&trace))?;
    let config_json = serde_json::to_string_pretty(config)?;
    write_artifact(&dir, "config.json", &format!("{config_json}\n"))?;

    let last = trace.iters.last();
    println!(
        "status: {:?} after {} iterations ({} escape episodes)",
        trace.status,
        last.map_or(0, |r| r.iter + 1),
        trace.episodes
    );
    if let Some(r) = last {
        println!(
            "objective {:.6e}, gradient norm {:.6e}, residue norm {:.6e}",
            r.objective, r.grad_norm, r.residue_norm
        );
    }
    println!(
        "certificate holds: {} (dual min eig {:.6e})",
        certificate.certificate_holds, certificate.dual_min_eig
    );
    println!("artifacts in {}", dir.display());

    Ok(match trace.status {
        SolveStatus::SospReached => EXIT_OK,
        SolveStatus::MaxIters => EXIT_GOAL_NOT_REACHED,
        SolveStatus::Diverged => EXIT_DIVERGED,
    })
}

fn cmd_certify(config: &RunConfig) -> Result<i32> {
    let loaded = load_problem(config)?;
    let path = config
        .point
        .as_ref()
        .ok_or_else(|| Error::invalid("point", "certify needs --point FILE"))?;
    let u = io::parse_dense(&read_file(path)?)?;
    let pt = FactoredPoint::new(u);
    let eps = config.eps.unwrap_or(1e-5);
    let gamma = config.gamma.unwrap_or(1.0);
    let certificate = certify(&loaded.pp, &pt, eps, gamma, None)?;
    println!("{}", serde_json::to_string_pretty(&certificate)?);
    Ok(if certificate.certificate_holds {
        EXIT_OK
    } else {
        EXIT_GOAL_NOT_REACHED
    })
}

fn cmd_plan(config: &RunConfig) -> Result<i32> {
    let loaded = load_problem(config)?;
    let pp = &loaded.pp;
    let mode = config.mode.unwrap_or_else(|| default_mode(pp));
    let plan = pp.plan_parameters(
        config.gamma.unwrap_or(1.0),
        config.delta.unwrap_or(0.01),
        config.c0.unwrap_or(1.0),
        mode,
    )?;
    println!("{}", serde_json::to_string_pretty(&plan)?);
    Ok(EXIT_OK)
}

fn cmd_generate(config: &RunConfig) -> Result<i32> {
    let Some(gen) = config.gen else {
        return Err(Error::invalid("gen", "generate needs --gen NAME"));
    };
    let loaded = load_problem(config)?;
    let dir = out_dir(config)?;
    write_artifact(&dir, "problem.txt", &io::write_problem(&loaded.pp))?;
    let mut code = EXIT_OK;
    match gen {
        Generator::BadSdp => {
            let wit = loaded.bad.expect("bad-sdp generator returns witnesses");
            write_artifact(&dir, "u_bar.txt", &io::write_dense(&wit.u_bar.u))?;
            write_artifact(&dir, "u_opt.txt", &io::write_dense(&wit.u_opt.u))?;
            println!(
                "spurious factor and global minimizer written (coupling scale {:.6e})",
                wit.coupling
            );
        }
        Generator::ConstrainedCe => {
            let ce = loaded.ce.expect("constrained-ce generator returns witnesses");
            write_artifact(&dir, "u.txt", &io::write_dense(&ce.u.u))?;
            write_artifact(&dir, "x0.txt", &io::write_dense(&ce.x0))?;
            let report = verify_constrained_ce(&ce, 1e-10);
            for check in &report.checks {
                println!(
                    "{}: {} (value {:.3e})",
                    check.name,
                    if check.passed { "ok" } else { "FAILED" },
                    check.value
                );
            }
            if !report.all_passed {
                code = EXIT_GOAL_NOT_REACHED;
            }
        }
        Generator::Maxcut => {
            let graph = loaded.graph.expect("maxcut generator keeps its graph");
            write_artifact(&dir, "graph.txt", &graph.to_text())?;
        }
        Generator::Matcomp => {
            let obs = loaded
                .observations
                .expect("matcomp generator keeps its observations");
            write_artifact(&dir, "observations.txt", &obs.to_text())?;
        }
    }
    println!("artifacts in {}", dir.display());
    Ok(code)
}

fn cmd_calibrate(config: &RunConfig) -> Result<i32> {
    let report = calibrate_c0(
        config.n.unwrap_or(50),
        config.k.unwrap_or(10),
        config.sigma_g.unwrap_or(1.0),
        config.trials.unwrap_or(200),
        config.seed,
        config.c0.unwrap_or(1.0),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(EXIT_OK)
}
