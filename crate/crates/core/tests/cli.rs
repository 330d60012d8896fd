//! End-to-end command tests: real binary invocations plus library-level
//! `cli::run` calls, exercising file round-trips and exit codes.

use std::path::Path;
use std::process::Command;

use lowrank_sdp::certify::Certificate;
use lowrank_sdp::cli::{self, CommandKind, Generator, RunConfig};
use lowrank_sdp::io;
use lowrank_sdp::penalty::PlannerOutput;
use lowrank_sdp::perturb::CalibrationReport;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lowrank-sdp"))
}

fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()))
}

fn config(command: CommandKind) -> RunConfig {
    RunConfig {
        command,
        problem: None,
        gen: None,
        graph: None,
        observations: None,
        point: None,
        n: None,
        k: None,
        mu: None,
        sigma_g: None,
        eps: None,
        gamma: None,
        delta: None,
        c0: None,
        seed: 0,
        mode: None,
        init: None,
        max_iters: None,
        trials: None,
        out: None,
    }
}

#[test]
fn binary_solve_bad_sdp_at_spurious_factor() {
    // Starting at the built-in spurious factor: already a second-order
    // stationary point, so the solver stops immediately, but the global
    // certificate must refuse it.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = binary()
        .args(["solve", "--gen", "bad-sdp", "--n", "5", "--k", "4", "--init", "ubar"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "SOSP reached means exit 0");

    let cert: Certificate =
        serde_json::from_str(&read(out.join("certificate.json"))).unwrap();
    assert!(cert.grad_norm <= 1e-10, "gradient norm was {:.3e}", cert.grad_norm);
    assert!(cert.is_eps_gamma_sosp);
    assert!(
        !cert.certificate_holds,
        "the spurious point must fail the global certificate"
    );
    assert!(
        (cert.dual_min_eig + 2.0).abs() <= 1e-8,
        "dual minimum eigenvalue should be -2, got {:.6e}",
        cert.dual_min_eig
    );

    for artifact in ["problem.txt", "u.txt", "certificate.json", "trace.csv", "config.json"] {
        assert!(out.join(artifact).exists(), "missing artifact {artifact}");
    }
    // The stored config replays to the same command.
    let stored: RunConfig = serde_json::from_str(&read(out.join("config.json"))).unwrap();
    assert_eq!(stored.command, CommandKind::Solve);
    assert_eq!(stored.gen, Some(Generator::BadSdp));
}

#[test]
fn binary_solve_bad_sdp_overparameterized_reaches_zero() {
    // With k > n the spurious geometry disappears and descent reaches the
    // global minimum. The penalty valley is quartic-flat near optimality,
    // so the gradient threshold may outlast the iteration budget; the
    // objective bound is the contract here.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = binary()
        .args(["solve", "--gen", "bad-sdp", "--n", "5", "--k", "6", "--seed", "1"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(
        matches!(status.code(), Some(0) | Some(1)),
        "exit must signal SOSP or iteration cap, got {:?}",
        status.code()
    );
    let trace = read(out.join("trace.csv"));
    let last = trace.lines().last().unwrap();
    let objective: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(
        objective <= 1e-6,
        "overparameterized run must reach the global minimum, got {objective:.3e}"
    );
}

#[test]
fn binary_certify_round_trips_solve_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = binary()
        .args(["solve", "--gen", "bad-sdp", "--n", "4", "--k", "3", "--init", "ubar"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // The spurious point certifies as an SOSP but fails global optimality.
    let output = binary()
        .arg("certify")
        .arg("--problem")
        .arg(out.join("problem.txt"))
        .arg("--point")
        .arg(out.join("u.txt"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "certificate must not hold");
    let cert: Certificate = serde_json::from_str(&String::from_utf8(output.stdout).unwrap())
        .expect("certify prints the certificate as JSON");
    assert!(!cert.certificate_holds);

    // The true minimizer (residues near zero, dual near the zero cost)
    // passes; the solve may hit the iteration cap in the flat valley, but
    // the dual certificate at its final point still holds.
    let out2 = dir.path().join("run2");
    let status = binary()
        .args(["solve", "--gen", "bad-sdp", "--n", "4", "--k", "5", "--seed", "2"])
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert!(matches!(status.code(), Some(0) | Some(1)));
    let output = binary()
        .arg("certify")
        .arg("--problem")
        .arg(out2.join("problem.txt"))
        .arg("--point")
        .arg(out2.join("u.txt"))
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "certificate holds at the global minimum: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn binary_certify_rejects_shape_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    assert_eq!(
        binary()
            .args(["generate", "--gen", "bad-sdp", "--n", "4"])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    // A 3-row factor against a 4-sided problem is an input error.
    let point = dir.path().join("bad_point.txt");
    std::fs::write(&point, "3 1\n1.0\n1.0\n1.0\n").unwrap();
    let output = binary()
        .arg("certify")
        .arg("--problem")
        .arg(out.join("problem.txt"))
        .arg("--point")
        .arg(&point)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error"), "stderr was: {stderr}");
}

#[test]
fn binary_plan_prints_planner_output_for_perturbed_maxcut() {
    let output = binary()
        .args(["plan", "--gen", "maxcut", "--n", "4", "--mu", "50", "--sigma-g", "1e-3"])
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let plan: PlannerOutput =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert!(plan.k_min >= 1);
    assert!(plan.eps_max > 0.0);
    assert!(plan.b > 0.0);
}

#[test]
fn binary_plan_pd_cost_rejects_indefinite_cost_naming_lambda_min() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("indefinite.txt");
    std::fs::write(
        &path,
        "2 1 1.0 1.0e-2 3 0\nMAT cost\n0 0 1.0\n1 1 -1.0\nEND\nMAT 1\n0 0 1.0\nEND\nRHS 1.0\n",
    )
    .unwrap();
    let output = binary()
        .arg("plan")
        .arg("--problem")
        .arg(&path)
        .args(["--mode", "pd-cost"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("lambda_min"),
        "diagnostic must name the offending eigenvalue, got: {stderr}"
    );
}

#[test]
fn binary_generate_bad_sdp_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    assert_eq!(
        binary()
            .args(["generate", "--gen", "bad-sdp", "--n", "4"])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let text = read(out.join("problem.txt"));
    let parsed = io::parse_problem(&text).unwrap();
    assert_eq!(io::write_problem(&parsed), text, "serialize-parse-serialize is a fixed point");
    let u_bar = io::parse_dense(&read(out.join("u_bar.txt"))).unwrap();
    assert_eq!((u_bar.nrows(), u_bar.ncols()), (4, 3));
    let u_opt = io::parse_dense(&read(out.join("u_opt.txt"))).unwrap();
    assert!(parsed.objective_at(&u_opt).unwrap() <= 1e-12);
}

#[test]
fn binary_generate_maxcut_from_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let graph_path = dir.path().join("k2.txt");
    std::fs::write(&graph_path, "2 1\n0 1\n").unwrap();
    let out = dir.path().join("gen");
    let status = binary()
        .args(["generate", "--gen", "maxcut", "--mu", "50"])
        .arg("--graph")
        .arg(&graph_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let pp = io::parse_problem(&read(out.join("problem.txt"))).unwrap();
    assert_eq!(pp.n(), 2);
    assert_eq!(pp.op().m(), 2, "one diagonal constraint per vertex");
    assert!(pp.uses_compactifier());
    assert_eq!(pp.op().compactifier().unwrap().b0, 2.0);
}

#[test]
fn binary_generate_constrained_ce_verifies_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let output = binary()
        .args(["generate", "--gen", "constrained-ce", "--n", "4"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(0),
        "witness verification must pass: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("tangent_curvature_positive: ok"), "stdout: {stdout}");
    assert!(out.join("u.txt").exists());
    assert!(out.join("x0.txt").exists());
}

#[test]
fn binary_generate_rejects_invalid_sizes() {
    let status = binary()
        .args(["generate", "--gen", "bad-sdp", "--n", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_calibrate_prints_report_and_enforces_budget() {
    let output = binary()
        .args(["calibrate", "--n", "20", "--k", "4", "--trials", "20"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let report: CalibrationReport =
        serde_json::from_str(&String::from_utf8(output.stdout).unwrap()).unwrap();
    assert!(report.c0_hat > 0.0);
    assert_eq!(report.trials, 20);

    let status = binary()
        .args(["calibrate", "--n", "500", "--k", "4", "--trials", "1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_reports_parse_errors_with_location_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.txt");
    std::fs::write(&path, "3 1 0.5 0.0 0 0\nMAT cost\n0 oops 1.0\nEND\nMAT 1\n0 0 1.0\nEND\nRHS 0.0\n").unwrap();
    let output = binary()
        .arg("solve")
        .arg("--problem")
        .arg(&path)
        .arg("--k")
        .arg("2")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("line 3") && stderr.contains("column 3"),
        "parse diagnostics must carry the location, got: {stderr}"
    );
}

#[test]
fn binary_respects_thread_cap_env() {
    let output = binary()
        .args(["calibrate", "--n", "12", "--k", "3", "--trials", "8"])
        .env("LOWRANK_SDP_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn identical_config_and_seed_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out_a, &out_b] {
        let status = binary()
            .args(["solve", "--gen", "maxcut", "--n", "4", "--mu", "50"])
            .args(["--sigma-g", "1e-3", "--k", "3", "--eps", "1e-4", "--seed", "11"])
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    for artifact in ["problem.txt", "u.txt", "certificate.json", "trace.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(artifact)).unwrap(),
            std::fs::read(out_b.join(artifact)).unwrap(),
            "artifact {artifact} must be byte-identical across reruns"
        );
    }
}

#[test]
fn library_run_solves_unconstrained_psd_cost_to_zero() {
    // With no constraints and a PSD cost, the objective is |U|^2-like and
    // the minimizer is U = 0.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("free.txt");
    std::fs::write(
        &path,
        "3 0 1.0 0.0 0 0\nMAT cost\n0 0 1.0\n1 1 1.0\n2 2 1.0\nEND\nRHS\n",
    )
    .unwrap();
    let mut cfg = config(CommandKind::Solve);
    cfg.problem = Some(path);
    cfg.k = Some(2);
    cfg.out = Some(dir.path().join("run"));
    let code = cli::run(&cfg).unwrap();
    assert_eq!(code, 0);
    let u = io::parse_dense(&read(dir.path().join("run/u.txt"))).unwrap();
    assert!(
        u.norm() <= 1e-3,
        "free PSD-cost problem must collapse to the origin, |U| = {:.3e}",
        u.norm()
    );
}

#[test]
fn library_run_matcomp_generator_via_observation_file() {
    let dir = tempfile::tempdir().unwrap();
    let obs_path = dir.path().join("obs.txt");
    std::fs::write(&obs_path, "2 2 2\n0 0 1.0\n1 1 -0.5\n").unwrap();
    let mut cfg = config(CommandKind::Generate);
    cfg.gen = Some(Generator::Matcomp);
    cfg.observations = Some(obs_path);
    cfg.mu = Some(5.0);
    cfg.out = Some(dir.path().join("gen"));
    let code = cli::run(&cfg).unwrap();
    assert_eq!(code, 0);
    let pp = io::parse_problem(&read(dir.path().join("gen/problem.txt"))).unwrap();
    assert_eq!(pp.n(), 4);
    assert_eq!(pp.op().m(), 2);
    assert!(!pp.uses_compactifier());
}
