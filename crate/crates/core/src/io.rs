//! Text formats: problem files, dense matrices, trace CSV, certificates.
//!
//! Problem files are self-describing and human-diffable:
//!
//! ```text
//! n m mu sigma_G seed has_compactifier [b0]
//! MAT cost
//! row col value
//! END
//! MAT A0          (only when has_compactifier = 1)
//! ...
//! END
//! MAT 1 .. MAT m  (each END-terminated)
//! RHS v1 ... vm
//! ```
//!
//! Matrix entries are upper-triangle coordinates; the perturbation is stored
//! as (sigma_G, seed) and re-sampled on load, which reproduces G exactly.
//! Blank lines and lines starting with '#' are ignored. All numbers are
//! written with 17 significant digits so round-trips are lossless.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operator::ConstraintOperator;
use crate::penalty::PenaltyProblem;
use crate::perturb::{GoePerturbation, GoeSpec};
use crate::solve::SolveTrace;
use crate::sparse::SparseSymmetric;

/// Line iterator that skips blanks and '#' comments, tracking 1-based line
/// numbers for error reporting.
pub(crate) struct ContentLines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> ContentLines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        ContentLines {
            iter: text.lines().enumerate(),
        }
    }

    pub(crate) fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (idx, line) in self.iter.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((idx + 1, line));
        }
        None
    }

    pub(crate) fn expect_content(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_content()
            .ok_or_else(|| Error::parse(0, 0, format!("unexpected end of input, expected {what}")))
    }
}

/// Whitespace-separated tokens with their 1-based column positions.
pub(crate) fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s + 1, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

pub(crate) fn parse_token<T: FromStr>(
    line_no: usize,
    col: usize,
    tok: &str,
    what: &str,
) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::parse(line_no, col, format!("expected {what}, got '{tok}'")))
}

fn field<'a>(
    toks: &[(usize, &'a str)],
    idx: usize,
    line_no: usize,
    what: &str,
) -> Result<(usize, &'a str)> {
    toks.get(idx).copied().ok_or_else(|| {
        Error::parse(
            line_no,
            toks.last().map_or(1, |(c, t)| c + t.len()),
            format!("missing {what}"),
        )
    })
}

fn write_entries(out: &mut String, mat: &SparseSymmetric) {
    for &(i, j, v) in mat.entries() {
        writeln!(out, "{i} {j} {v:.16e}").expect("string write");
    }
    out.push_str("END\n");
}

/// Serializes a penalty problem to the text format.
pub fn write_problem(pp: &PenaltyProblem) -> String {
    let op = pp.op();
    let (sigma_g, seed) = pp
        .perturbation()
        .map_or((0.0, 0), |p| (p.spec.sigma_g, p.spec.seed));
    let has_comp = pp.uses_compactifier();
    let mut out = String::new();
    write!(
        &mut out,
        "{} {} {:.16e} {:.16e} {} {}",
        pp.n(),
        op.m(),
        pp.mu(),
        sigma_g,
        seed,
        has_comp as u8
    )
    .expect("string write");
    if has_comp {
        let comp = op.compactifier().expect("compact problems carry (A0, b0)");
        write!(&mut out, " {:.16e}", comp.b0).expect("string write");
    }
    out.push('\n');
    out.push_str("MAT cost\n");
    write_entries(&mut out, pp.cost());
    if has_comp {
        out.push_str("MAT A0\n");
        write_entries(&mut out, &op.compactifier().expect("checked above").a0);
    }
    for (i, a) in op.mats().iter().enumerate() {
        writeln!(&mut out, "MAT {}", i + 1).expect("string write");
        write_entries(&mut out, a);
    }
    out.push_str("RHS");
    for v in op.b().iter() {
        write!(&mut out, " {v:.16e}").expect("string write");
    }
    out.push('\n');
    out
}

fn parse_mat_block(
    lines: &mut ContentLines<'_>,
    n: usize,
    label: &str,
) -> Result<SparseSymmetric> {
    let (line_no, line) = lines.expect_content(&format!("'MAT {label}'"))?;
    let toks = tokens(line);
    if toks.len() != 2 || toks[0].1 != "MAT" || toks[1].1 != label {
        return Err(Error::parse(
            line_no,
            toks.first().map_or(1, |t| t.0),
            format!("expected 'MAT {label}', got '{}'", line.trim()),
        ));
    }
    let mut triplets = Vec::new();
    loop {
        let (line_no, line) = lines.expect_content("matrix entry or 'END'")?;
        let toks = tokens(line);
        if toks.len() == 1 && toks[0].1 == "END" {
            break;
        }
        if toks.len() != 3 {
            return Err(Error::parse(
                line_no,
                toks.first().map_or(1, |t| t.0),
                format!("expected 'row col value', got '{}'", line.trim()),
            ));
        }
        let row: usize = parse_token(line_no, toks[0].0, toks[0].1, "row index")?;
        let col: usize = parse_token(line_no, toks[1].0, toks[1].1, "column index")?;
        let val: f64 = parse_token(line_no, toks[2].0, toks[2].1, "entry value")?;
        if row >= n || col >= n {
            return Err(Error::parse(
                line_no,
                toks[0].0,
                format!("index ({row}, {col}) out of range for side {n}"),
            ));
        }
        triplets.push((row, col, val));
    }
    SparseSymmetric::from_triplets(n, triplets)
}

/// Parses the text format back into a penalty problem. The perturbation is
/// re-sampled from the stored (sigma_G, seed).
pub fn parse_problem(text: &str) -> Result<PenaltyProblem> {
    let mut lines = ContentLines::new(text);
    let (line_no, header) = lines.expect_content("header")?;
    let toks = tokens(header);
    let (c, t) = field(&toks, 0, line_no, "n")?;
    let n: usize = parse_token(line_no, c, t, "vertex count n")?;
    let (c, t) = field(&toks, 1, line_no, "m")?;
    let m: usize = parse_token(line_no, c, t, "constraint count m")?;
    let (c, t) = field(&toks, 2, line_no, "mu")?;
    let mu: f64 = parse_token(line_no, c, t, "penalty weight mu")?;
    let (c, t) = field(&toks, 3, line_no, "sigma_G")?;
    let sigma_g: f64 = parse_token(line_no, c, t, "sigma_G")?;
    let (c, t) = field(&toks, 4, line_no, "seed")?;
    let seed: u64 = parse_token(line_no, c, t, "seed")?;
    let (c, t) = field(&toks, 5, line_no, "has_compactifier")?;
    let has_comp: u8 = parse_token(line_no, c, t, "has_compactifier flag")?;
    if has_comp > 1 {
        return Err(Error::parse(line_no, c, "has_compactifier must be 0 or 1"));
    }
    let has_comp = has_comp == 1;
    let b0 = if has_comp {
        let (c, t) = field(&toks, 6, line_no, "b0")?;
        Some(parse_token::<f64>(line_no, c, t, "compactifier b0")?)
    } else {
        None
    };

    let cost = parse_mat_block(&mut lines, n, "cost")?;
    let a0 = if has_comp {
        Some(parse_mat_block(&mut lines, n, "A0")?)
    } else {
        None
    };
    let mut mats = Vec::with_capacity(m);
    for i in 1..=m {
        mats.push(parse_mat_block(&mut lines, n, &i.to_string())?);
    }

    let (line_no, line) = lines.expect_content("'RHS'")?;
    let toks = tokens(line);
    if toks.is_empty() || toks[0].1 != "RHS" {
        return Err(Error::parse(
            line_no,
            toks.first().map_or(1, |t| t.0),
            "expected 'RHS'",
        ));
    }
    if toks.len() != m + 1 {
        return Err(Error::parse(
            line_no,
            toks.first().map_or(1, |t| t.0),
            format!("expected {m} right-hand-side values, got {}", toks.len() - 1),
        ));
    }
    let mut b = DVector::zeros(m);
    for i in 0..m {
        b[i] = parse_token(line_no, toks[i + 1].0, toks[i + 1].1, "right-hand-side value")?;
    }

    let mut op = ConstraintOperator::new(n, mats, b)?;
    if let (Some(a0), Some(b0)) = (a0, b0) {
        op = op.with_compactifier(a0, b0)?;
    }
    let perturbation = if sigma_g > 0.0 {
        Some(GoePerturbation::sample(GoeSpec { n, sigma_g, seed }))
    } else {
        None
    };
    PenaltyProblem::new(cost, op, mu, perturbation, has_comp)
}

/// Dense matrix as text: header "rows cols", then one row per line,
/// 17-significant-digit decimals.
pub fn write_dense(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    writeln!(&mut out, "{} {}", m.nrows(), m.ncols()).expect("string write");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(' ');
            }
            write!(&mut out, "{:.16e}", m[(i, j)]).expect("string write");
        }
        out.push('\n');
    }
    out
}

pub fn parse_dense(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = ContentLines::new(text);
    let (line_no, header) = lines.expect_content("matrix header 'rows cols'")?;
    let toks = tokens(header);
    let (c, t) = field(&toks, 0, line_no, "row count")?;
    let rows: usize = parse_token(line_no, c, t, "row count")?;
    let (c, t) = field(&toks, 1, line_no, "column count")?;
    let cols: usize = parse_token(line_no, c, t, "column count")?;
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let (line_no, line) = lines.expect_content(&format!("matrix row {i}"))?;
        let toks = tokens(line);
        if toks.len() != cols {
            return Err(Error::parse(
                line_no,
                toks.first().map_or(1, |t| t.0),
                format!("expected {cols} values in row {i}, got {}", toks.len()),
            ));
        }
        for j in 0..cols {
            m[(i, j)] = parse_token(line_no, toks[j].0, toks[j].1, "matrix entry")?;
        }
    }
    Ok(m)
}

/// Trace CSV: one row per iteration.
pub fn write_trace_csv(trace: &SolveTrace) -> String {
    let mut out = String::from("iter,objective,grad_norm,residue_norm,step,perturbed\n");
    for r in &trace.iters {
        writeln!(
            &mut out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.iter,
            r.objective,
            r.grad_norm,
            r.residue_norm,
            r.step,
            r.perturbed as u8
        )
        .expect("string write");
    }
    out
}

/// Structural equality for round-trip tests: identical constraint data,
/// penalty weight, perturbation spec, and compactifier.
pub fn problems_structurally_equal(a: &PenaltyProblem, b: &PenaltyProblem) -> bool {
    let (oa, ob) = (a.op(), b.op());
    let comp_eq = match (oa.compactifier(), ob.compactifier()) {
        (None, None) => true,
        (Some(x), Some(y)) => x.a0 == y.a0 && x.b0 == y.b0,
        _ => false,
    };
    a.cost() == b.cost()
        && oa.mats() == ob.mats()
        && oa.b() == ob.b()
        && comp_eq
        && a.mu() == b.mu()
        && a.perturbation().map(|p| p.spec) == b.perturbation().map(|p| p.spec)
        && a.uses_compactifier() == b.uses_compactifier()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(rng: &mut ChaCha8Rng) -> PenaltyProblem {
        let n = 2 + rng.gen_range(0..5);
        let m = rng.gen_range(0..5);
        let compactify = rng.gen::<bool>();
        let mut rand_mat = |density: f64| {
            let mut t = Vec::new();
            for i in 0..n {
                for j in i..n {
                    if rng.gen::<f64>() < density {
                        t.push((i, j, rng.sample::<f64, _>(StandardNormal)));
                    }
                }
            }
            SparseSymmetric::from_triplets(n, t).unwrap()
        };
        let cost = rand_mat(0.6);
        let mats: Vec<_> = (0..m).map(|_| rand_mat(0.4)).collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(rng.gen());
        let b = DVector::from_fn(m, |_, _| rng2.sample::<f64, _>(StandardNormal));
        let mut op = ConstraintOperator::new(n, mats, b).unwrap();
        if compactify {
            op = op
                .with_compactifier(SparseSymmetric::identity(n), n as f64)
                .unwrap();
        }
        let perturbation = if rng2.gen::<bool>() {
            Some(GoePerturbation::sample(GoeSpec {
                n,
                sigma_g: 0.1 + rng2.gen::<f64>(),
                seed: rng2.gen(),
            }))
        } else {
            None
        };
        PenaltyProblem::new(cost, op, rng2.gen::<f64>() + 0.1, perturbation, compactify).unwrap()
    }

    #[test]
    fn problem_round_trip_on_100_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let pp = random_problem(&mut rng);
            let text = write_problem(&pp);
            let back = parse_problem(&text)
                .unwrap_or_else(|e| panic!("trial {trial} failed to parse: {e}\n{text}"));
            assert!(
                problems_structurally_equal(&pp, &back),
                "round-trip changed the problem at trial {trial}:\n{text}"
            );
        }
    }

    #[test]
    fn parse_reports_line_and_column() {
        let text = "3 1 1.0 0.0 0 0\nMAT cost\n0 0 1.0\nEND\nMAT 1\n0 zebra 1.0\nEND\nRHS 1.0\n";
        match parse_problem(text) {
            Err(Error::Parse { line, col, message }) => {
                assert_eq!(line, 6);
                assert_eq!(col, 3);
                assert!(message.contains("zebra"), "message was: {message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_out_of_range_indices() {
        let text = "2 0 0.5 0.0 0 0\nMAT cost\n0 5 1.0\nEND\nRHS\n";
        match parse_problem(text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("out of range"), "message was: {message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dense_round_trip_preserves_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = DMatrix::from_fn(4, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let back = parse_dense(&write_dense(&m)).unwrap();
        assert_eq!(m, back, "17-significant-digit text must round-trip exactly");
    }

    #[test]
    fn trace_csv_has_pinned_columns() {
        use crate::solve::{IterRecord, SolveStatus};
        let trace = SolveTrace {
            iters: vec![IterRecord {
                iter: 0,
                objective: 1.5,
                grad_norm: 0.25,
                residue_norm: 0.1,
                step: 0.01,
                perturbed: true,
                u_norm: 1.0,
                tau_doubled: false,
            }],
            status: SolveStatus::MaxIters,
            episodes: 1,
            final_tau: 2.0,
        };
        let csv = write_trace_csv(&trace);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,objective,grad_norm,residue_norm,step,perturbed"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("0,"), "row was: {row}");
        assert!(row.ends_with(",1"), "perturbed flag must serialize as 1: {row}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\n\n2 0 0.5 0.0 0 0\n# another\nMAT cost\n\n0 1 2.0\nEND\nRHS\n";
        let pp = parse_problem(text).unwrap();
        assert_eq!(pp.n(), 2);
        assert_eq!(pp.cost().get(0, 1), 2.0);
    }
}
