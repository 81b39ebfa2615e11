use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qsb_core::combinat::{crossing_polynomial, crossing_sum, double_factorial_odd, enumerate_feynman_diagrams};
use qsb_core::criteria::{self, Outcome, Profile};
use qsb_core::mixedfock::{mean_by_n, mixing_experiment, EntryMode, MixingRow};
use qsb_core::qalgebra::{self, GaussianFamily};
use qsb_core::qfun::{self, QMeasureParams};
use qsb_core::rmt::{self, ExperimentResult, FamilyKind, McPlan, SigmaSpec};
use qsb_core::transform1d::{sb_exact, sb_quadrature, TransformParams};
use qsb_core::{NcPoly, Polynomial, QsbError, Rational, Real};

#[derive(Parser, Debug)]
#[command(name = "qsb", version, about = "q-deformed Segal-Bargmann transform: oracles, identities and experiments")]
struct Cli {
    /// Worker threads for the Monte Carlo pools (falls back to QSB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum Command {
    /// Pair partition and Feynman diagram counts, crossing polynomials.
    Oracle(OracleArgs),
    /// q-Gaussian density, moments, q-Hermite polynomials and the q-Mehler check.
    Qfun(QfunArgs),
    /// One-dimensional transform of a polynomial, exact, with a quadrature residual.
    Sb1d(Sb1dArgs),
    /// Moments, Wick products, conditional expectations and the multidimensional transform.
    Qalg(QalgArgs),
    /// Mixed-Q error experiment over sampled Q matrices.
    Mixing(MixingArgs),
    /// Random matrix Monte Carlo experiments.
    Rmt(RmtArgs),
    /// Exact identity suite.
    Check(CheckArgs),
    /// Desk-scale reproductions of the three limit theorems with PASS/FAIL verdicts.
    Theorems(TheoremsArgs),
}

#[derive(Args, Debug, Serialize)]
struct OracleArgs {
    /// Ground set size.
    #[arg(long)]
    m: usize,
    /// Evaluate the crossing polynomial at this q (exact decimal or fraction).
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QfunArgs {
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    #[arg(long, default_value = "1")]
    t: String,
    /// density | moment | hermite | mehler-check
    #[arg(long)]
    op: String,
    #[arg(long, allow_hyphen_values = true)]
    x: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Mehler parameter r; purely imaginary with --r-imaginary.
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long)]
    r_imaginary: bool,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    y_re: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    y_im: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct Sb1dArgs {
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    #[arg(long)]
    s: String,
    #[arg(long)]
    t: String,
    /// Ascending coefficients, e.g. "0,0,0,1" for x^3.
    #[arg(long, allow_hyphen_values = true)]
    poly: String,
    /// Point of the quadrature comparison, "re,im".
    #[arg(long, allow_hyphen_values = true, default_value = "0,0")]
    z: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct QalgArgs {
    #[arg(long, allow_hyphen_values = true)]
    q: String,
    /// Covariance as a JSON matrix, e.g. "[[1,0.5],[0.5,2]]".
    #[arg(long)]
    cov: Option<String>,
    /// Generator indices (1-based), e.g. "1,2,1".
    #[arg(long)]
    word: Option<String>,
    /// Word-sum polynomial, e.g. "2*x1.x2 - x1"; used instead of --word.
    #[arg(long, allow_hyphen_values = true)]
    poly: Option<String>,
    /// moment | wick | condexp | sbmulti
    #[arg(long)]
    op: String,
    /// Generators kept by condexp (1-based).
    #[arg(long)]
    sub: Option<String>,
    #[arg(long, default_value_t = 4)]
    degree_cap: usize,
    #[arg(long, default_value = "1")]
    s: String,
    #[arg(long, default_value = "1")]
    t: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MixingArgs {
    #[arg(long, allow_hyphen_values = true)]
    q: f64,
    /// pm1 | zero_one
    #[arg(long, default_value = "pm1")]
    mode: String,
    #[arg(long, default_value = "2,4,8")]
    n_list: String,
    #[arg(long, allow_hyphen_values = true)]
    poly: String,
    #[arg(long, default_value = "1")]
    s: String,
    #[arg(long, default_value = "1")]
    t: String,
    #[arg(long, default_value_t = 5)]
    q_samples: usize,
    /// Diagonal entries q_ii.
    #[arg(long, allow_hyphen_values = true, default_value = "1")]
    diag: String,
    /// Rational arithmetic instead of double precision.
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    seed: u64,
    /// CSV output; a JSON summary is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct RmtArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value = "1")]
    c: String,
    /// binomial | layer
    #[arg(long, default_value = "binomial")]
    family: String,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Ascending coefficients ("0,0,0,1") or a word-sum polynomial ("x1.x2.x1").
    #[arg(long, allow_hyphen_values = true)]
    poly: String,
    #[arg(long = "N-list", alias = "n-list", default_value = "2,4,6,8")]
    n_list: String,
    /// One count for every N, or one per N.
    #[arg(long, default_value = "2000")]
    samples: String,
    #[arg(long)]
    seed: u64,
    /// Average over X -> -X within each sample.
    #[arg(long)]
    antithetic: bool,
    /// Estimate normalized trace moments of P instead of the transform error.
    #[arg(long)]
    moments: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CheckArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TheoremsArgs {
    /// 2, 3, 4 or all
    #[arg(long, default_value = "all")]
    which: String,
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(requested: Option<usize>) -> anyhow::Result<()> {
    let threads = match requested {
        Some(n) => Some(n),
        None => match std::env::var("QSB_THREADS") {
            Ok(v) => Some(v.trim().parse().with_context(|| format!("QSB_THREADS = {v:?} is not a thread count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Returns Ok(false) when an acceptance check fails.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    configure_threads(cli.threads)?;
    let cmd = &cli.command;
    match cmd {
        Command::Oracle(a) => emit(cmd, oracle(a)?, a.out.as_deref()).map(|_| true),
        Command::Qfun(a) => emit(cmd, qfun_op(a)?, a.out.as_deref()).map(|_| true),
        Command::Sb1d(a) => emit(cmd, sb1d(a)?, a.out.as_deref()).map(|_| true),
        Command::Qalg(a) => emit(cmd, qalg(a)?, a.out.as_deref()).map(|_| true),
        Command::Mixing(a) => mixing(cmd, a).map(|_| true),
        Command::Rmt(a) => rmt_cmd(cmd, a).map(|_| true),
        Command::Check(a) => {
            let outcomes = (1..=7).map(|id| criteria::run(id, Profile::Full)).collect::<Result<Vec<_>, _>>()?;
            report(cmd, &outcomes, a.out.as_deref())
        }
        Command::Theorems(a) => {
            let ids: Vec<usize> = match a.which.as_str() {
                "2" => vec![8],
                "3" => vec![9],
                "4" => vec![10],
                "all" => vec![8, 9, 10],
                other => bail!("--which must be 2, 3, 4 or all, got {other:?}"),
            };
            let profile = if a.quick { Profile::Quick } else { Profile::Full };
            let outcomes = ids.into_iter().map(|id| criteria::run(id, profile)).collect::<Result<Vec<_>, _>>()?;
            report(cmd, &outcomes, a.out.as_deref())
        }
    }
}

fn report(cmd: &Command, outcomes: &[Outcome], out: Option<&Path>) -> anyhow::Result<bool> {
    for o in outcomes {
        println!("{}", o.line());
    }
    let passed = outcomes.iter().all(|o| o.passed);
    if let Some(path) = out {
        write_json(path, &record(cmd, serde_json::to_value(outcomes)?)?)?;
    }
    Ok(passed)
}

fn config_hash(cmd: &Command) -> anyhow::Result<String> {
    let canonical = serde_json::to_string(cmd)?;
    Ok(Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

fn record(cmd: &Command, result: Value) -> anyhow::Result<Value> {
    Ok(json!({
        "config": cmd,
        "config_hash": config_hash(cmd)?,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "result": result,
    }))
}

fn write_json(path: &Path, value: &Value) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn emit(cmd: &Command, result: Value, out: Option<&Path>) -> anyhow::Result<()> {
    let rec = record(cmd, result)?;
    match out {
        Some(path) => write_json(path, &rec),
        None => {
            println!("{}", serde_json::to_string_pretty(&rec)?);
            Ok(())
        }
    }
}

/// 17 significant digits, enough to round-trip a double.
fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn rational(s: &str) -> anyhow::Result<Rational> {
    Ok(Rational::parse_decimal(s)?)
}

fn index_list(s: &str, one_based: bool) -> anyhow::Result<Vec<usize>> {
    s.split(',')
        .map(|tok| {
            let v: usize = tok.trim().parse().map_err(|_| QsbError::parse(tok, "non-negative integer"))?;
            if one_based {
                v.checked_sub(1).ok_or_else(|| anyhow::anyhow!("indices are 1-based, got 0"))
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn rational_poly_json(p: &Polynomial<Rational>) -> Value {
    json!({
        "coeffs": p.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        "display": p.to_string(),
    })
}

fn nc_json<S: qsb_core::Scalar + std::fmt::Display>(p: &NcPoly<S>) -> Value {
    let terms: Vec<Value> = p
        .terms()
        .map(|(w, c)| json!({ "word": w.iter().map(|i| i + 1).collect::<Vec<_>>(), "coeff": c.to_string() }))
        .collect();
    json!({ "terms": terms, "display": p.to_string() })
}

fn oracle(a: &OracleArgs) -> anyhow::Result<Value> {
    let m = a.m;
    let poly = crossing_polynomial(m)?;
    let mut v = json!({
        "m": m,
        "pair_partitions": poly.iter().sum::<u64>(),
        "expected_pairings": if m.is_multiple_of(2) { double_factorial_odd(m) } else { 0 },
        "crossing_polynomial": poly,
        "feynman_diagrams": enumerate_feynman_diagrams(m.min(qsb_core::combinat::MAX_DIAGRAM_SIZE))
            .map(|d| d.len())
            .ok()
            .filter(|_| m <= qsb_core::combinat::MAX_DIAGRAM_SIZE),
    });
    if let Some(q) = &a.q {
        v["crossing_sum"] = json!(crossing_sum(m, &rational(q)?)?.to_string());
    }
    Ok(v)
}

fn qfun_op(a: &QfunArgs) -> anyhow::Result<Value> {
    let (qr, tr) = (rational(&a.q)?, rational(&a.t)?);
    let (q, t) = (qr.to_f64(), tr.to_f64());
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow::anyhow!("--op {} needs --{name}", a.op));
    let (inputs, value, bound) = match a.op.as_str() {
        "density" => {
            let x = need(a.x, "x")?;
            let (v, b) = qfun::density_with_bound(x, &QMeasureParams::new(q, t)?)?;
            (json!({"q": a.q, "t": a.t, "x": x}), json!(f17(v)), b)
        }
        "moment" => {
            let n = a.n.ok_or_else(|| anyhow::anyhow!("--op moment needs --n"))?;
            let exact = qfun::moment(n, &qr, &tr)?;
            (json!({"q": a.q, "t": a.t, "n": n}), json!({"exact": exact.to_string(), "float": f17(exact.to_f64())}), 0.0)
        }
        "hermite" => {
            let n = a.n.ok_or_else(|| anyhow::anyhow!("--op hermite needs --n"))?;
            let h = qfun::hermite(n, &qr, &tr).poly;
            let mut value = json!({ "poly": rational_poly_json(&h) });
            if let Some(x) = a.x {
                value["at_x"] = json!(f17(h.map(|c| c.to_f64()).eval(&x)));
            }
            (json!({"q": a.q, "t": a.t, "n": n, "x": a.x}), value, 0.0)
        }
        "mehler-check" => {
            let r = need(a.r, "r")?;
            let x = need(a.x, "x")?;
            let r = if a.r_imaginary { Complex64::new(0.0, r) } else { Complex64::new(r, 0.0) };
            let y = Complex64::new(a.y_re, a.y_im);
            let product = qfun::mehler(r, x, y, q)?;
            let series = qfun::mehler_series(r, x, y, q)?;
            (
                json!({"q": a.q, "r": [r.re, r.im], "x": x, "y": [y.re, y.im]}),
                json!({"product": [f17(product.re), f17(product.im)], "series": [f17(series.re), f17(series.im)]}),
                (product - series).norm(),
            )
        }
        other => bail!("--op must be density, moment, hermite or mehler-check, got {other:?}"),
    };
    Ok(json!({ "inputs": inputs, "value": value, "truncation_error_bound": f17(bound) }))
}

fn parse_complex(s: &str) -> anyhow::Result<Complex64> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [re] => Ok(Complex64::new(re.trim().parse()?, 0.0)),
        [re, im] => Ok(Complex64::new(re.trim().parse()?, im.trim().parse()?)),
        _ => Err(QsbError::parse(s, "complex number \"re,im\"").into()),
    }
}

fn sb1d(a: &Sb1dArgs) -> anyhow::Result<Value> {
    let params = TransformParams::new(rational(&a.q)?, rational(&a.s)?, rational(&a.t)?)?;
    let p: Polynomial<Rational> = Polynomial::parse_coeffs(&a.poly)?;
    let image = sb_exact(&p, &params);
    let z = parse_complex(&a.z)?;
    let pc = p.map(|c| Complex64::new(c.to_f64(), 0.0));
    let quad = sb_quadrature(&pc, z, &params.to_f64())?;
    let exact_at_z = image.map(|c| Complex64::new(c.to_f64(), 0.0)).eval(&z);
    Ok(json!({
        "input_poly": rational_poly_json(&p),
        "image_poly": rational_poly_json(&image),
        "z": [z.re, z.im],
        "quadrature_residual": f17((quad - exact_at_z).norm()),
    }))
}

fn parse_cov(s: &str) -> anyhow::Result<Vec<Vec<Rational>>> {
    let rows: Vec<Vec<Value>> = serde_json::from_str(s).map_err(|e| QsbError::parse(s, &format!("JSON matrix ({e})")))?;
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|v| match v {
                    Value::Number(n) => rational(&n.to_string()),
                    Value::String(t) => rational(t),
                    _ => Err(QsbError::parse(&v.to_string(), "number").into()),
                })
                .collect()
        })
        .collect()
}

fn qalg(a: &QalgArgs) -> anyhow::Result<Value> {
    let q = rational(&a.q)?;
    let poly: NcPoly<Rational> = match (&a.word, &a.poly) {
        (Some(w), None) => NcPoly::word(index_list(w, true)?),
        (None, Some(p)) => NcPoly::parse(p)?,
        _ => bail!("give exactly one of --word and --poly"),
    };
    let k = poly.alphabet_size().max(1);
    let fam = || -> anyhow::Result<GaussianFamily<Rational>> {
        match &a.cov {
            Some(c) => Ok(GaussianFamily::new(q.clone(), parse_cov(c)?)?),
            None => Ok(GaussianFamily::identity(q.clone(), k, Rational::from_integer(1.into()))?),
        }
    };
    let value = match a.op.as_str() {
        "moment" => json!(qalgebra::tau(&poly, &fam()?)?.to_string()),
        "wick" => {
            let f = fam()?;
            let mut out = NcPoly::zero();
            for (w, c) in poly.terms() {
                out = out.add(&qalgebra::wick_word(w, &f)?.scale(c));
            }
            nc_json(&out)
        }
        "condexp" => {
            let sub = index_list(a.sub.as_deref().ok_or_else(|| anyhow::anyhow!("--op condexp needs --sub"))?, true)?;
            let ce = qalgebra::conditional_expectation(&poly, &sub, &fam()?, a.degree_cap)?;
            json!({ "value": nc_json(&ce.value), "degenerate": ce.degenerate })
        }
        "sbmulti" => nc_json(&qalgebra::sb_multidim(&poly, &q, &rational(&a.s)?, &rational(&a.t)?)?),
        other => bail!("--op must be moment, wick, condexp or sbmulti, got {other:?}"),
    };
    Ok(json!({ "input": nc_json(&poly), "op": a.op, "value": value }))
}

fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn mixing(cmd: &Command, a: &MixingArgs) -> anyhow::Result<()> {
    let mode: EntryMode = a.mode.parse()?;
    let n_list = index_list(&a.n_list, false)?;
    let rows: Vec<MixingRow<f64>> = if a.exact {
        let p: Polynomial<Rational> = Polynomial::parse_coeffs(&a.poly)?;
        let rows = mixing_experiment(&p, a.q, mode, rational(&a.diag)?, &rational(&a.s)?, &rational(&a.t)?, &n_list, a.q_samples, a.seed)?;
        rows.into_iter().map(|r| MixingRow { n: r.n, sample: r.sample, seed: r.seed, error: r.error.to_f64() }).collect()
    } else {
        let p: Polynomial<f64> = Polynomial::parse_coeffs(&a.poly)?;
        let f = |s: &str| -> anyhow::Result<f64> { Ok(rational(s)?.to_f64()) };
        mixing_experiment(&p, a.q, mode, f(&a.diag)?, &f(&a.s)?, &f(&a.t)?, &n_list, a.q_samples, a.seed)?
    };
    let means: BTreeMap<String, String> = mean_by_n(&rows).into_iter().map(|(n, v)| (n.to_string(), f17(v))).collect();
    let summary = json!({ "mean_error_by_n": means, "rows": rows.len() });
    match &a.out {
        Some(path) => {
            let mut w = csv_writer(path)?;
            w.write_record(["n", "Q_sample_id", "error"])?;
            for r in &rows {
                w.write_record([r.n.to_string(), r.sample.to_string(), f17(r.error)])?;
            }
            w.flush()?;
            write_json(&sidecar(path), &record(cmd, summary)?)
        }
        None => emit(cmd, json!({ "summary": summary, "rows": rows }), None),
    }
}

fn rmt_cmd(cmd: &Command, a: &RmtArgs) -> anyhow::Result<()> {
    let kind: FamilyKind = a.family.parse()?;
    let sigma = SigmaSpec { kind, c: rational(&a.c)?, d: a.d };
    let n_list = index_list(&a.n_list, false)?;
    let counts = index_list(&a.samples, false)?;
    let samples = match counts.len() {
        1 => vec![counts[0]; n_list.len()],
        n if n == n_list.len() => counts,
        _ => bail!("--samples needs one count or one per N"),
    };
    let plan = McPlan { n_list, samples, seed: a.seed, antithetic: a.antithetic };
    let nc_spec = a.poly.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E');
    let result: ExperimentResult = if a.moments {
        let p: NcPoly<f64> = if nc_spec { NcPoly::parse(&a.poly)? } else { Polynomial::parse_coeffs(&a.poly).map(|p| one_letter(&p))? };
        let k = p.alphabet_size().max(1);
        let cov: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| if i == j { a.t } else { 0.0 }).collect()).collect();
        rmt::moment_convergence(&p, &sigma, &cov, &plan)?
    } else if nc_spec {
        rmt::theorem3_error(&NcPoly::parse(&a.poly)?, &sigma, a.s, a.t, &plan)?
    } else {
        rmt::theorem2_error(&Polynomial::parse_coeffs(&a.poly)?, &sigma, a.s, a.t, &plan)?
    };
    let summary = json!({ "reference": f17(result.reference), "target_q": f17(result.target_q), "records": result.records });
    match &a.out {
        Some(path) => {
            let mut w = csv_writer(path)?;
            w.write_record(["N", "estimate", "stderr", "n_samples", "seconds"])?;
            for r in &result.records {
                w.write_record([r.n_legs.to_string(), f17(r.estimate), f17(r.stderr), r.n_samples.to_string(), f17(r.seconds)])?;
            }
            w.flush()?;
            write_json(&sidecar(path), &record(cmd, summary)?)
        }
        None => emit(cmd, summary, None),
    }
}

fn one_letter(p: &Polynomial<f64>) -> NcPoly<f64> {
    let mut out = NcPoly::zero();
    for (k, c) in p.coeffs().iter().enumerate() {
        out.add_term(vec![0; k], *c);
    }
    out
}
