//! Command-line front end.
//!
//! Every command writes one result envelope (JSON, or a flattened
//! `key,value` CSV listing) and exits with 0 on success, 1 on usage or input
//! errors, 2 when the law is outside the existence domain and 3 on numerical
//! failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::asymptotics::{asymptotic_cov_locscatter, asymptotic_cov_scatter};
use crate::domain::{check_locscat_domain, check_locscat_domain_auto, check_scatter_domain, check_scatter_domain_auto};
use crate::error::{Error, Result};
use crate::locscatter::solve_locscatter;
use crate::oned::solve_oned;
use crate::sample::EmpiricalSample;
use crate::scatter::{solve_scatter, ScatterConfig, StopReason};
use crate::simlab::{run_clt_experiment, Estimand, McConfig, Sampler, SamplerKind};
use crate::symspace::SpdMatrix;

pub const ENVELOPE_VERSION: &str = "v1";

#[derive(Parser, Debug)]
#[command(name = "tnu", version, about = "t_nu M-functionals of location and scatter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Location-scatter estimate (mu, Sigma); requires nu > 1.
    Estimate(SolveArgs),
    /// Pure-scatter functional A_nu.
    Scatter(SolveArgs),
    /// Existence-domain report (affine subspaces unless --scatter).
    CheckDomain(DomainArgs),
    /// Asymptotic covariance of sqrt(n)(estimate - functional).
    Asymptotics(AsymptoticsArgs),
    /// One-dimensional location and scale, extended to big atoms; requires nu > 1.
    Oned(SolveArgs),
    /// Monte Carlo comparison of replicate and asymptotic covariances.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write the envelope here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// CSV file with one observation per row, or "-" for stdin.
    pub input: String,
    #[arg(long)]
    pub nu: f64,
    /// Gradient tolerance of the fixed-point solver.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

impl SolveArgs {
    fn config(&self) -> ScatterConfig {
        ScatterConfig::new(self.nu).with_tol_grad(self.tol).with_max_iter(self.max_iter)
    }
}

#[derive(Args, Debug, Clone)]
pub struct DomainArgs {
    pub input: String,
    #[arg(long)]
    pub nu: f64,
    /// Check linear subspaces (pure scatter, a0 = nu + d).
    #[arg(long)]
    pub scatter: bool,
    /// Fail instead of falling back to randomized search on large inputs.
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Covariance of (mu, Sigma) instead of A; requires nu > 1.
    #[arg(long)]
    pub locscatter: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Law {
    /// The discrete law given by the input CSV.
    Csv,
    Gaussian,
    T,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// CSV with the target law (for --law csv).
    pub input: Option<String>,
    #[arg(long)]
    pub nu: f64,
    #[arg(long, value_enum, default_value_t = Law::Csv)]
    pub law: Law,
    /// Dimension of the gaussian or t law.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Degrees of freedom of the t law.
    #[arg(long, default_value_t = 5.0)]
    pub t_df: f64,
    #[arg(long)]
    pub locscatter: bool,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Draw size for the surrogate truth of a continuous law.
    #[arg(long, default_value_t = 1_000_000)]
    pub surrogate_n: usize,
    /// Also write per-replicate estimates to this CSV file.
    #[arg(long)]
    pub estimates_csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Scatter(_) => "scatter",
            Command::CheckDomain(_) => "check-domain",
            Command::Asymptotics(_) => "asymptotics",
            Command::Oned(_) => "oned",
            Command::Simulate(_) => "simulate",
        }
    }

    fn output(&self) -> &OutputArgs {
        match self {
            Command::Estimate(a) | Command::Scatter(a) | Command::Oned(a) => &a.out,
            Command::CheckDomain(a) => &a.out,
            Command::Asymptotics(a) => &a.solve.out,
            Command::Simulate(a) => &a.out,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    /// Domain report of a rejected law, or the last iterate of a solver
    /// that ran out of iterations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Serialize)]
pub struct ResultEnvelope {
    pub version: &'static str,
    pub command: String,
    pub timing_ms: f64,
    pub payload: Option<Value>,
    pub warnings: Vec<String>,
    pub error: Option<ErrorInfo>,
}

/// Reads observations from CSV text. A first row with a non-numeric cell is
/// a header; a trailing header column named `weight` holds weights.
pub fn ingest_reader<R: Read>(reader: R) -> Result<EmpiricalSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { row: i + 1, message: e.to_string() })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push((i + 1, rec));
    }
    let Some((_, first)) = rows.first() else {
        return Err(Error::Parse { row: 1, message: "no observations".into() });
    };
    let has_header = first.iter().any(|c| c.parse::<f64>().is_err());
    let width = first.len();
    let mut weighted = false;
    if has_header {
        weighted = first.iter().next_back().is_some_and(|c| c.eq_ignore_ascii_case("weight"));
        rows.remove(0);
        if rows.is_empty() {
            return Err(Error::Parse { row: 2, message: "header without observations".into() });
        }
    }
    let dim = if weighted { width - 1 } else { width };
    if dim == 0 {
        return Err(Error::Parse { row: rows[0].0, message: "no coordinate columns".into() });
    }
    let mut coords = Vec::with_capacity(rows.len() * dim);
    let mut weights = Vec::with_capacity(rows.len());
    for (row, rec) in &rows {
        if rec.len() != width {
            return Err(Error::Parse { row: *row, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        for (j, cell) in rec.iter().enumerate() {
            let x: f64 = cell
                .parse()
                .map_err(|_| Error::Parse { row: *row, message: format!("non-numeric value {cell:?}") })?;
            if !x.is_finite() {
                return Err(Error::Parse { row: *row, message: format!("non-finite value {cell:?}") });
            }
            if weighted && j == dim {
                if x < 0.0 {
                    return Err(Error::Parse { row: *row, message: format!("negative weight {x}") });
                }
                weights.push(x);
            } else {
                coords.push(x);
            }
        }
    }
    EmpiricalSample::new(dim, coords, weighted.then_some(weights))
}

/// [`ingest_reader`] on a file path, or stdin for `-`.
pub fn ingest_csv(path: &str) -> Result<EmpiricalSample> {
    if path == "-" {
        ingest_reader(io::stdin().lock())
    } else {
        ingest_reader(File::open(path)?)
    }
}

fn positive_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("nu must be positive and finite, got {nu}")))
    }
}

fn location_nu(nu: f64) -> Result<()> {
    if nu > 1.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(Error::NuOutOfRange { nu })
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::NumericalBreakdown(format!("serialization failed: {e}")))
}

fn stop_warning(stop: StopReason, converged: bool) -> Option<String> {
    (!converged && stop == StopReason::Step)
        .then(|| "solver stopped on the step criterion before reaching the gradient tolerance".to_string())
}

fn randomized_warning(exact: bool) -> Option<String> {
    (!exact).then(|| "domain check used randomized subspace search; a violation may be missed".to_string())
}

/// Runs one command and returns its payload and warnings.
pub fn dispatch(cmd: &Command) -> Result<(Value, Vec<String>)> {
    let mut warnings = Vec::new();
    let payload = match cmd {
        Command::Estimate(a) => {
            location_nu(a.nu)?;
            let est = solve_locscatter(&ingest_csv(&a.input)?, &a.config())?;
            warnings.extend(stop_warning(est.scatter_diag.stop, est.scatter_diag.converged));
            if let Some(r) = &est.scatter_diag.domain {
                warnings.extend(randomized_warning(r.exact));
            }
            if !est.converged && est.scatter_diag.converged {
                warnings.push("embedding checks exceed tolerance".into());
            }
            to_value(&est)?
        }
        Command::Scatter(a) => {
            positive_nu(a.nu)?;
            let res = solve_scatter(&ingest_csv(&a.input)?, &a.config())?;
            warnings.extend(stop_warning(res.stop, res.converged));
            if let Some(r) = &res.domain {
                warnings.extend(randomized_warning(r.exact));
            }
            to_value(&res)?
        }
        Command::CheckDomain(a) => {
            positive_nu(a.nu)?;
            let q = ingest_csv(&a.input)?;
            let a0 = a.nu + q.dim() as f64;
            let report = match (a.scatter, a.exact) {
                (true, true) => check_scatter_domain(&q, a0)?,
                (true, false) => check_scatter_domain_auto(&q, a0)?,
                (false, true) => check_locscat_domain(&q, a0)?,
                (false, false) => check_locscat_domain_auto(&q, a0)?,
            };
            warnings.extend(randomized_warning(report.exact));
            to_value(&report)?
        }
        Command::Asymptotics(a) => {
            let s = &a.solve;
            let q = ingest_csv(&s.input)?;
            let cov = if a.locscatter {
                location_nu(s.nu)?;
                asymptotic_cov_locscatter(&q, &s.config())?
            } else {
                positive_nu(s.nu)?;
                asymptotic_cov_scatter(&q, &s.config())?
            };
            to_value(&cov)?
        }
        Command::Oned(a) => {
            location_nu(a.nu)?;
            let est = solve_oned(&ingest_csv(&a.input)?, a.nu)?;
            if est.boundary {
                warnings.push("a single atom carries mass >= nu/(nu+1); returning the extended value".into());
            }
            to_value(&est)?
        }
        Command::Simulate(a) => {
            let report = simulate(a)?;
            warnings.extend(report.flags.iter().cloned());
            if let (Some(path), Some(est)) = (&a.estimates_csv, &report.estimates) {
                write_estimates(path, &report.labels, est)?;
            }
            to_value(&report)?
        }
    };
    Ok((payload, warnings))
}

fn simulate(a: &SimulateArgs) -> Result<crate::simlab::McReport> {
    if a.locscatter {
        location_nu(a.nu)?;
    } else {
        positive_nu(a.nu)?;
    }
    let kind = match a.law {
        Law::Csv => {
            let path = a
                .input
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("--law csv needs an input file".into()))?;
            SamplerKind::Discrete { law: ingest_csv(path)? }
        }
        Law::Gaussian => SamplerKind::Gaussian { mu0: vec![0.0; a.dim], sigma0: SpdMatrix::identity(a.dim) },
        Law::T => SamplerKind::MultivariateT { nu0: a.t_df, mu0: vec![0.0; a.dim], sigma0: SpdMatrix::identity(a.dim) },
    };
    if a.dim == 0 {
        return Err(Error::InvalidParameter("--dim must be positive".into()));
    }
    let sampler = Sampler::new(kind, a.seed)?;
    let estimand = if a.locscatter { Estimand::LocScatter } else { Estimand::Scatter };
    let mut cfg = McConfig::new(estimand, a.nu);
    cfg.solver = cfg.solver.with_tol_grad(a.tol).with_max_iter(a.max_iter);
    cfg.surrogate_n = a.surrogate_n;
    cfg.keep_estimates = a.estimates_csv.is_some();
    run_clt_experiment(&sampler, &cfg, a.n, a.reps)
}

fn write_estimates(path: &PathBuf, labels: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io::Error::from)?;
    w.write_record(labels).map_err(io::Error::from)?;
    for r in rows {
        w.write_record(r.iter().map(|x| x.to_string())).map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn error_info(e: &Error) -> ErrorInfo {
    let detail = match e {
        Error::DomainViolation(r) => serde_json::to_value(r).ok(),
        Error::MaxIterExceeded(best) => serde_json::to_value(best).ok(),
        _ => None,
    };
    ErrorInfo { kind: e.kind(), message: e.to_string(), exit_code: e.exit_code(), detail }
}

/// Runs a parsed command and returns the envelope with its exit code.
pub fn execute(cmd: &Command) -> (ResultEnvelope, i32) {
    let start = Instant::now();
    let result = dispatch(cmd);
    let timing_ms = start.elapsed().as_secs_f64() * 1e3;
    let (payload, warnings, error, code) = match result {
        Ok((p, w)) => (Some(p), w, None, 0),
        Err(e) => {
            let info = error_info(&e);
            let code = info.exit_code;
            (None, Vec::new(), Some(info), code)
        }
    };
    let env = ResultEnvelope {
        version: ENVELOPE_VERSION,
        command: cmd.name().to_string(),
        timing_ms,
        payload,
        warnings,
        error,
    };
    (env, code)
}

/// `key,value` lines for every leaf of a JSON value; array indices and
/// object keys are joined with dots.
pub fn flatten(value: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(m) => m.iter().for_each(|(k, x)| walk(&key(k), x, out)),
            Value::Array(a) => a.iter().enumerate().for_each(|(i, x)| walk(&key(&i.to_string()), x, out)),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            Value::Null => out.push((prefix.to_string(), String::new())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn render(env: &ResultEnvelope, format: Format) -> io::Result<Vec<u8>> {
    let value = serde_json::to_value(env).map_err(io::Error::other)?;
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(&value).map_err(io::Error::other)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in flatten(&value) {
                w.write_record([k, v])?;
            }
            w.into_inner().map_err(|e| io::Error::other(e.to_string()))
        }
    }
}

/// Parses `args`, runs the command, writes the envelope and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (env, code) = execute(&cli.command);
    let out = cli.command.output();
    if let Some(err) = &env.error {
        eprintln!("tnu {}: {}", env.command, err.message);
    }
    let written = render(&env, out.format).and_then(|bytes| match &out.output {
        Some(path) => std::fs::write(path, bytes),
        None => io::stdout().lock().write_all(&bytes),
    });
    if let Err(e) = written {
        eprintln!("tnu: cannot write output: {e}");
        return code.max(1);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ingest_plain_values() {
        let s = ingest_reader("0\n1\n".as_bytes()).unwrap();
        assert_eq!((s.dim(), s.len()), (1, 2));
        assert_eq!(s.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn ingest_header_and_weights() {
        let c = 2f64.sqrt();
        let text = format!("x,y\n{c},0\n-{c},0\n0,{c}\n0,-{c}\n");
        let s = ingest_reader(text.as_bytes()).unwrap();
        assert_eq!((s.dim(), s.len()), (2, 4));
        let s = ingest_reader("x, weight\n0, 3\n1, 1\n".as_bytes()).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.weights(), &[0.75, 0.25]);
    }

    #[test]
    fn ingest_errors_carry_rows() {
        let row = |text: &str| match ingest_reader(text.as_bytes()) {
            Err(Error::Parse { row, .. }) => row,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(row("1,2\n3,NaN\n"), 2);
        assert_eq!(row("a,b\n1,2\n3\n"), 3);
        assert_eq!(row("1,2\n3,x4\n"), 2);
        assert_eq!(row("x,weight\n1,1\n2,-1\n"), 3);
        assert_eq!(row(""), 1);
    }

    #[test]
    fn flatten_nested() {
        let v = json!({"a": [1.5, {"b": null}], "c": "x"});
        let f = flatten(&v);
        assert_eq!(
            f,
            vec![
                ("a.0".to_string(), "1.5".to_string()),
                ("a.1.b".to_string(), String::new()),
                ("c".to_string(), "x".to_string())
            ]
        );
    }
}
