use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_mss::geometry::{Interval, DEFAULT_MEMBERSHIP_TOL};
use robust_mss::io::{read_tpm_csv, to_json, trajectory_to_csv, CertificateDocument, Problem};
use robust_mss::pipeline::{self, GeometryInput};
use robust_mss::sdp::Verdict;
use robust_mss::Error;

const EXIT_FEASIBLE: u8 = 0;
const EXIT_INFEASIBLE: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_INPUT: u8 = 64;
const EXIT_CAP: u8 = 65;

/// Robust mean-square stability of multiagent systems under correlated
/// packet loss.
#[derive(Parser)]
#[command(name = "robust-mss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Agent-sized LMI test with certificate.
    Analyze(AnalyzeArgs),
    /// Mode-enumerating LMI tests next to the agent-sized one.
    Brute(BruteArgs),
    /// Seeded Monte Carlo simulation of the switched network.
    Simulate(SimulateArgs),
    /// Narrowest loss interval containing a measured TPM.
    Fit(FitArgs),
    /// Vertex-simplex diagnostics for scripting.
    Geometry(GeometryArgs),
}

#[derive(Args)]
struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Problem file.
    #[arg(long, required_unless_present = "verify_only")]
    input: Option<PathBuf>,
    /// LMI margin; derived from the dynamics when absent.
    #[arg(long)]
    eps: Option<f64>,
    /// Only re-verify this certificate (or a report that embeds one).
    #[arg(long, value_name = "CERT")]
    verify_only: Option<PathBuf>,
    /// Include wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct BruteArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    /// TPM CSV; overrides the path in the problem file.
    #[arg(long)]
    tpm: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Write the trajectory CSV here instead of stdout.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    /// Write a JSON summary here.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    tpm: PathBuf,
    /// Width resolution of the interval search.
    #[arg(long, default_value_t = robust_mss::fit::DEFAULT_WIDTH_TOL)]
    tol: f64,
    /// Base nonnegativity tolerance of the fit.
    #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
    membership_tol: f64,
    /// Include every evaluated interval.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    out: Output,
}

#[derive(Args)]
struct GeometryArgs {
    /// Number of edges.
    #[arg(long)]
    m: usize,
    #[arg(long)]
    rho_l: f64,
    #[arg(long)]
    rho_u: f64,
    /// Comma-separated per-edge probabilities; repeatable.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
    point: Vec<f64>,
    /// Comma-separated simplex vector of length 2^m; repeatable.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
    vector: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_MEMBERSHIP_TOL)]
    tol: f64,
    #[command(flatten)]
    out: Output,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::SizeCapExceeded(_) | Error::ModeCapExceeded { .. } => EXIT_CAP,
            _ => EXIT_INPUT,
        };
        Failure { code, message: e.to_string() }
    }
}

fn input_error(message: String) -> Failure {
    Failure { code: EXIT_INPUT, message }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| input_error(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Feasible => EXIT_FEASIBLE,
        Verdict::Infeasible => EXIT_INFEASIBLE,
        Verdict::Unknown => EXIT_UNKNOWN,
    }
}

fn analyze(args: AnalyzeArgs) -> Result<u8, Failure> {
    if let Some(cert) = &args.verify_only {
        let text = fs::read_to_string(cert).map_err(|e| input_error(format!("{}: {e}", cert.display())))?;
        let doc = CertificateDocument::extract(&text)?;
        let report = pipeline::verify_document(&doc)?;
        write_or_print(args.out.json_out.as_deref(), &to_json(&report))?;
        return Ok(if report.passed { EXIT_FEASIBLE } else { EXIT_INFEASIBLE });
    }
    let problem = Problem::load(args.input.as_deref().expect("required by clap"))?;
    let mut report = pipeline::analyze(&problem, args.eps)?;
    if !args.timings {
        report.timings = None;
    }
    write_or_print(args.out.json_out.as_deref(), &to_json(&report))?;
    Ok(verdict_code(report.verdict))
}

fn brute(args: BruteArgs) -> Result<u8, Failure> {
    let problem = Problem::load(&args.input)?;
    let report = pipeline::brute(&problem, args.eps)?;
    write_or_print(args.out.json_out.as_deref(), &to_json(&report))?;
    if !report.chain_consistent {
        return Ok(EXIT_UNKNOWN);
    }
    Ok(verdict_code(report.corollary1))
}

fn simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let problem = Problem::load(&args.input)?;
    let path = args
        .tpm
        .or_else(|| problem.tpm_path.clone())
        .ok_or_else(|| input_error("no TPM given: pass --tpm or set \"tpm\" in the problem file".into()))?;
    let tpm = read_tpm_csv(&path)?;
    let (report, stats) = pipeline::simulate(&problem, &tpm, args.seed, args.trials, args.horizon)?;
    write_or_print(args.csv_out.as_deref(), &trajectory_to_csv(&stats))?;
    if let Some(p) = &args.json_out {
        write_or_print(Some(p), &to_json(&report))?;
    }
    if report.unstable {
        log::warn!("sample mean grew by more than the instability factor");
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_FEASIBLE)
}

fn fit(args: FitArgs) -> Result<u8, Failure> {
    let tpm = read_tpm_csv(&args.tpm)?;
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(input_error(format!("--tol must lie in (0, 1), got {}", args.tol)));
    }
    let report = pipeline::fit(&tpm, args.tol, args.membership_tol, args.trace)?;
    write_or_print(args.out.json_out.as_deref(), &to_json(&report))?;
    Ok(if report.feasible { EXIT_FEASIBLE } else { EXIT_UNKNOWN })
}

fn geometry(args: GeometryArgs) -> Result<u8, Failure> {
    let iv = Interval::new(args.rho_l, args.rho_u)?;
    let mut inputs = Vec::new();
    let chunk = |values: &[f64], len: usize, what: &str| -> Result<Vec<Vec<f64>>, Failure> {
        if len == 0 || values.len() % len != 0 {
            return Err(input_error(format!("{what} values must come in groups of {len}")));
        }
        Ok(values.chunks(len).map(<[f64]>::to_vec).collect())
    };
    inputs.extend(chunk(&args.point, args.m, "--point")?.into_iter().map(GeometryInput::Probabilities));
    if !args.vector.is_empty() {
        let len = 1usize.checked_shl(args.m as u32).unwrap_or(0);
        inputs.extend(chunk(&args.vector, len, "--vector")?.into_iter().map(GeometryInput::Vector));
    }
    let report = pipeline::geometry(args.m, &iv, &inputs, args.tol)?;
    write_or_print(args.out.json_out.as_deref(), &to_json(&report))?;
    Ok(EXIT_FEASIBLE)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Brute(a) => brute(a),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Geometry(a) => geometry(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
