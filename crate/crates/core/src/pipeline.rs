//! End-to-end runs behind the command-line tool. Each returns a report
//! that serializes deterministically; wall-clock timings are only included
//! when asked for.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cert::{
    corollary1_vertex_test, decomposed_vertex_test, default_margin, theorem2_disagreement_test, theorem2_test,
    verify_certificate, Subspace, VerificationReport,
};
use crate::error::{Error, Result};
use crate::fit::{fit_with_tolerance, minimal_interval, TraceEntry};
use crate::geometry::{
    product_vector, simplex_membership, tpm_membership, vertex_matrix, vertex_matrix_determinant, Interval,
    Membership, Tpm,
};
use crate::io::{AnalysisKind, CertificateDocument, Problem, SCHEMA_VERSION};
use crate::mjls::{monte_carlo, ModeSystem, Observable, TrajectoryStats};
use crate::sdp::{SdpOutcome, Verdict};

/// Solver facts that do not depend on the clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub backend: String,
    pub raw_status: String,
    pub iterations: u32,
    /// Present when the result is Unknown.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl SolverSummary {
    fn of(o: &SdpOutcome) -> Self {
        let reason = match &o.status {
            crate::sdp::SdpStatus::Unknown(r) => Some(r.clone()),
            _ => None,
        };
        Self {
            backend: o.diagnostics.backend.clone(),
            raw_status: o.diagnostics.raw_status.clone(),
            iterations: o.diagnostics.iterations,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub version: u32,
    pub verdict: Verdict,
    pub analysis: AnalysisKind,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub margin: f64,
    pub solver: SolverSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

fn margin_for(problem: &Problem, eps: Option<f64>) -> f64 {
    eps.or(problem.options.eps).unwrap_or_else(|| default_margin(&problem.dynamics))
}

/// Spectrum, agent-sized LMI test and an independent recheck of the
/// certificate. A certificate that does not re-verify turns the verdict
/// into Unknown.
pub fn analyze(problem: &Problem, eps: Option<f64>) -> Result<AnalyzeReport> {
    let start = Instant::now();
    let (lambda2, lambda_n) = problem.graph.spectrum().require_connected()?;
    let margin = margin_for(problem, eps);
    let run = match problem.analysis {
        AnalysisKind::General => theorem2_test,
        AnalysisKind::Consensus => theorem2_disagreement_test,
    };
    let res = run(&problem.dynamics, lambda2, lambda_n, &problem.interval, margin)?;
    let mut verdict = res.outcome.verdict();
    let verification = res
        .certificate
        .as_ref()
        .map(|c| verify_certificate(c, &problem.dynamics, &[lambda2, lambda_n], margin / 2.0));
    if verification.as_ref().is_some_and(|v| !v.passed) {
        verdict = Verdict::Unknown;
    }
    let timings = Timings {
        total_seconds: start.elapsed().as_secs_f64(),
        solve_seconds: res.outcome.diagnostics.solve_seconds,
    };
    log::info!("analyze: {verdict:?} in {:.3}s (solver {:.3}s)", timings.total_seconds, timings.solve_seconds);
    Ok(AnalyzeReport {
        version: SCHEMA_VERSION,
        verdict,
        analysis: problem.analysis,
        lambda2,
        lambda_n,
        margin,
        solver: SolverSummary::of(&res.outcome),
        certificate: res.certificate.map(|c| CertificateDocument::new(c, &problem.dynamics)),
        verification,
        timings: Some(timings),
    })
}

/// Re-verifies a stored certificate at half its recorded margin, the same
/// level the solver output is checked at.
pub fn verify_document(doc: &CertificateDocument) -> Result<VerificationReport> {
    let dynamics = doc.dynamics.build()?;
    let c = &doc.certificate;
    let lambdas = if c.lambda2 == c.lambda_n { vec![c.lambda2] } else { vec![c.lambda2, c.lambda_n] };
    Ok(verify_certificate(c, &dynamics, &lambdas, c.margin / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteReport {
    pub version: u32,
    pub subspace: Subspace,
    pub agent_sized: Verdict,
    pub decomposed: Verdict,
    pub corollary1: Verdict,
    /// No stronger test is Feasible while a weaker one is not.
    pub chain_consistent: bool,
    pub margin: f64,
}

/// Mode-enumerating tests next to the agent-sized one on the same instance.
pub fn brute(problem: &Problem, eps: Option<f64>) -> Result<BruteReport> {
    let margin = margin_for(problem, eps);
    let g = &problem.graph;
    let (subspace, ms) = match problem.analysis {
        AnalysisKind::General => (Subspace::Full, ModeSystem::assemble(g, &problem.dynamics)?),
        AnalysisKind::Consensus => {
            (Subspace::Disagreement, ModeSystem::assemble(g, &problem.dynamics)?.disagreement()?)
        }
    };
    let corollary1 = corollary1_vertex_test(&ms, &problem.interval, margin)?.verdict();
    let decomposed = decomposed_vertex_test(g, &problem.dynamics, &problem.interval, margin, subspace)?.verdict();
    let agent_sized = analyze(problem, Some(margin))?.verdict;
    let implies = |a: Verdict, b: Verdict| a != Verdict::Feasible || b == Verdict::Feasible;
    let chain_consistent = implies(agent_sized, decomposed) && implies(decomposed, corollary1);
    if !chain_consistent {
        log::warn!("sufficiency chain broken: {agent_sized:?} -> {decomposed:?} -> {corollary1:?}");
    }
    Ok(BruteReport { version: SCHEMA_VERSION, subspace, agent_sized, decomposed, corollary1, chain_consistent, margin })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub version: u32,
    pub observable: Observable,
    /// Where the TPM sits relative to `conv Γ̂_m` for the problem interval.
    pub tpm_membership: Membership,
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    pub initial: f64,
    pub final_mean: f64,
    pub final_stderr: f64,
    pub unstable: bool,
}

/// Seeded Monte Carlo run. Consensus problems track the disagreement.
pub fn simulate(
    problem: &Problem,
    tpm: &Tpm,
    seed: Option<u64>,
    trials: Option<usize>,
    horizon: Option<usize>,
) -> Result<(SimulateReport, TrajectoryStats)> {
    let ms = ModeSystem::assemble(&problem.graph, &problem.dynamics)?;
    if tpm.m() != problem.graph.m() {
        return Err(Error::DimensionMismatch(format!(
            "TPM has {} modes but the graph has {} edges",
            tpm.size(),
            problem.graph.m()
        )));
    }
    let observable = match problem.analysis {
        AnalysisKind::General => Observable::State,
        AnalysisKind::Consensus => Observable::Disagreement { agents: problem.graph.n() },
    };
    let seed = seed.unwrap_or(problem.options.seed);
    let trials = trials.unwrap_or(problem.options.trials);
    let horizon = horizon.unwrap_or(problem.options.horizon);
    let membership = if problem.interval.is_degenerate() {
        Membership::Outside
    } else {
        tpm_membership(tpm, tpm.m(), &problem.interval, problem.options.tol)?.aggregate
    };
    let stats = monte_carlo(&ms, tpm, &problem.x0(), &problem.options.initial_mode, horizon, trials, seed, observable)?;
    let report = SimulateReport {
        version: SCHEMA_VERSION,
        observable,
        tpm_membership: membership,
        seed,
        trials,
        horizon,
        initial: stats.mean[0],
        final_mean: stats.mean[horizon],
        final_stderr: stats.stderr[horizon],
        unstable: stats.unstable,
    };
    Ok((report, stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub version: u32,
    pub rho_l: f64,
    pub rho_u: f64,
    pub width: f64,
    pub feasible: bool,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// Narrowest interval containing `tpm`, re-fitted at the result.
pub fn fit(tpm: &Tpm, tol_width: f64, base_tol: f64, with_trace: bool) -> Result<FitReport> {
    let search = minimal_interval(tpm, tol_width);
    let check = fit_with_tolerance(tpm, &search.interval, base_tol)?;
    Ok(FitReport {
        version: SCHEMA_VERSION,
        rho_l: search.interval.rho_l,
        rho_u: search.interval.rho_u,
        width: search.width,
        feasible: check.feasible,
        residual: check.residual,
        trace: with_trace.then_some(search.trace),
    })
}

/// A point to place relative to `conv t̂_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryInput {
    /// Per-edge success probabilities, mapped through the product map.
    Probabilities(Vec<f64>),
    /// A point of the simplex.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub input: GeometryInput,
    pub point: Vec<f64>,
    pub barycentric: Vec<f64>,
    pub min_coordinate: f64,
    pub coordinate_sum: f64,
    pub membership: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub version: u32,
    pub m: usize,
    pub interval: Interval,
    /// `(ρ_u − ρ_l)^(m·2^(m−1))`.
    pub determinant: f64,
    /// Determinant of the assembled vertex matrix, for `m ≤ 6`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub determinant_dense: Option<f64>,
    pub generator_condition: f64,
    pub tolerance: f64,
    pub points: Vec<PointReport>,
}

/// Largest `m` for which the dense vertex matrix determinant is reported.
pub const DENSE_DETERMINANT_CAP: usize = 6;

pub fn geometry(m: usize, iv: &Interval, inputs: &[GeometryInput], base_tol: f64) -> Result<GeometryReport> {
    if m > crate::graph::MODE_CAP {
        return Err(Error::ModeCapExceeded { edges: m, cap: crate::graph::MODE_CAP });
    }
    let determinant_dense =
        if m <= DENSE_DETERMINANT_CAP { Some(vertex_matrix(m, iv)?.determinant()) } else { None };
    let mut points = Vec::with_capacity(inputs.len());
    for input in inputs {
        let point = match input {
            GeometryInput::Probabilities(p) if p.len() == m => product_vector(p)?.into_entries(),
            GeometryInput::Probabilities(p) => {
                return Err(Error::DimensionMismatch(format!("{} probabilities for m = {m}", p.len())))
            }
            GeometryInput::Vector(t) if t.len() == 1 << m => t.clone(),
            GeometryInput::Vector(t) => {
                return Err(Error::DimensionMismatch(format!("vector of length {} for m = {m}", t.len())))
            }
        };
        let (membership, bary) = simplex_membership(&point, iv, base_tol)?;
        points.push(PointReport {
            input: input.clone(),
            min_coordinate: bary.min(),
            coordinate_sum: bary.sum(),
            barycentric: bary.lambda,
            point,
            membership,
        });
    }
    Ok(GeometryReport {
        version: SCHEMA_VERSION,
        m,
        interval: *iv,
        determinant: vertex_matrix_determinant(m, iv),
        determinant_dense,
        generator_condition: iv.generator_condition(),
        tolerance: iv.membership_tolerance(base_tol, m),
        points,
    })
}
