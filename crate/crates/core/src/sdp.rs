//! Linear matrix inequality feasibility problems and their solver backend.
//!
//! A problem declares matrix variables and affine constraints
//! `F(x) ⪯ −εI` or `F(x) ⪰ εI`. Strict inequalities are encoded through the
//! margin `ε`. Whatever the backend returns is re-verified here by an
//! eigenvalue computation on every constraint before it is reported as
//! feasible.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus,
    SupportedConeT,
};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarShape {
    Symmetric(usize),
    Full(usize, usize),
}

impl VarShape {
    fn scalars(self) -> usize {
        match self {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }

    fn dims(self) -> (usize, usize) {
        match self {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }

    /// Builds the matrix from its scalar parameters.
    fn unpack(self, scalars: &[f64]) -> DMatrix<f64> {
        match self {
            VarShape::Symmetric(n) => {
                let mut out = DMatrix::zeros(n, n);
                let mut k = 0;
                for j in 0..n {
                    for i in 0..=j {
                        out[(i, j)] = scalars[k];
                        out[(j, i)] = scalars[k];
                        k += 1;
                    }
                }
                out
            }
            VarShape::Full(r, c) => DMatrix::from_column_slice(r, c, scalars),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VarDecl {
    name: String,
    shape: VarShape,
    offset: usize,
}

/// Direction of a constraint against the margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `F(x) ⪯ −εI`
    NegativeDefinite,
    /// `F(x) ⪰ εI`
    PositiveDefinite,
}

/// Symmetric affine matrix function `F(x) = F₀ + Σ_k x_k F_k`.
#[derive(Debug, Clone)]
pub struct AffineExpr {
    dim: usize,
    constant: DMatrix<f64>,
    coefficients: Vec<(usize, DMatrix<f64>)>,
}

impl AffineExpr {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, scalars: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (k, f) in &self.coefficients {
            if scalars[*k] != 0.0 {
                out += f * scalars[*k];
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub sense: Sense,
    pub expr: AffineExpr,
}

/// Values of every declared variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    scalars: Vec<f64>,
    values: Vec<DMatrix<f64>>,
}

impl Assignment {
    pub fn get(&self, var: VarId) -> &DMatrix<f64> {
        &self.values[var.0]
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }
}

/// LMI feasibility problem (no objective).
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<VarDecl>,
    scalar_count: usize,
    constraints: Vec<Constraint>,
}

/// Dimensions of a problem, for comparing problem shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemShape {
    pub variables: Vec<(String, usize, usize)>,
    pub constraints: Vec<(String, usize)>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> VarId {
        self.declare(name, VarShape::Symmetric(n))
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.declare(name, VarShape::Full(rows, cols))
    }

    fn declare(&mut self, name: &str, shape: VarShape) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarDecl { name: name.to_string(), shape, offset: self.scalar_count });
        self.scalar_count += shape.scalars();
        id
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_count
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn shape(&self) -> ProblemShape {
        ProblemShape {
            variables: self
                .vars
                .iter()
                .map(|v| {
                    let (r, c) = v.shape.dims();
                    (v.name.clone(), r, c)
                })
                .collect(),
            constraints: self.constraints.iter().map(|c| (c.name.clone(), c.expr.dim)).collect(),
        }
    }

    /// Unpacks a scalar vector into matrix values.
    pub fn assignment(&self, scalars: Vec<f64>) -> Assignment {
        let values = self
            .vars
            .iter()
            .map(|v| v.shape.unpack(&scalars[v.offset..v.offset + v.shape.scalars()]))
            .collect();
        Assignment { scalars, values }
    }

    /// Adds the constraint `f(x) ⪯ −εI` / `⪰ εI`, where `f` must be affine
    /// in the variables. The coefficients are recovered by evaluating `f` at
    /// zero and at every unit scalar; the result is symmetrized.
    pub fn constrain<F>(&mut self, name: &str, sense: Sense, f: F)
    where
        F: Fn(&Assignment) -> DMatrix<f64>,
    {
        let zero = self.assignment(vec![0.0; self.scalar_count]);
        let constant = symmetrize(&f(&zero));
        let dim = constant.nrows();
        let mut coefficients = Vec::new();
        let mut unit = vec![0.0; self.scalar_count];
        for k in 0..self.scalar_count {
            unit[k] = 1.0;
            let value = symmetrize(&f(&self.assignment(unit.clone()))) - &constant;
            unit[k] = 0.0;
            if value.iter().any(|v| *v != 0.0) {
                coefficients.push((k, value));
            }
        }
        self.constraints.push(Constraint { name: name.to_string(), sense, expr: AffineExpr { dim, constant, coefficients } });
    }

    /// `X ⪰ εI` for a declared symmetric variable.
    pub fn positive_definite(&mut self, name: &str, var: VarId) {
        self.constrain(name, Sense::PositiveDefinite, |a| a.get(var).clone());
    }

    /// Every constraint vanishes at `x = 0`.
    pub fn is_homogeneous(&self) -> bool {
        self.constraints.iter().all(|c| c.expr.constant.iter().all(|v| *v == 0.0))
    }

    /// Smallest slack of every constraint: `−λ_max(F)` for `⪯`, `λ_min(F)`
    /// for `⪰`. Feasibility with margin `ε` means every slack is at least `ε`.
    pub fn slacks(&self, scalars: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let eig = SymmetricEigen::new(c.expr.evaluate(scalars)).eigenvalues;
                match c.sense {
                    Sense::NegativeDefinite => -eig.max(),
                    Sense::PositiveDefinite => eig.min(),
                }
            })
            .collect()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Verdict of a feasibility solve.
#[derive(Debug, Clone, PartialEq)]
pub enum SdpStatus {
    Feasible(Assignment),
    Infeasible,
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub backend: String,
    pub raw_status: String,
    pub iterations: u32,
    pub solve_seconds: f64,
    /// Per-constraint slack of the returned point, when there is one.
    pub slacks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOutcome {
    pub status: SdpStatus,
    pub diagnostics: Diagnostics,
}

impl SdpOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SdpStatus::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self.status, SdpStatus::Infeasible)
    }

    pub fn verdict(&self) -> Verdict {
        match self.status {
            SdpStatus::Feasible(_) => Verdict::Feasible,
            SdpStatus::Infeasible => Verdict::Infeasible,
            SdpStatus::Unknown(_) => Verdict::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Feasible,
    Infeasible,
    Unknown,
}

/// What a backend hands back before verification.
#[derive(Debug, Clone, PartialEq)]
pub enum RawOutcome {
    Candidate(Vec<f64>),
    Infeasible,
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSolve {
    pub outcome: RawOutcome,
    pub raw_status: String,
    pub iterations: u32,
}

pub trait SdpBackend {
    fn name(&self) -> &str;
    fn solve_raw(&self, problem: &SdpProblem, margin: f64) -> RawSolve;

    /// Maximizes the common slack `t` over the box `|x_k| ≤ 1`. The returned
    /// candidate carries `t` as its last entry. Used to settle homogeneous
    /// problems the feasibility form could not decide.
    fn max_margin_raw(&self, _problem: &SdpProblem) -> Option<RawSolve> {
        None
    }
}

/// Interior-point backend built on Clarabel's PSD cone support.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap: f64,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { max_iter: 200, tol_feas: 1e-10, tol_gap: 1e-10 }
    }
}

/// Column-major upper triangle with off-diagonals scaled by `√2`.
fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { std::f64::consts::SQRT_2 * m[(i, j)] });
        }
    }
    out
}

/// Conic data `A x + s = b`, `s ∈ cones`, in the layout Clarabel expects.
struct ConicData {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    cols: usize,
}

/// Feasibility form with `margin`, or, when `margin` is `None`, the bounded
/// form `F(x) ⪯ −tI` / `F(x) ⪰ tI`, `|x_k| ≤ 1`, with `t` appended as the
/// last variable.
fn conic_data(problem: &SdpProblem, margin: Option<f64>) -> ConicData {
    let n = problem.scalar_count();
    let cols = if margin.is_some() { n } else { n + 1 };
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    for c in &problem.constraints {
        let dim = c.expr.dim;
        let eps = margin.unwrap_or(0.0);
        let eye = DMatrix::<f64>::identity(dim, dim) * eps;
        let (sign, rhs) = match c.sense {
            Sense::NegativeDefinite => (1.0, -eye - &c.expr.constant),
            Sense::PositiveDefinite => (-1.0, &c.expr.constant - eye),
        };
        let base = b.len();
        b.extend(svec(&rhs));
        for (k, f) in &c.expr.coefficients {
            for (r, v) in svec(f).into_iter().enumerate() {
                if v != 0.0 {
                    columns[*k].push((base + r, sign * v));
                }
            }
        }
        if margin.is_none() {
            // diagonal entries of svec(I)
            let mut r = 0;
            for j in 0..dim {
                r += j;
                columns[n].push((base + r, 1.0));
                r += 1;
            }
        }
        cones.push(if dim == 1 { NonnegativeConeT(1) } else { PSDTriangleConeT(dim) });
    }
    if margin.is_none() {
        let base = b.len();
        for k in 0..n {
            columns[k].push((base + 2 * k, 1.0));
            columns[k].push((base + 2 * k + 1, -1.0));
        }
        b.extend(std::iter::repeat(1.0).take(2 * n));
        cones.push(NonnegativeConeT(2 * n));
    }
    let m = b.len();
    let mut colptr = vec![0usize];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in &mut columns {
        col.sort_unstable_by_key(|e| e.0);
        for &(r, v) in col.iter() {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    ConicData { a: CscMatrix::new(m, cols, colptr, rowval, nzval), b, cones, cols }
}

impl ClarabelBackend {
    fn run(&self, data: &ConicData, q: Vec<f64>) -> RawSolve {
        let p = CscMatrix::<f64>::zeros((data.cols, data.cols));
        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_feas(self.tol_feas)
            .tol_gap_abs(self.tol_gap)
            .tol_gap_rel(self.tol_gap)
            .build()
        {
            Ok(s) => s,
            Err(e) => {
                return RawSolve { outcome: RawOutcome::Unknown(format!("settings: {e}")), raw_status: "error".into(), iterations: 0 }
            }
        };
        let mut solver = match DefaultSolver::new(&p, &q, &data.a, &data.b, &data.cones, settings) {
            Ok(s) => s,
            Err(e) => {
                return RawSolve { outcome: RawOutcome::Unknown(format!("setup: {e}")), raw_status: "error".into(), iterations: 0 }
            }
        };
        solver.solve();
        let status = solver.solution.status;
        let iterations = solver.solution.iterations;
        let outcome = match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => RawOutcome::Candidate(solver.solution.x.clone()),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RawOutcome::Infeasible,
            other => RawOutcome::Unknown(format!("{other:?}")),
        };
        RawSolve { outcome, raw_status: format!("{status:?}"), iterations }
    }
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve_raw(&self, problem: &SdpProblem, margin: f64) -> RawSolve {
        let data = conic_data(problem, Some(margin));
        let q = vec![0.0; data.cols];
        self.run(&data, q)
    }

    fn max_margin_raw(&self, problem: &SdpProblem) -> Option<RawSolve> {
        let data = conic_data(problem, None);
        let mut q = vec![0.0; data.cols];
        q[data.cols - 1] = -1.0;
        Some(self.run(&data, q))
    }
}

/// Solves with the default backend.
pub fn solve_feasibility(problem: &SdpProblem, margin: f64) -> SdpOutcome {
    solve_with(&ClarabelBackend::default(), problem, margin)
}

/// Solves with `backend` and re-verifies any returned point at `margin / 2`.
pub fn solve_with(backend: &dyn SdpBackend, problem: &SdpProblem, margin: f64) -> SdpOutcome {
    let start = Instant::now();
    let raw = backend.solve_raw(problem, margin);
    let solve_seconds = start.elapsed().as_secs_f64();
    let mut diagnostics = Diagnostics {
        backend: backend.name().to_string(),
        raw_status: raw.raw_status,
        iterations: raw.iterations,
        solve_seconds,
        slacks: Vec::new(),
    };
    let status = match raw.outcome {
        RawOutcome::Candidate(x) => {
            if x.len() != problem.scalar_count() || x.iter().any(|v| !v.is_finite()) {
                SdpStatus::Unknown("backend returned a malformed point".into())
            } else {
                let slacks = problem.slacks(&x);
                let worst = slacks.iter().copied().fold(f64::INFINITY, f64::min);
                diagnostics.slacks = slacks;
                if worst >= margin / 2.0 {
                    SdpStatus::Feasible(problem.assignment(x))
                } else {
                    SdpStatus::Unknown(format!("returned point fails recheck: worst slack {worst:.3e} < {:.3e}", margin / 2.0))
                }
            }
        }
        RawOutcome::Infeasible => SdpStatus::Infeasible,
        RawOutcome::Unknown(reason) => SdpStatus::Unknown(reason),
    };
    let status = match status {
        SdpStatus::Unknown(reason) if problem.is_homogeneous() => {
            match settle_homogeneous(backend, problem, margin, &mut diagnostics) {
                Some(settled) => settled,
                None => SdpStatus::Unknown(reason),
            }
        }
        other => other,
    };
    diagnostics.solve_seconds = start.elapsed().as_secs_f64();
    log::debug!("sdp solve: {} in {:.3}s -> {:?}", diagnostics.raw_status, diagnostics.solve_seconds, status_label(&status));
    SdpOutcome { status, diagnostics }
}

/// Largest box-normalized slack below which a homogeneous problem is
/// declared infeasible.
pub const HOMOGENEOUS_SLACK_FLOOR: f64 = 1e-9;

/// For `F(0) = 0` the constraints are invariant under positive scaling, so
/// strict feasibility holds iff the best slack `t*` over the unit box is
/// positive. A point with `t* > 0` is rescaled to the requested margin.
fn settle_homogeneous(
    backend: &dyn SdpBackend,
    problem: &SdpProblem,
    margin: f64,
    diagnostics: &mut Diagnostics,
) -> Option<SdpStatus> {
    let raw = backend.max_margin_raw(problem)?;
    diagnostics.raw_status = format!("{} then max-margin {}", diagnostics.raw_status, raw.raw_status);
    diagnostics.iterations += raw.iterations;
    let RawOutcome::Candidate(mut x) = raw.outcome else { return None };
    let t = x.pop()?;
    if x.len() != problem.scalar_count() || !t.is_finite() {
        return None;
    }
    let achieved = problem.slacks(&x).into_iter().fold(f64::INFINITY, f64::min);
    log::debug!("max-margin fallback: t* = {t:.3e}, verified {achieved:.3e}");
    if achieved > HOMOGENEOUS_SLACK_FLOOR {
        let scaled: Vec<f64> = x.iter().map(|v| v * margin / achieved).collect();
        let slacks = problem.slacks(&scaled);
        let worst = slacks.iter().copied().fold(f64::INFINITY, f64::min);
        diagnostics.slacks = slacks;
        return (worst >= margin / 2.0).then(|| SdpStatus::Feasible(problem.assignment(scaled)));
    }
    (t <= HOMOGENEOUS_SLACK_FLOOR).then_some(SdpStatus::Infeasible)
}

fn status_label(s: &SdpStatus) -> &'static str {
    match s {
        SdpStatus::Feasible(_) => "feasible",
        SdpStatus::Infeasible => "infeasible",
        SdpStatus::Unknown(_) => "unknown",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_identity_is_feasible() {
        let mut p = SdpProblem::new();
        let x = p.symmetric("X", 2);
        p.positive_definite("X > 0", x);
        p.constrain("X < I", Sense::NegativeDefinite, |a| a.get(x) - DMatrix::<f64>::identity(2, 2));
        let out = solve_feasibility(&p, 1e-6);
        let SdpStatus::Feasible(sol) = &out.status else { panic!("{:?}", out.status) };
        let eig = SymmetricEigen::new(sol.get(x).clone()).eigenvalues;
        assert!(eig.min() > 0.0 && eig.max() < 1.0);
    }

    #[test]
    fn contradictory_definiteness_is_infeasible() {
        let mut p = SdpProblem::new();
        let x = p.symmetric("X", 3);
        p.positive_definite("X > 0", x);
        p.constrain("X < 0", Sense::NegativeDefinite, |a| a.get(x).clone());
        assert!(solve_feasibility(&p, 1e-6).is_infeasible());
    }

    #[test]
    fn unpack_round_trips_symmetric_and_full() {
        let mut p = SdpProblem::new();
        let s = p.symmetric("S", 3);
        let f = p.full("F", 2, 3);
        let a = p.assignment((0..12).map(|v| v as f64).collect());
        assert_eq!(a.get(s), &DMatrix::from_row_slice(3, 3, &[0., 1., 3., 1., 2., 4., 3., 4., 5.]));
        assert_eq!(a.get(f), &DMatrix::from_column_slice(2, 3, &[6., 7., 8., 9., 10., 11.]));
    }

    #[test]
    fn affine_recovery_matches_direct_evaluation() {
        let mut p = SdpProblem::new();
        let x = p.symmetric("X", 2);
        let y = p.full("Y", 2, 2);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        let f = move |v: &Assignment| a.transpose() * v.get(x) * &a + v.get(y) + v.get(y).transpose() + DMatrix::identity(2, 2);
        let f2 = f.clone();
        p.constrain("c", Sense::NegativeDefinite, f);
        let scalars = vec![0.3, -1.2, 2.0, 0.5, 0.1, -0.7, 0.9];
        let direct = f2(&p.assignment(scalars.clone()));
        let recovered = p.constraints()[0].expr.evaluate(&scalars);
        assert!((direct - recovered).abs().max() < 1e-14);
    }

    #[test]
    fn svec_ordering() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(svec(&m), vec![1.0, 2.0 * std::f64::consts::SQRT_2, 3.0]);
    }
}
