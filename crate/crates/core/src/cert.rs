//! LMI stability tests for the mode system, from the exact fixed-TPM
//! condition down to the agent-sized test whose dimensions depend only on
//! `n_x`.
//!
//! The tests form a chain of sufficient conditions on a shared instance:
//!
//! ```text
//! theorem2_test ⇒ decomposed_vertex_test ⇒ corollary1_vertex_test
//!               ⇒ theorem1_fixed_tpm for every Γ ∈ conv Γ̂_m
//! ```
//!
//! Only the agent-sized test scales; the others enumerate modes and exist to
//! cross-check it on small graphs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vertex_probabilities, Interval, Tpm};
use crate::graph::Graph;
use crate::io::matrix_serde;
use crate::mjls::{disagreement_basis, AgentDynamics, ModeSystem};
use crate::sdp::{solve_feasibility, Assignment, ProblemShape, SdpOutcome, SdpProblem, SdpStatus, Sense, VarId};

/// Largest number of modes accepted by the mode-enumerating tests.
pub const BRUTE_MODE_CAP: usize = 64;
/// Largest state dimension accepted by the mode-enumerating tests.
pub const BRUTE_STATE_CAP: usize = 32;
/// Largest `|𝒦|·|t̂_m|` accepted by [`corollary1_vertex_test`].
pub const VERTEX_CONSTRAINT_CAP: usize = 4096;

/// Scale-aware strictness margin `1e−7·(1 + ‖Ad‖₂ + ‖Ac‖₂)²`.
pub fn default_margin(dynamics: &AgentDynamics) -> f64 {
    let norm = |m: &DMatrix<f64>| m.singular_values().max();
    1e-7 * (1.0 + norm(&dynamics.ad) + norm(&dynamics.ac)).powi(2)
}

/// Which part of the state space the brute-force tests certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subspace {
    Full,
    /// Orthogonal complement of the agreement subspace `1_N ⊗ ℝ^{n_x}`.
    Disagreement,
}

fn check_brute(ms: &ModeSystem) -> Result<()> {
    if ms.mode_count() > BRUTE_MODE_CAP || ms.state_dim() > BRUTE_STATE_CAP {
        return Err(Error::SizeCapExceeded(format!(
            "{} modes of dimension {} (caps {BRUTE_MODE_CAP} and {BRUTE_STATE_CAP})",
            ms.mode_count(),
            ms.state_dim()
        )));
    }
    Ok(())
}

fn check_tpm(ms: &ModeSystem, tpm: &Tpm) -> Result<()> {
    if tpm.size() != ms.mode_count() {
        return Err(Error::DimensionMismatch(format!(
            "TPM has {} modes but the system has {}",
            tpm.size(),
            ms.mode_count()
        )));
    }
    Ok(())
}

fn mode_lyapunov_vars(problem: &mut SdpProblem, ms: &ModeSystem, name: &str) -> Vec<VarId> {
    let d = ms.state_dim();
    (0..ms.mode_count())
        .map(|i| {
            let v = problem.symmetric(&format!("{name}{}", i + 1), d);
            problem.positive_definite(&format!("{name}{} > 0", i + 1), v);
            v
        })
        .collect()
}

/// `Σ_j t_ij A_jᵀ X_j A_j − X_i ≺ 0` for every mode `i`, `X_i ≻ 0`.
///
/// Exact for a fixed TPM: feasible iff the chain is mean-square stable.
pub fn theorem1_fixed_tpm(ms: &ModeSystem, tpm: &Tpm, margin: f64) -> Result<SdpOutcome> {
    check_brute(ms)?;
    check_tpm(ms, tpm)?;
    let mut problem = SdpProblem::new();
    let xs = mode_lyapunov_vars(&mut problem, ms, "X");
    for i in 0..ms.mode_count() {
        let row: Vec<f64> = tpm.rows()[i].entries().to_vec();
        push_averaged_lyapunov(&mut problem, ms, &xs, i, &row, &format!("mode {}", i + 1));
    }
    Ok(solve_feasibility(&problem, margin))
}

fn push_averaged_lyapunov(problem: &mut SdpProblem, ms: &ModeSystem, xs: &[VarId], i: usize, t: &[f64], name: &str) {
    let modes = ms.modes().to_vec();
    let xs = xs.to_vec();
    let t = t.to_vec();
    problem.constrain(name, Sense::NegativeDefinite, move |a: &Assignment| {
        let mut acc = -a.get(xs[i]).clone();
        for (j, &tj) in t.iter().enumerate() {
            if tj != 0.0 {
                acc += (modes[j].transpose() * a.get(xs[j]) * &modes[j]) * tj;
            }
        }
        acc
    });
}

/// `A_iᵀ (Σ_j t_ij P_j) A_i − P_i ≺ 0`, `P_i ≻ 0`: the equivalent form the
/// fixed-TPM condition is usually stated in.
pub fn theorem1_dual_form(ms: &ModeSystem, tpm: &Tpm, margin: f64) -> Result<SdpOutcome> {
    check_brute(ms)?;
    check_tpm(ms, tpm)?;
    let mut problem = SdpProblem::new();
    let ps = mode_lyapunov_vars(&mut problem, ms, "P");
    for i in 0..ms.mode_count() {
        let a_i = ms.modes()[i].clone();
        let row = tpm.rows()[i].entries().to_vec();
        let ps = ps.clone();
        problem.constrain(&format!("mode {}", i + 1), Sense::NegativeDefinite, move |a: &Assignment| {
            let d = a_i.nrows();
            let mut avg = DMatrix::zeros(d, d);
            for (j, &tj) in row.iter().enumerate() {
                if tj != 0.0 {
                    avg += a.get(ps[j]) * tj;
                }
            }
            a_i.transpose() * avg * &a_i - a.get(ps[i])
        });
    }
    Ok(solve_feasibility(&problem, margin))
}

/// Vertex test over `conv Γ̂_m` with constant `X_i`. Rows of the vertex
/// TPMs decouple, so one constraint per `(i, t)` with `t ∈ t̂_m` covers all
/// `(2^m)^(2^m)` vertex TPMs.
pub fn corollary1_vertex_test(ms: &ModeSystem, iv: &Interval, margin: f64) -> Result<SdpOutcome> {
    check_brute(ms)?;
    let modes = ms.mode_count();
    let m = modes.trailing_zeros() as usize;
    if modes * modes > VERTEX_CONSTRAINT_CAP {
        return Err(Error::SizeCapExceeded(format!("{} vertex constraints > {VERTEX_CONSTRAINT_CAP}", modes * modes)));
    }
    let vertices = vertex_probabilities(m, iv)?;
    let mut problem = SdpProblem::new();
    let xs = mode_lyapunov_vars(&mut problem, ms, "X");
    for i in 0..modes {
        for (r, t) in vertices.iter().enumerate() {
            push_averaged_lyapunov(&mut problem, ms, &xs, i, t.entries(), &format!("mode {} vertex {}", i + 1, r + 1));
        }
    }
    Ok(solve_feasibility(&problem, margin))
}

/// Vertex test with the block-repeated Lyapunov matrix `X_i = I_N ⊗ X̃`:
///
/// ```text
/// I_N ⊗ (AdᵀX̃Ad − X̃) + (Σ_j t_j L_j²) ⊗ AcᵀX̃Ac
///                     + (Σ_j t_j L_j) ⊗ (AdᵀX̃Ac + AcᵀX̃Ad) ≺ 0   ∀ t ∈ t̂_m
/// ```
pub fn decomposed_vertex_test(
    g: &Graph,
    dynamics: &AgentDynamics,
    iv: &Interval,
    margin: f64,
    subspace: Subspace,
) -> Result<SdpOutcome> {
    let modes = 1usize.checked_shl(g.m() as u32).unwrap_or(usize::MAX);
    if modes > BRUTE_MODE_CAP || g.n() * dynamics.nx() > BRUTE_STATE_CAP {
        return Err(Error::SizeCapExceeded(format!("2^{} modes on {} agents", g.m(), g.n())));
    }
    let laplacians = g.mode_laplacians()?;
    let vertices = vertex_probabilities(g.m(), iv)?;
    let nx = dynamics.nx();
    let n = g.n();
    let basis = match subspace {
        Subspace::Full => DMatrix::identity(n * nx, n * nx),
        Subspace::Disagreement => disagreement_basis(n).kronecker(&DMatrix::<f64>::identity(nx, nx)),
    };

    let mut problem = SdpProblem::new();
    let x = problem.symmetric("X~", nx);
    problem.positive_definite("X~ > 0", x);
    for (r, t) in vertices.iter().enumerate() {
        let mut mean_l = DMatrix::zeros(n, n);
        let mut mean_l2 = DMatrix::zeros(n, n);
        for (l, &tj) in laplacians.iter().zip(t.entries()) {
            if tj != 0.0 {
                mean_l += l * tj;
                mean_l2 += (l * l) * tj;
            }
        }
        let (ad, ac) = (dynamics.ad.clone(), dynamics.ac.clone());
        let basis = basis.clone();
        problem.constrain(&format!("vertex {}", r + 1), Sense::NegativeDefinite, move |a: &Assignment| {
            let xt = a.get(x);
            let full = DMatrix::<f64>::identity(n, n).kronecker(&(ad.transpose() * xt * &ad - xt))
                + mean_l2.kronecker(&(ac.transpose() * xt * &ac))
                + mean_l.kronecker(&(ad.transpose() * xt * &ac + ac.transpose() * xt * &ad));
            basis.transpose() * full * &basis
        });
    }
    Ok(solve_feasibility(&problem, margin))
}

/// Structured full-block multiplier
///
/// ```text
/// P = [ blkdiag(Q1, Q2, Q3)   Sᵀ           ]     S = [ 0   0  −S0 ]
///     [ S                     [R11  R12 ]   ]         [ S0  0   0  ]
///     [                       [R12ᵀ R22 ]   ]
/// ```
///
/// With `S0` symmetric the terms linear in `a` cancel in the multiplier
/// condition, which becomes affine in `ρ = a²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplierP {
    #[serde(with = "matrix_serde")]
    pub q1: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub q2: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub q3: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub r11: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub r12: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub r22: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub s0: DMatrix<f64>,
}

impl MultiplierP {
    pub fn nx(&self) -> usize {
        self.q1.nrows()
    }

    /// Scalar multiplier (`n_x = 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(q1: f64, q2: f64, q3: f64, r11: f64, r12: f64, r22: f64, s0: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self { q1: s(q1), q2: s(q2), q3: s(q3), r11: s(r11), r12: s(r12), r22: s(r22), s0: s(s0) }
    }

    /// The symmetric `5n_x × 5n_x` matrix.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.nx();
        let mut p = DMatrix::zeros(5 * n, 5 * n);
        let mut put = |r: usize, c: usize, b: &DMatrix<f64>| p.view_mut((r * n, c * n), (n, n)).copy_from(b);
        put(0, 0, &self.q1);
        put(1, 1, &self.q2);
        put(2, 2, &self.q3);
        put(3, 3, &self.r11);
        put(3, 4, &self.r12);
        put(4, 3, &self.r12.transpose());
        put(4, 4, &self.r22);
        // S = [[0, 0, -S0], [S0, 0, 0]] in rows 3..5, columns 0..3
        put(3, 2, &-self.s0.clone());
        put(4, 0, &self.s0);
        put(2, 3, &-self.s0.transpose());
        put(0, 4, &self.s0.transpose());
        p
    }

    /// `[Δ ⊗ I; I]ᵀ P [Δ ⊗ I; I]` for `Δ = [[a, 0], [b, 0], [0, a]]`,
    /// `b = √(1 − a²)`.
    pub fn quadratic_form(&self, a: f64) -> DMatrix<f64> {
        let n = self.nx();
        let b = (1.0 - a * a).max(0.0).sqrt();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut d = DMatrix::zeros(5 * n, 2 * n);
        d.view_mut((0, 0), (n, n)).copy_from(&(&eye * a));
        d.view_mut((n, 0), (n, n)).copy_from(&(&eye * b));
        d.view_mut((2 * n, n), (n, n)).copy_from(&(&eye * a));
        d.view_mut((3 * n, 0), (2 * n, 2 * n)).copy_from(&DMatrix::identity(2 * n, 2 * n));
        d.transpose() * self.assemble() * d
    }

    /// The form above after cancellation, as a function of `ρ = a²`:
    /// `[[R11 + ρQ1 + (1 − ρ)Q2, R12], [R12ᵀ, R22 + ρQ3]]`.
    pub fn reduced_form(&self, rho: f64) -> DMatrix<f64> {
        let n = self.nx();
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&(&self.r11 + &self.q1 * rho + &self.q2 * (1.0 - rho)));
        out.view_mut((0, n), (n, n)).copy_from(&self.r12);
        out.view_mut((n, 0), (n, n)).copy_from(&self.r12.transpose());
        out.view_mut((n, n), (n, n)).copy_from(&(&self.r22 + &self.q3 * rho));
        out
    }
}

/// The two endpoint conditions (`≻ 0`) equivalent to the multiplier
/// condition over the whole uncertainty set, at `ρ_l` and `ρ_u`.
pub fn multiplier_validity_constraints(p: &MultiplierP, iv: &Interval) -> [DMatrix<f64>; 2] {
    [p.reduced_form(iv.rho_l), p.reduced_form(iv.rho_u)]
}

/// `AdᵀX̃Ad − X̃` (must be `≺ 0`).
pub fn nominal_lmi(xtilde: &DMatrix<f64>, dynamics: &AgentDynamics) -> DMatrix<f64> {
    dynamics.ad.transpose() * xtilde * &dynamics.ad - xtilde
}

/// Outer factor of the modal LMI (`8n_x × 4n_x`).
fn modal_outer_factor(dynamics: &AgentDynamics, lambda: f64) -> DMatrix<f64> {
    let n = dynamics.nx();
    let sl = lambda.sqrt();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut w = DMatrix::zeros(8 * n, 4 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&eye);
    w.view_mut((n, 0), (n, n)).copy_from(&dynamics.ad);
    w.view_mut((n, n), (n, n)).copy_from(&(&eye * sl));
    w.view_mut((2 * n, 2 * n), (n, n)).copy_from(&eye);
    w.view_mut((3 * n, n), (3 * n, 3 * n)).copy_from(&DMatrix::identity(3 * n, 3 * n));
    w.view_mut((6 * n, 3 * n), (n, n)).copy_from(&eye);
    w.view_mut((7 * n, 0), (n, n)).copy_from(&(&dynamics.ac * sl));
    w
}

/// `Wᵀ blkdiag(−X̃, X̃, 2X̃, P) W` for the Laplacian eigenvalue `λ`
/// (must be `≺ 0`).
pub fn modal_lmi(xtilde: &DMatrix<f64>, p: &MultiplierP, dynamics: &AgentDynamics, lambda: f64) -> DMatrix<f64> {
    let n = dynamics.nx();
    let w = modal_outer_factor(dynamics, lambda);
    let mut mid = DMatrix::zeros(8 * n, 8 * n);
    mid.view_mut((0, 0), (n, n)).copy_from(&-xtilde.clone());
    mid.view_mut((n, n), (n, n)).copy_from(xtilde);
    mid.view_mut((2 * n, 2 * n), (n, n)).copy_from(&(xtilde * 2.0));
    mid.view_mut((3 * n, 3 * n), (5 * n, 5 * n)).copy_from(&p.assemble());
    w.transpose() * mid * w
}

/// Lyapunov matrix and multiplier proving robust stability over
/// `conv Γ̂_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    #[serde(with = "matrix_serde")]
    pub xtilde: DMatrix<f64>,
    pub multiplier: MultiplierP,
    pub interval: Interval,
    pub lambda2: f64,
    pub lambda_n: f64,
    pub margin: f64,
    /// The agreement condition `AdᵀX̃Ad − X̃ ≺ 0` was not imposed; the
    /// certificate then covers the disagreement dynamics only.
    pub nominal_dropped: bool,
}

/// Structure and solution of an agent-sized test.
#[derive(Debug, Clone)]
pub struct Theorem2Result {
    pub outcome: SdpOutcome,
    pub certificate: Option<Certificate>,
    pub shape: ProblemShape,
}

#[derive(Clone, Copy)]
struct Theorem2Vars {
    xtilde: VarId,
    q: [VarId; 3],
    r11: VarId,
    r12: VarId,
    r22: VarId,
    s0: VarId,
}

impl Theorem2Vars {
    fn multiplier(&self, a: &Assignment) -> MultiplierP {
        MultiplierP {
            q1: a.get(self.q[0]).clone(),
            q2: a.get(self.q[1]).clone(),
            q3: a.get(self.q[2]).clone(),
            r11: a.get(self.r11).clone(),
            r12: a.get(self.r12).clone(),
            r22: a.get(self.r22).clone(),
            s0: a.get(self.s0).clone(),
        }
    }
}

fn check_lambdas(lambda2: f64, lambda_n: f64) -> Result<()> {
    if !(lambda2 > 0.0 && lambda2 <= lambda_n && lambda_n.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("need 0 < λ2 <= λN, got λ2 = {lambda2}, λN = {lambda_n}")));
    }
    Ok(())
}

fn theorem2_problem(
    dynamics: &AgentDynamics,
    lambda2: f64,
    lambda_n: f64,
    iv: &Interval,
    drop_nominal: bool,
) -> (SdpProblem, Theorem2Vars) {
    let n = dynamics.nx();
    let mut problem = SdpProblem::new();
    let vars = Theorem2Vars {
        xtilde: problem.symmetric("X~", n),
        q: [problem.symmetric("Q1", n), problem.symmetric("Q2", n), problem.symmetric("Q3", n)],
        r11: problem.symmetric("R11", n),
        r12: problem.full("R12", n, n),
        r22: problem.symmetric("R22", n),
        s0: problem.symmetric("S0", n),
    };
    let x = vars.xtilde;
    problem.positive_definite("X~ > 0", x);
    if !drop_nominal {
        let dynamics = dynamics.clone();
        problem.constrain("nominal", Sense::NegativeDefinite, move |a| nominal_lmi(a.get(x), &dynamics));
    }
    // names stay free of the eigenvalues so shapes compare across graphs
    let lambdas = if lambda2 == lambda_n { vec![("λ2", lambda2)] } else { vec![("λ2", lambda2), ("λN", lambda_n)] };
    for (label, lambda) in lambdas {
        let dynamics = dynamics.clone();
        let v = vars;
        problem.constrain(&format!("modal at {label}"), Sense::NegativeDefinite, move |a| {
            modal_lmi(a.get(v.xtilde), &v.multiplier(a), &dynamics, lambda)
        });
    }
    for (label, rho) in [("ρ_l", iv.rho_l), ("ρ_u", iv.rho_u)] {
        let v = vars;
        problem.constrain(&format!("multiplier at {label}"), Sense::PositiveDefinite, move |a| {
            v.multiplier(a).reduced_form(rho)
        });
    }
    (problem, vars)
}

/// Shape of the agent-sized test without solving it.
pub fn theorem2_shape(dynamics: &AgentDynamics, lambda2: f64, lambda_n: f64, iv: &Interval) -> Result<ProblemShape> {
    check_lambdas(lambda2, lambda_n)?;
    Ok(theorem2_problem(dynamics, lambda2, lambda_n, iv, false).0.shape())
}

/// Agent-sized robust stability test over `conv Γ̂_m`.
///
/// Variables are `X̃` and the structured multiplier; every constraint has a
/// size that is a multiple of `n_x`, independent of the number of agents
/// and edges.
pub fn theorem2_test(
    dynamics: &AgentDynamics,
    lambda2: f64,
    lambda_n: f64,
    iv: &Interval,
    margin: f64,
) -> Result<Theorem2Result> {
    run_theorem2(dynamics, lambda2, lambda_n, iv, margin, false)
}

fn run_theorem2(
    dynamics: &AgentDynamics,
    lambda2: f64,
    lambda_n: f64,
    iv: &Interval,
    margin: f64,
    drop_nominal: bool,
) -> Result<Theorem2Result> {
    check_lambdas(lambda2, lambda_n)?;
    let (problem, vars) = theorem2_problem(dynamics, lambda2, lambda_n, iv, drop_nominal);
    let shape = problem.shape();
    let outcome = solve_feasibility(&problem, margin);
    let certificate = match &outcome.status {
        SdpStatus::Feasible(a) => Some(Certificate {
            xtilde: a.get(vars.xtilde).clone(),
            multiplier: vars.multiplier(a),
            interval: *iv,
            lambda2,
            lambda_n,
            margin,
            nominal_dropped: drop_nominal,
        }),
        _ => None,
    };
    Ok(Theorem2Result { outcome, certificate, shape })
}

/// Agent-sized test on the disagreement dynamics of a general decomposable
/// system: the agreement condition is dropped.
pub fn theorem2_disagreement_test(
    dynamics: &AgentDynamics,
    lambda2: f64,
    lambda_n: f64,
    iv: &Interval,
    margin: f64,
) -> Result<Theorem2Result> {
    run_theorem2(dynamics, lambda2, lambda_n, iv, margin, true)
}

/// First-order consensus `Ad = 1`, `Ac = −κ` over `[ρ_l, 1]`. A feasible
/// outcome certifies `E‖Π x_k‖² → 0` for every TPM in `conv Γ̂_m`.
pub fn consensus_check(g: &Graph, kappa: f64, rho_l: f64, margin: f64) -> Result<Theorem2Result> {
    if !(kappa > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("gain must be positive, got {kappa}")));
    }
    let (lambda2, lambda_n) = g.spectrum().require_connected()?;
    let iv = Interval::new(rho_l, 1.0)?;
    theorem2_disagreement_test(&AgentDynamics::consensus(kappa), lambda2, lambda_n, &iv, margin)
}

/// Closed-form witness for first-order consensus: `X̃ = κ` and a diagonal
/// multiplier built from `κλN`, `ρ_l` and the slack `ε̃ ∈ (0, (2 − κλN)/4)`.
pub fn consensus_certificate(kappa: f64, lambda_n: f64, rho_l: f64, slack: f64) -> Result<(DMatrix<f64>, MultiplierP)> {
    let kl = kappa * lambda_n;
    if !(kappa > 0.0) || !(kl < 2.0) {
        return Err(Error::ParameterOutOfRange(format!("need κ > 0 and κλN < 2, got κλN = {kl}")));
    }
    if !(slack > 0.0 && slack < (2.0 - kl) / 4.0) {
        return Err(Error::ParameterOutOfRange(format!("slack {slack} outside (0, {})", (2.0 - kl) / 4.0)));
    }
    if !(rho_l > 0.0 && rho_l <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("ρ_l must lie in (0, 1], got {rho_l}")));
    }
    let q12 = -kl - slack;
    let p = MultiplierP::scalar(
        q12,
        q12,
        2.0 - kl - 3.0 * slack,
        kl + 2.0 * slack,
        0.0,
        rho_l * (kl - 2.0 + 4.0 * slack),
        1.0,
    );
    Ok((DMatrix::from_element(1, 1, kappa), p))
}

/// One re-evaluated constraint of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Largest eigenvalue for `≺ 0` checks, smallest for `≻ 0` checks.
    pub extreme_eigenvalue: f64,
    /// Distance to the wrong side: `−λ_max` resp. `λ_min`.
    pub slack: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
    pub min_slack: f64,
    pub passed: bool,
}

/// Solver-independent recheck of a certificate: rebuilds every constraint
/// of the agent-sized test and requires slack at least `margin` on each.
pub fn verify_certificate(
    cert: &Certificate,
    dynamics: &AgentDynamics,
    lambdas: &[f64],
    margin: f64,
) -> VerificationReport {
    let mut checks = Vec::new();
    let mut push = |name: String, m: DMatrix<f64>, negative: bool| {
        let sym = (&m + m.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let (extreme, slack) = if negative { (eig.max(), -eig.max()) } else { (eig.min(), eig.min()) };
        let passed = slack.is_finite() && slack >= margin;
        checks.push(CheckResult { name, extreme_eigenvalue: extreme, slack, passed });
    };
    let shapes_ok = cert.xtilde.shape() == dynamics.ad.shape() && cert.multiplier.nx() == dynamics.nx();
    if shapes_ok {
        push("X~ > 0".into(), cert.xtilde.clone(), false);
        if !cert.nominal_dropped {
            push("nominal".into(), nominal_lmi(&cert.xtilde, dynamics), true);
        }
        for &lambda in lambdas {
            push(format!("modal λ = {lambda:.6}"), modal_lmi(&cert.xtilde, &cert.multiplier, dynamics, lambda), true);
        }
        let [low, high] = multiplier_validity_constraints(&cert.multiplier, &cert.interval);
        push("multiplier at ρ_l".into(), low, false);
        push("multiplier at ρ_u".into(), high, false);
    } else {
        checks.push(CheckResult {
            name: "dimensions".into(),
            extreme_eigenvalue: f64::NAN,
            slack: f64::NEG_INFINITY,
            passed: false,
        });
    }
    let min_slack = checks.iter().map(|c| c.slack).fold(f64::INFINITY, f64::min);
    let passed = checks.iter().all(|c| c.passed);
    VerificationReport { checks, min_slack, passed }
}
