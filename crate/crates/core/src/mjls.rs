//! Markov jump linear systems `x_{k+1} = A_{σ_k} x_k` built from a graph and
//! per-agent dynamics, plus exact and sampled second-moment propagation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_vertex_matrix, Interval, ProbVector, Tpm};
use crate::graph::{Graph, MODE_CAP};

/// Largest state dimension handled by the exact moment recursions.
pub const EXACT_STATE_CAP: usize = 32;
/// Largest edge count handled by the exact moment recursions.
pub const EXACT_EDGE_CAP: usize = 4;
/// Largest dimension of the second-moment operator.
pub const MOMENT_OPERATOR_CAP: usize = 4096;
/// Sample means beyond this multiple of the initial value flag instability.
pub const INSTABILITY_FACTOR: f64 = 1e6;

const SATURATION: f64 = 1e300;

/// Decoupled and coupled parts of one agent: `A_i = I ⊗ Ad + L_i ⊗ Ac`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDynamics {
    pub ad: DMatrix<f64>,
    pub ac: DMatrix<f64>,
}

impl AgentDynamics {
    pub fn new(ad: DMatrix<f64>, ac: DMatrix<f64>) -> Result<Self> {
        if !ad.is_square() || ad.shape() != ac.shape() || ad.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "Ad is {:?} and Ac is {:?}; both must be square of equal size",
                ad.shape(),
                ac.shape()
            )));
        }
        Ok(Self { ad, ac })
    }

    pub fn scalar(ad: f64, ac: f64) -> Self {
        Self { ad: DMatrix::from_element(1, 1, ad), ac: DMatrix::from_element(1, 1, ac) }
    }

    /// First-order consensus with gain `κ`: `Ad = 1`, `Ac = −κ`.
    pub fn consensus(kappa: f64) -> Self {
        Self::scalar(1.0, -kappa)
    }

    pub fn nx(&self) -> usize {
        self.ad.nrows()
    }
}

/// The `2^m` mode matrices in mode order.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    modes: Vec<DMatrix<f64>>,
    origin: Option<(Graph, AgentDynamics)>,
}

impl ModeSystem {
    /// Mode matrices given explicitly; the count must be a power of two.
    pub fn from_modes(modes: Vec<DMatrix<f64>>) -> Result<Self> {
        if !modes.len().is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("{} modes is not a power of two", modes.len())));
        }
        let d = modes[0].nrows();
        if modes.iter().any(|a| a.nrows() != d || a.ncols() != d) {
            return Err(Error::DimensionMismatch("mode matrices must be square of equal size".into()));
        }
        Ok(Self { modes, origin: None })
    }

    pub fn assemble(g: &Graph, dynamics: &AgentDynamics) -> Result<Self> {
        let eye = DMatrix::<f64>::identity(g.n(), g.n());
        let decoupled = eye.kronecker(&dynamics.ad);
        let modes = g
            .mode_laplacians()?
            .iter()
            .map(|l| &decoupled + l.kronecker(&dynamics.ac))
            .collect();
        Ok(Self { modes, origin: Some((g.clone(), dynamics.clone())) })
    }

    pub fn modes(&self) -> &[DMatrix<f64>] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.modes[0].nrows()
    }

    pub fn origin(&self) -> Option<&(Graph, AgentDynamics)> {
        self.origin.as_ref()
    }

    /// Modes restricted to the disagreement subspace `(1_N ⊗ ℝ^{n_x})^⊥`.
    ///
    /// Every Laplacian annihilates `1_N`, so that subspace and its orthogonal
    /// complement are invariant under every mode; the result has dimension
    /// `(N − 1)·n_x`.
    pub fn disagreement(&self) -> Result<Self> {
        let (g, dynamics) = self
            .origin
            .as_ref()
            .ok_or_else(|| Error::DimensionMismatch("disagreement restriction needs a graph origin".into()))?;
        let basis = disagreement_basis(g.n()).kronecker(&DMatrix::<f64>::identity(dynamics.nx(), dynamics.nx()));
        let modes = self.modes.iter().map(|a| basis.transpose() * a * &basis).collect();
        Ok(Self { modes, origin: None })
    }

    fn check_tpm(&self, tpm: &Tpm) -> Result<()> {
        if tpm.size() != self.mode_count() {
            return Err(Error::DimensionMismatch(format!(
                "TPM has {} modes but the system has {}",
                tpm.size(),
                self.mode_count()
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis (Helmert columns) of the complement of `1_N`.
pub fn disagreement_basis(n: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(n, n - 1);
    for k in 1..n {
        let s = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            u[(i, k - 1)] = 1.0 / s;
        }
        u[(k, k - 1)] = -(k as f64) / s;
    }
    u
}

/// Spectral radius of the second-moment operator
/// `Q_j ← Σ_i t_ij A_i Q_i A_iᵀ`, i.e. of the block matrix whose `(j, i)`
/// block is `t_ij (A_i ⊗ A_i)`.
pub fn moment_spectral_radius(ms: &ModeSystem, tpm: &Tpm) -> Result<f64> {
    ms.check_tpm(tpm)?;
    let d = ms.state_dim();
    let k = ms.mode_count();
    let dim = k * d * d;
    if dim > MOMENT_OPERATOR_CAP {
        return Err(Error::SizeCapExceeded(format!("moment operator of dimension {dim} > {MOMENT_OPERATOR_CAP}")));
    }
    let kron: Vec<DMatrix<f64>> = ms.modes.iter().map(|a| a.kronecker(a)).collect();
    let mut op = DMatrix::zeros(dim, dim);
    for j in 0..k {
        for (i, ki) in kron.iter().enumerate() {
            let t = tpm.get(i, j);
            if t != 0.0 {
                op.view_mut((j * d * d, i * d * d), (d * d, d * d)).copy_from(&(ki * t));
            }
        }
    }
    Ok(op.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Distribution of the initial mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// 1-based mode index.
    Fixed(usize),
    Distribution(Vec<f64>),
    Uniform,
}

impl InitialMode {
    fn probabilities(&self, modes: usize) -> Result<Vec<f64>> {
        match self {
            InitialMode::Fixed(i) if (1..=modes).contains(i) => {
                let mut p = vec![0.0; modes];
                p[i - 1] = 1.0;
                Ok(p)
            }
            InitialMode::Fixed(i) => Err(Error::DimensionMismatch(format!("initial mode {i} not in 1..={modes}"))),
            InitialMode::Distribution(p) if p.len() == modes => {
                ProbVector::with_tolerance(p.clone(), 1e-9).map(ProbVector::into_entries)
            }
            InitialMode::Distribution(p) => {
                Err(Error::DimensionMismatch(format!("initial distribution has {} entries, expected {modes}", p.len())))
            }
            InitialMode::Uniform => Ok(vec![1.0 / modes as f64; modes]),
        }
    }
}

/// Quantity whose expectation is tracked along trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `‖x‖²`
    State,
    /// `‖Π x‖²` with `Π = (I_N − 1 1ᵀ/N) ⊗ I_{n_x}`.
    Disagreement { agents: usize },
}

impl Observable {
    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        match *self {
            Observable::State => x.norm_squared(),
            Observable::Disagreement { agents } => {
                let nx = x.len() / agents;
                let mut mean = DVector::zeros(nx);
                for i in 0..agents {
                    mean += x.rows(i * nx, nx);
                }
                mean /= agents as f64;
                x.norm_squared() - agents as f64 * mean.norm_squared()
            }
        }
    }

    fn weight(&self, dim: usize) -> Result<DMatrix<f64>> {
        match *self {
            Observable::State => Ok(DMatrix::identity(dim, dim)),
            Observable::Disagreement { agents } => {
                if agents == 0 || dim % agents != 0 {
                    return Err(Error::DimensionMismatch(format!("{dim} states cannot split over {agents} agents")));
                }
                let nx = dim / agents;
                let pi = DMatrix::<f64>::identity(agents, agents)
                    - DMatrix::from_element(agents, agents, 1.0 / agents as f64);
                Ok(pi.kronecker(&DMatrix::identity(nx, nx)))
            }
        }
    }
}

/// Exact `E[obs(x_k)]` for `k = 0..=horizon` via mode-conditioned second
/// moments `Q_i(k) = E[x_k x_kᵀ 1{σ_k = i}]`.
pub fn exact_moment_sequence(
    ms: &ModeSystem,
    tpm: &Tpm,
    x0: &DVector<f64>,
    sigma0: &InitialMode,
    horizon: usize,
    observable: Observable,
) -> Result<Vec<f64>> {
    ms.check_tpm(tpm)?;
    let d = ms.state_dim();
    if d > EXACT_STATE_CAP || tpm.m() > EXACT_EDGE_CAP {
        return Err(Error::SizeCapExceeded(format!(
            "exact moments need state dimension <= {EXACT_STATE_CAP} and m <= {EXACT_EDGE_CAP}"
        )));
    }
    if x0.len() != d {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, expected {d}", x0.len())));
    }
    let weight = observable.weight(d)?;
    let pi0 = sigma0.probabilities(ms.mode_count())?;
    let outer = x0 * x0.transpose();
    let mut q: Vec<DMatrix<f64>> = pi0.iter().map(|&p| &outer * p).collect();
    let value = |q: &[DMatrix<f64>]| q.iter().map(|qi| (&weight * qi).trace()).sum::<f64>();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(value(&q));
    for _ in 0..horizon {
        let propagated: Vec<DMatrix<f64>> =
            ms.modes.iter().zip(&q).map(|(a, qi)| a * qi * a.transpose()).collect();
        q = (0..ms.mode_count())
            .map(|j| {
                let mut acc = DMatrix::zeros(d, d);
                for (i, pi) in propagated.iter().enumerate() {
                    let t = tpm.get(i, j);
                    if t != 0.0 {
                        acc += pi * t;
                    }
                }
                acc
            })
            .collect();
        out.push(value(&q));
    }
    Ok(out)
}

/// Sample statistics of `obs(x_k)` over independent trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean at the horizon exceeds [`INSTABILITY_FACTOR`] times the initial
    /// mean, or overflowed.
    pub unstable: bool,
}

/// Seeded simulation of `trials` independent chains.
///
/// Trial `r` draws from its own ChaCha stream `(seed, r)`, and per-step sums
/// are reduced pairwise in trial order, so results do not depend on how
/// rayon schedules the trials.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    ms: &ModeSystem,
    tpm: &Tpm,
    x0: &DVector<f64>,
    sigma0: &InitialMode,
    horizon: usize,
    trials: usize,
    seed: u64,
    observable: Observable,
) -> Result<TrajectoryStats> {
    ms.check_tpm(tpm)?;
    if x0.len() != ms.state_dim() {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, expected {}", x0.len(), ms.state_dim())));
    }
    if trials == 0 {
        return Err(Error::ParameterOutOfRange("need at least one trial".into()));
    }
    observable.weight(ms.state_dim())?;
    let pi0 = sigma0.probabilities(ms.mode_count())?;
    let cdfs: Vec<Vec<f64>> = tpm.rows().iter().map(|r| cumulative(r.entries())).collect();
    let cdf0 = cumulative(&pi0);

    let runs: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut sigma = sample_index(&cdf0, rng.gen::<f64>());
            let mut x = x0.clone();
            let mut values = Vec::with_capacity(horizon + 1);
            values.push(observable.evaluate(&x));
            let mut saturated = false;
            for _ in 0..horizon {
                if saturated {
                    values.push(f64::INFINITY);
                    continue;
                }
                x = &ms.modes[sigma] * &x;
                sigma = sample_index(&cdfs[sigma], rng.gen::<f64>());
                let v = observable.evaluate(&x);
                if !v.is_finite() || v > SATURATION {
                    saturated = true;
                    values.push(f64::INFINITY);
                } else {
                    values.push(v.max(0.0));
                }
            }
            values
        })
        .collect();

    let n = trials as f64;
    let mut mean = Vec::with_capacity(horizon + 1);
    let mut stderr = Vec::with_capacity(horizon + 1);
    let mut column = vec![0.0; trials];
    for k in 0..=horizon {
        for (c, run) in column.iter_mut().zip(&runs) {
            *c = run[k];
        }
        let mu = pairwise_sum(&column) / n;
        let var = if trials > 1 && mu.is_finite() {
            let dev: Vec<f64> = column.iter().map(|v| (v - mu) * (v - mu)).collect();
            pairwise_sum(&dev) / (n - 1.0)
        } else if mu.is_finite() {
            0.0
        } else {
            f64::INFINITY
        };
        mean.push(mu);
        stderr.push((var / n).sqrt());
    }
    let unstable = !mean[horizon].is_finite() || mean[horizon] > INSTABILITY_FACTOR * mean[0];
    Ok(TrajectoryStats { horizon, trials, seed, mean, stderr, unstable })
}

fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Inverse-CDF draw; zero-probability modes are never selected.
fn sample_index(cdf: &[f64], u: f64) -> usize {
    let total = *cdf.last().unwrap_or(&1.0);
    let target = u * total;
    let idx = cdf.partition_point(|&c| c <= target);
    idx.min(cdf.len() - 1)
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n if n <= 8 => v.iter().sum(),
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Random TPM in `conv Γ̂_m`: each row mixes the vertices `t̂_m` with
/// normalized independent uniform weights.
pub fn sample_tpm_in_hull(m: usize, iv: &Interval, seed: u64) -> Result<Tpm> {
    if m > MODE_CAP {
        return Err(Error::ModeCapExceeded { edges: m, cap: MODE_CAP });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1usize << m;
    let rows = (0..n)
        .map(|_| {
            let mut w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + f64::MIN_POSITIVE).collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            let row = apply_vertex_matrix(&w, iv)?;
            ProbVector::with_tolerance(row, 1e-10)
        })
        .collect::<Result<Vec<_>>>()?;
    Tpm::new(rows)
}
