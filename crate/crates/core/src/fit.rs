//! Fitting measured TPMs into `conv Γ̂_m` and searching for the narrowest
//! interval that contains them.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    apply_vertex_matrix, barycentric_coordinates, product_vector, vertex_matrix, vertex_probabilities, Interval,
    ProbVector, Tpm, DEFAULT_MEMBERSHIP_TOL,
};
use crate::graph::MODE_CAP;
use crate::io::matrix_serde;

/// Default width resolution of [`minimal_interval`].
pub const DEFAULT_WIDTH_TOL: f64 = 1e-3;

/// Endpoint resolution of the final bisection in [`minimal_interval`].
const POLISH_TOL: f64 = 1e-10;

/// Solution of `Λ Mᵀ = Γ`, `Λ 1 = 1`, `Λ ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub feasible: bool,
    /// Row `i` holds the barycentric coordinates of row `i` of `Γ`. Reported
    /// even when some entry is negative.
    #[serde(with = "matrix_serde")]
    pub lambda: DMatrix<f64>,
    pub min_coordinate: f64,
    /// Nonnegativity tolerance actually applied.
    pub tolerance: f64,
    /// `max |Λ Mᵀ − Γ|`.
    pub residual: f64,
    /// `max |max(Λ, 0) Mᵀ − Γ|`: how far `Γ` is from the hull point obtained
    /// by dropping the negative weights.
    pub backward_error: f64,
}

/// Closed-form fit: `M` is invertible for `ρ_l < ρ_u`, so each row has the
/// unique candidate `M⁻¹ γ_i`, computed axis by axis.
pub fn fit_feasible(tpm: &Tpm, iv: &Interval) -> Result<FitResult> {
    fit_with_tolerance(tpm, iv, DEFAULT_MEMBERSHIP_TOL)
}

pub fn fit_with_tolerance(tpm: &Tpm, iv: &Interval, base_tol: f64) -> Result<FitResult> {
    if iv.is_degenerate() {
        return Err(Error::DegenerateInterval(iv.rho_l));
    }
    let n = tpm.size();
    let mut lambda = DMatrix::zeros(n, n);
    let (mut residual, mut backward_error): (f64, f64) = (0.0, 0.0);
    for (i, row) in tpm.rows().iter().enumerate() {
        let (coords, res, back) = fit_row(row.entries(), iv)?;
        residual = residual.max(res);
        backward_error = backward_error.max(back);
        for (j, v) in coords.into_iter().enumerate() {
            lambda[(i, j)] = v;
        }
    }
    let tolerance = iv.membership_tolerance(base_tol, tpm.m());
    let min_coordinate = lambda.min();
    let feasible = min_coordinate >= -tolerance && backward_error <= backward_tolerance(base_tol);
    Ok(FitResult { feasible, lambda, min_coordinate, tolerance, residual, backward_error })
}

/// The condition-scaled tolerance on `Λ` becomes vacuous for very narrow
/// intervals, so membership also requires the clipped weights to reproduce
/// the row.
fn backward_tolerance(base_tol: f64) -> f64 {
    10.0 * base_tol
}

/// Coordinates, forward residual and backward error of one row.
fn fit_row(t: &[f64], iv: &Interval) -> Result<(Vec<f64>, f64, f64)> {
    let coords = barycentric_coordinates(t, iv)?.lambda;
    let max_diff = |v: Vec<f64>| v.iter().zip(t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let residual = max_diff(apply_vertex_matrix(&coords, iv)?);
    let clipped: Vec<f64> = coords.iter().map(|v| v.max(0.0)).collect();
    let backward = max_diff(apply_vertex_matrix(&clipped, iv)?);
    Ok((coords, residual, backward))
}

/// Fast yes/no version of [`fit_feasible`] that stops at the first
/// infeasible row.
fn is_feasible(tpm: &Tpm, rho_l: f64, rho_u: f64) -> bool {
    let Ok(iv) = Interval::new(rho_l, rho_u) else { return false };
    if iv.is_degenerate() {
        return false;
    }
    let tol = iv.membership_tolerance(DEFAULT_MEMBERSHIP_TOL, tpm.m());
    let back_tol = backward_tolerance(DEFAULT_MEMBERSHIP_TOL);
    tpm.rows().iter().all(|r| {
        fit_row(r.entries(), &iv)
            .map(|(c, _, back)| c.iter().all(|v| *v >= -tol) && back <= back_tol)
            .unwrap_or(false)
    })
}

/// Solves the fit as a generic LP, one row at a time, as an independent
/// check of the closed form. `None` if the solver reports infeasibility.
pub fn fit_by_lp(tpm: &Tpm, iv: &Interval) -> Result<Option<DMatrix<f64>>> {
    let n = tpm.size();
    let m = vertex_matrix(tpm.m(), iv)?;
    // rows 0..n: M λ = γ (zero cone), rows n..2n: λ ≥ 0
    let mut colptr = vec![0];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for c in 0..n {
        for r in 0..n {
            if m[(r, c)] != 0.0 {
                rowval.push(r);
                nzval.push(m[(r, c)]);
            }
        }
        rowval.push(n + c);
        nzval.push(-1.0);
        colptr.push(rowval.len());
    }
    let a = CscMatrix::new(2 * n, n, colptr, rowval, nzval);
    let p = CscMatrix::<f64>::zeros((n, n));
    let q = vec![0.0; n];
    let cones = [ZeroConeT(n), NonnegativeConeT(n)];
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in tpm.rows().iter().enumerate() {
        let mut b = row.entries().to_vec();
        b.extend(std::iter::repeat(0.0).take(n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(1e-12)
            .tol_gap_abs(1e-12)
            .tol_gap_rel(1e-12)
            .build()
            .map_err(|e| Error::Parse(format!("LP settings: {e}")))?;
        let mut solver =
            DefaultSolver::new(&p, &q, &a, &b, &cones, settings).map_err(|e| Error::Parse(format!("LP setup: {e}")))?;
        solver.solve();
        match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                for (j, v) in solver.solution.x.iter().enumerate() {
                    out[(i, j)] = *v;
                }
            }
            _ => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// One interval evaluated during the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rho_l: f64,
    pub rho_u: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSearchResult {
    pub interval: Interval,
    pub width: f64,
    pub trace: Vec<TraceEntry>,
}

/// Smallest `ρ_u` with `[ρ_l, ρ_u]` feasible, to within `tol`, given that
/// `[ρ_l, hi]` is feasible. Feasibility is monotone in `ρ_u`.
fn lowest_upper(tpm: &Tpm, rho_l: f64, hi: f64, tol: f64, trace: &mut Vec<TraceEntry>) -> f64 {
    let (mut lo, mut hi) = (rho_l, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let ok = is_feasible(tpm, rho_l, mid);
        trace.push(TraceEntry { rho_l, rho_u: mid, feasible: ok });
        if ok {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest `ρ_l` with `[ρ_l, ρ_u]` feasible, to within `tol`, assuming the
/// starting `ρ_l` is feasible.
fn highest_lower(tpm: &Tpm, rho_l: f64, rho_u: f64, tol: f64, trace: &mut Vec<TraceEntry>) -> f64 {
    let (mut lo, mut hi) = (rho_l, rho_u);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let ok = is_feasible(tpm, mid, rho_u);
        trace.push(TraceEntry { rho_l: mid, rho_u, feasible: ok });
        if ok {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Narrowest `[ρ_l, ρ_u]` with `Γ ∈ conv Γ̂_m`, to within `tol_width`.
///
/// Feasibility only grows when the interval grows, so `u*(ρ_l)`, the lowest
/// feasible upper end for a given lower end, is nondecreasing. The search
/// evaluates `u*` on a grid of lower ends with step `10·tol_width`, refines
/// every grid cell whose lower bound `u*(l_k) − l_{k+1}` could still beat
/// the incumbent, and finally bisects both endpoints of the winner.
pub fn minimal_interval(tpm: &Tpm, tol_width: f64) -> IntervalSearchResult {
    let tol_width = if tol_width > 0.0 && tol_width.is_finite() { tol_width } else { DEFAULT_WIDTH_TOL };
    let inner = tol_width / 100.0;
    let mut trace = vec![TraceEntry { rho_l: 0.0, rho_u: 1.0, feasible: is_feasible(tpm, 0.0, 1.0) }];

    // (l, u*(l)) for every lower end evaluated so far
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut step = 10.0 * tol_width;
    let mut cells: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    let mut first = 0;
    loop {
        let starts: Vec<f64> = {
            let mut s: Vec<f64> = cells
                .iter()
                .flat_map(|&(a, b)| {
                    let k = ((b - a) / step).ceil().max(1.0) as usize;
                    (first..k).map(move |i| a + i as f64 * step).filter(move |&l| l < b)
                })
                .collect();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s
        };
        let evaluated: Vec<(f64, Option<f64>, Vec<TraceEntry>)> = starts
            .par_iter()
            .map(|&l| {
                let mut local = Vec::new();
                let ok = is_feasible(tpm, l, 1.0);
                local.push(TraceEntry { rho_l: l, rho_u: 1.0, feasible: ok });
                let u = ok.then(|| lowest_upper(tpm, l, 1.0, inner, &mut local));
                (l, u, local)
            })
            .collect();
        for (l, u, local) in evaluated {
            trace.extend(local);
            if let Some(u) = u {
                points.push((l, u));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let best = points.iter().map(|(l, u)| u - l).fold(f64::INFINITY, f64::min);
        if step <= tol_width {
            break;
        }
        // u* is nondecreasing, so on (l_k, l_k + step) the width is at least u*(l_k) − l_k − step
        cells = points
            .iter()
            .filter(|(l, u)| starts.contains(l) && u - l - step < best - tol_width)
            .map(|&(l, _)| (l, (l + step).min(1.0)))
            .collect();
        if cells.is_empty() {
            break;
        }
        step /= 10.0;
        first = 1;
    }

    let (mut l, mut u) = points
        .iter()
        .copied()
        .min_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)).then(a.0.total_cmp(&b.0)))
        .unwrap_or((0.0, 1.0));
    // both bisections only move to endpoints that tested feasible
    l = highest_lower(tpm, l, u, POLISH_TOL, &mut trace);
    u = lowest_upper(tpm, l, u, POLISH_TOL, &mut trace);
    IntervalSearchResult { interval: Interval { rho_l: l, rho_u: u }, width: u - l, trace }
}

/// Synthetic TPM for testing: each row mixes an interior product vector
/// with a pair of antipodal vertices of `t̂_m`,
///
/// ```text
/// γ_i = (1 − knob)·f(p_i) + knob·(w_i t̂_v + (1 − w_i) t̂_v̄)
/// ```
///
/// where `v̄` flips every edge of `v`. `knob = 0` gives spatially
/// independent losses, `knob = 1` the most correlated rows the hull allows.
pub fn synthesize_correlated_tpm(m: usize, iv: &Interval, knob: f64, seed: u64) -> Result<Tpm> {
    if m > MODE_CAP {
        return Err(Error::ModeCapExceeded { edges: m, cap: MODE_CAP });
    }
    if !(0.0..=1.0).contains(&knob) {
        return Err(Error::ParameterOutOfRange(format!("correlation knob {knob} outside [0, 1]")));
    }
    let n = 1usize << m;
    let vertices = vertex_probabilities(m, iv)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| {
            let p: Vec<f64> = (0..m).map(|_| iv.rho_l + iv.width() * rng.gen_range(0.05..0.95)).collect();
            let interior = product_vector(&p)?;
            let v = rng.gen_range(0..n);
            let w: f64 = rng.gen_range(0.2..0.8);
            let (a, b) = (vertices[v].entries(), vertices[(n - 1) ^ v].entries());
            let row: Vec<f64> = (0..n)
                .map(|j| (1.0 - knob) * interior.entries()[j] + knob * (w * a[j] + (1.0 - w) * b[j]))
                .collect();
            ProbVector::with_tolerance(row, 1e-10)
        })
        .collect::<Result<Vec<_>>>()?;
    Tpm::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{tpm_membership, Membership};
    use crate::mjls::sample_tpm_in_hull;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn full_interval_returns_the_tpm() {
        let tpm = sample_tpm_in_hull(2, &Interval::new(0.2, 0.7).unwrap(), 3).unwrap();
        let fit = fit_feasible(&tpm, &Interval::full()).unwrap();
        assert!(fit.feasible);
        assert_abs_diff_eq!(fit.lambda, tpm.to_matrix(), epsilon = 1e-14);
    }

    #[test]
    fn product_rows_fit_with_positive_weights() {
        let tpm = Tpm::repeated(product_vector(&[0.4, 0.6, 0.5]).unwrap());
        let fit = fit_feasible(&tpm, &Interval::new(0.3, 0.8).unwrap()).unwrap();
        assert!(fit.feasible);
        assert!(fit.min_coordinate > 0.0);
        assert!(fit.residual < 1e-12);
        for r in 0..8 {
            assert_abs_diff_eq!(fit.lambda.row(r).sum(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_does_not_fit_a_narrow_interval() {
        let fit = fit_feasible(&Tpm::identity(1), &Interval::new(0.1, 0.9).unwrap()).unwrap();
        assert!(!fit.feasible);
        // (ρ_u, −ρ_l) / (ρ_u − ρ_l) for the first row
        assert_abs_diff_eq!(fit.lambda[(0, 0)], 0.9 / 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.lambda[(0, 1)], -0.1 / 0.8, epsilon = 1e-14);
        assert!(matches!(fit_feasible(&Tpm::identity(1), &Interval::new(0.5, 0.5).unwrap()), Err(Error::DegenerateInterval(_))));
    }

    #[test]
    fn lp_reproduces_the_closed_form() {
        let iv = Interval::new(0.25, 0.8).unwrap();
        for seed in 0..5 {
            let tpm = synthesize_correlated_tpm(2, &iv, 0.5, seed).unwrap();
            let fit = fit_feasible(&tpm, &iv).unwrap();
            let lp = fit_by_lp(&tpm, &iv).unwrap().expect("feasible LP");
            assert_abs_diff_eq!(lp, fit.lambda, epsilon = 1e-8);
        }
        assert!(fit_by_lp(&Tpm::identity(1), &Interval::new(0.1, 0.9).unwrap()).unwrap().is_none());
    }

    #[test]
    fn identity_needs_the_whole_unit_interval() {
        let res = minimal_interval(&Tpm::identity(1), DEFAULT_WIDTH_TOL);
        assert_abs_diff_eq!(res.interval.rho_l, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(res.interval.rho_u, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn repeated_product_vector_shrinks_to_a_point() {
        let p = 0.37;
        let tpm = Tpm::repeated(product_vector(&[p, p]).unwrap());
        for delta in [0.1, 0.01, 0.001] {
            assert!(fit_feasible(&tpm, &Interval::new(p - delta, p + delta).unwrap()).unwrap().feasible);
        }
        let res = minimal_interval(&tpm, DEFAULT_WIDTH_TOL);
        assert!(res.width <= DEFAULT_WIDTH_TOL, "{:?}", res.interval);
        assert!(res.interval.rho_l <= p + 1e-6 && p - 1e-6 <= res.interval.rho_u);
    }

    #[test]
    fn sampled_tpm_width_is_bounded_by_its_generator() {
        let iv = Interval::new(0.2, 0.6).unwrap();
        let tpm = sample_tpm_in_hull(2, &iv, 11).unwrap();
        let res = minimal_interval(&tpm, DEFAULT_WIDTH_TOL);
        assert!(res.width <= iv.width() + DEFAULT_WIDTH_TOL);
        assert!(fit_feasible(&tpm, &res.interval).unwrap().feasible);
        let best_traced = res.trace.iter().filter(|t| t.feasible).map(|t| t.rho_u - t.rho_l).fold(f64::INFINITY, f64::min);
        assert!(best_traced >= res.width - DEFAULT_WIDTH_TOL);
    }

    #[test]
    fn synthesized_examples() {
        let iv = Interval::new(0.3, 0.85).unwrap();
        let tpm = synthesize_correlated_tpm(2, &iv, 0.0, 1).unwrap();
        assert_eq!(tpm_membership(&tpm, 2, &iv, DEFAULT_MEMBERSHIP_TOL).unwrap().aggregate, Membership::Interior);

        let tpm = synthesize_correlated_tpm(1, &Interval::full(), 1.0, 2).unwrap();
        for row in tpm.rows() {
            // a mixture of (1, 0) and (0, 1) with weight in [0.2, 0.8]
            let e = row.entries();
            assert!(e[0] >= 0.2 - 1e-12 && e[0] <= 0.8 + 1e-12);
            assert_abs_diff_eq!(e[0] + e[1], 1.0, epsilon = 1e-12);
        }
        assert!(synthesize_correlated_tpm(1, &iv, 1.5, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn synthesized_tpms_fit_their_interval(m in 1usize..=3, knob in 0.0f64..=1.0, seed: u64,
                                               a in 0.0f64..0.45, w in 0.1f64..0.55) {
            let iv = Interval::new(a, a + w).unwrap();
            let tpm = synthesize_correlated_tpm(m, &iv, knob, seed).unwrap();
            prop_assert!(fit_feasible(&tpm, &iv).unwrap().feasible);
        }

        #[test]
        fn enlarging_keeps_feasibility(seed: u64, a in 0.1f64..0.4, w in 0.1f64..0.4,
                                       dl in 0.0f64..0.1, du in 0.0f64..0.1) {
            let iv = Interval::new(a, a + w).unwrap();
            let tpm = sample_tpm_in_hull(2, &iv, seed).unwrap();
            let bigger = Interval::new(a - dl, (a + w + du).min(1.0)).unwrap();
            prop_assert!(fit_feasible(&tpm, &bigger).unwrap().feasible);
        }
    }
}
