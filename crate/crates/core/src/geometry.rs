//! Probability vectors of independent links and the simplex they span.
//!
//! For per-edge delivery probabilities `p`, the distribution of the mode
//! index is the Kronecker chain
//!
//! ```text
//! f(p) = [1 − p₁; p₁] ⊗ [1 − p₂; p₂] ⊗ … ⊗ [1 − p_m; p_m]
//! ```
//!
//! Restricting every `p_e` to `{ρ_l, ρ_u}` yields `2^m` vertex vectors. Their
//! matrix `M` is the m-fold Kronecker power of
//!
//! ```text
//! M̃ = [1 − ρ_l  1 − ρ_u]
//!     [  ρ_l      ρ_u  ]
//! ```
//!
//! which is invertible whenever `ρ_l < ρ_u`. Barycentric coordinates with
//! respect to the vertices are therefore unique and obtained by applying
//! `M̃⁻¹` along every axis, which costs `O(m·2^m)`.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MODE_CAP;

/// Default base tolerance for membership decisions.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

const SUM_TOL: f64 = 1e-12;

/// Probability interval `[ρ_l, ρ_u] ⊆ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub rho_l: f64,
    pub rho_u: f64,
}

impl Interval {
    pub fn new(rho_l: f64, rho_u: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho_l) || !(0.0..=1.0).contains(&rho_u) || rho_l > rho_u {
            return Err(Error::InvalidInterval { rho_l, rho_u });
        }
        Ok(Self { rho_l, rho_u })
    }

    pub fn full() -> Self {
        Self { rho_l: 0.0, rho_u: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.rho_u - self.rho_l
    }

    pub fn is_degenerate(&self) -> bool {
        self.rho_l == self.rho_u
    }

    pub fn contains(&self, other: &Interval) -> bool {
        self.rho_l <= other.rho_l && other.rho_u <= self.rho_u
    }

    /// The 2×2 generator `M̃` of the vertex matrix.
    pub fn generator(&self) -> Matrix2<f64> {
        Matrix2::new(1.0 - self.rho_l, 1.0 - self.rho_u, self.rho_l, self.rho_u)
    }

    fn inverse_generator(&self) -> Result<Matrix2<f64>> {
        if self.is_degenerate() {
            return Err(Error::DegenerateInterval(self.rho_l));
        }
        let d = self.width();
        Ok(Matrix2::new(self.rho_u / d, (self.rho_u - 1.0) / d, -self.rho_l / d, (1.0 - self.rho_l) / d))
    }

    /// 2-norm condition number of `M̃`.
    pub fn generator_condition(&self) -> f64 {
        let sv = self.generator().singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Base tolerance scaled by `cond(M̃)^m`.
    pub fn membership_tolerance(&self, base: f64, m: usize) -> f64 {
        let cond = self.generator_condition();
        let tol = base * cond.powi(m as i32);
        log::trace!("cond(M~) = {cond:.3e}, m = {m}, effective tolerance {tol:.3e}");
        tol
    }
}

/// Element of the unit simplex `𝒮_{2^m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    m: usize,
    entries: Vec<f64>,
}

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(entries, SUM_TOL)
    }

    /// Accepts row sums within `tol` of one and entries above `-tol`.
    pub fn with_tolerance(entries: Vec<f64>, tol: f64) -> Result<Self> {
        let m = log2_exact(entries.len())
            .ok_or_else(|| Error::DimensionMismatch(format!("length {} is not a power of two", entries.len())))?;
        if let Some(bad) = entries.iter().find(|v| !v.is_finite() || **v < -tol) {
            return Err(Error::NotStochastic(format!("entry {bad} is negative or not finite")));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::NotStochastic(format!("entries sum to {sum}")));
        }
        Ok(Self { m, entries })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }
}

pub(crate) fn log2_exact(len: usize) -> Option<usize> {
    (len.is_power_of_two()).then(|| len.trailing_zeros() as usize)
}

fn check_cap(m: usize) -> Result<()> {
    if m > MODE_CAP {
        return Err(Error::ModeCapExceeded { edges: m, cap: MODE_CAP });
    }
    Ok(())
}

/// Applies `K ⊗ K ⊗ … ⊗ K` (one factor per bit) to `v` in place.
fn apply_kron_power(k: &Matrix2<f64>, v: &mut [f64]) {
    let n = v.len();
    let mut stride = n / 2;
    while stride > 0 {
        for block in (0..n).step_by(2 * stride) {
            for i0 in block..block + stride {
                let i1 = i0 + stride;
                let (a, b) = (v[i0], v[i1]);
                v[i0] = k[(0, 0)] * a + k[(0, 1)] * b;
                v[i1] = k[(1, 0)] * a + k[(1, 1)] * b;
            }
        }
        stride /= 2;
    }
}

/// Joint mode distribution of independent links with delivery
/// probabilities `p` (entry `k` belongs to the edge with `ν = k + 1`).
pub fn product_vector(p: &[f64]) -> Result<ProbVector> {
    check_cap(p.len())?;
    if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::ProbabilityOutOfRange(bad));
    }
    let mut entries = vec![1.0];
    for &pe in p {
        entries = entries.iter().flat_map(|&w| [w * (1.0 - pe), w * pe]).collect();
    }
    Ok(ProbVector { m: p.len(), entries })
}

/// The vertex set `t̂_m` in the order `p⁽ʳ⁾ = ρ_l·1 + (ρ_u − ρ_l)·bin(r − 1)`.
pub fn vertex_probabilities(m: usize, iv: &Interval) -> Result<Vec<ProbVector>> {
    check_cap(m)?;
    (0..1usize << m)
        .map(|r| {
            let p: Vec<f64> = (0..m)
                .map(|k| if (r >> (m - 1 - k)) & 1 == 1 { iv.rho_u } else { iv.rho_l })
                .collect();
            product_vector(&p)
        })
        .collect()
}

/// Dense `2^m × 2^m` matrix whose columns are `t̂_m`.
pub fn vertex_matrix(m: usize, iv: &Interval) -> Result<DMatrix<f64>> {
    check_cap(m)?;
    let g = iv.generator();
    let g = DMatrix::from_row_slice(2, 2, &[g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]]);
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for _ in 0..m {
        out = out.kronecker(&g);
    }
    Ok(out)
}

/// `det M = (ρ_u − ρ_l)^(m·2^(m−1))`.
pub fn vertex_matrix_determinant(m: usize, iv: &Interval) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let exponent = (m as f64) * 2f64.powi(m as i32 - 1);
    iv.width().powf(exponent)
}

/// Coordinates of a point with respect to the vertices `t̂_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Barycentric {
    pub lambda: Vec<f64>,
}

impl Barycentric {
    pub fn min(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// Solves `M λ = t` through the factored inverse `(M̃⁻¹)^{⊗m}`.
///
/// `t` need not be stochastic; only its length must be `2^m`.
pub fn barycentric_coordinates(t: &[f64], iv: &Interval) -> Result<Barycentric> {
    let m = log2_exact(t.len())
        .ok_or_else(|| Error::DimensionMismatch(format!("length {} is not a power of two", t.len())))?;
    check_cap(m)?;
    let inv = iv.inverse_generator()?;
    let mut lambda = t.to_vec();
    apply_kron_power(&inv, &mut lambda);
    Ok(Barycentric { lambda })
}

/// Applies `M` to a coordinate vector (the forward map of
/// [`barycentric_coordinates`]).
pub fn apply_vertex_matrix(lambda: &[f64], iv: &Interval) -> Result<Vec<f64>> {
    let m = log2_exact(lambda.len())
        .ok_or_else(|| Error::DimensionMismatch(format!("length {} is not a power of two", lambda.len())))?;
    check_cap(m)?;
    let mut out = lambda.to_vec();
    apply_kron_power(&iv.generator(), &mut out);
    Ok(out)
}

/// Three-valued position of a point relative to `conv t̂_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

impl Membership {
    pub fn from_min_coordinate(min: f64, tol: f64) -> Self {
        if min > tol {
            Membership::Interior
        } else if min < -tol {
            Membership::Outside
        } else {
            Membership::Boundary
        }
    }

    pub fn is_member(self) -> bool {
        self != Membership::Outside
    }
}

/// Classifies `t` against `conv t̂_m`; `base_tol` is scaled by
/// `cond(M̃)^m` before use.
pub fn simplex_membership(t: &[f64], iv: &Interval, base_tol: f64) -> Result<(Membership, Barycentric)> {
    let bary = barycentric_coordinates(t, iv)?;
    let m = log2_exact(t.len()).unwrap_or(0);
    let tol = iv.membership_tolerance(base_tol, m);
    Ok((Membership::from_min_coordinate(bary.min(), tol), bary))
}

/// Row-stochastic `2^m × 2^m` transition matrix over loss modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tpm {
    m: usize,
    rows: Vec<ProbVector>,
}

impl Tpm {
    pub fn new(rows: Vec<ProbVector>) -> Result<Self> {
        let m = log2_exact(rows.len())
            .ok_or_else(|| Error::DimensionMismatch(format!("{} rows is not a power of two", rows.len())))?;
        if let Some(r) = rows.iter().find(|r| r.m() != m) {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} in a TPM with {} rows",
                r.entries().len(),
                rows.len()
            )));
        }
        Ok(Self { m, rows })
    }

    /// Builds from raw rows, accepting row-sum deviations up to `tol`.
    pub fn from_rows(rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                ProbVector::with_tolerance(r, tol).map_err(|e| match e {
                    Error::NotStochastic(msg) => Error::NotStochastic(format!("row {}: {msg}", i + 1)),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// Every row equal to `row`.
    pub fn repeated(row: ProbVector) -> Self {
        let m = row.m();
        Self { m, rows: vec![row; 1 << m] }
    }

    pub fn identity(m: usize) -> Self {
        let n = 1usize << m;
        let rows = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                ProbVector { m, entries: e }
            })
            .collect();
        Self { m, rows }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of modes `2^m`.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[ProbVector] {
        &self.rows
    }

    /// Transition probability from 0-based mode `i` to `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].entries()[j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }
}

/// Row-wise membership of a TPM in `conv Γ̂_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpmMembership {
    pub rows: Vec<Membership>,
    pub min_coordinates: Vec<f64>,
    pub aggregate: Membership,
}

/// `conv Γ̂_m` is the product of the row hulls, so the TPM is classified
/// row by row: interior iff every row is interior, outside iff any row is.
pub fn tpm_membership(tpm: &Tpm, m: usize, iv: &Interval, base_tol: f64) -> Result<TpmMembership> {
    if tpm.m() != m {
        return Err(Error::DimensionMismatch(format!("TPM has {} modes, expected {}", tpm.size(), 1usize << m)));
    }
    let mut rows = Vec::with_capacity(tpm.size());
    let mut min_coordinates = Vec::with_capacity(tpm.size());
    for r in tpm.rows() {
        let (class, bary) = simplex_membership(r.entries(), iv, base_tol)?;
        rows.push(class);
        min_coordinates.push(bary.min());
    }
    let aggregate = if rows.contains(&Membership::Outside) {
        Membership::Outside
    } else if rows.iter().all(|&c| c == Membership::Interior) {
        Membership::Interior
    } else {
        Membership::Boundary
    };
    Ok(TpmMembership { rows, min_coordinates, aggregate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn iv(l: f64, u: f64) -> Interval {
        Interval::new(l, u).unwrap()
    }

    #[test]
    fn product_vector_examples() {
        let (p12, p23) = (0.2, 0.7);
        let f = product_vector(&[p12, p23]).unwrap();
        let want = [(1.0 - p12) * (1.0 - p23), (1.0 - p12) * p23, p12 * (1.0 - p23), p12 * p23];
        for (a, b) in f.entries().iter().zip(want) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(product_vector(&[0.5, 0.5]).unwrap().entries(), &[0.25; 4]);
        assert_eq!(product_vector(&[1.0, 1.0, 1.0]).unwrap().entries(), &[0., 0., 0., 0., 0., 0., 0., 1.]);
        assert!(matches!(product_vector(&[1.2]), Err(Error::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(0.6, 0.4).is_err());
        assert!(Interval::new(-0.1, 0.4).is_err());
        assert!(Interval::new(0.1, 1.1).is_err());
        assert!(iv(0.3, 0.3).is_degenerate());
    }

    #[test]
    fn vertex_probabilities_examples() {
        let v = vertex_probabilities(1, &iv(0.0, 1.0)).unwrap();
        assert_eq!(v[0].entries(), &[1.0, 0.0]);
        assert_eq!(v[1].entries(), &[0.0, 1.0]);

        let v = vertex_probabilities(1, &iv(0.3, 0.85)).unwrap();
        assert_abs_diff_eq!(v[0].entries()[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].entries()[0], 0.15, epsilon = 1e-15);

        let v = vertex_probabilities(2, &iv(0.0, 1.0)).unwrap();
        for (r, t) in v.iter().enumerate() {
            let mut e = vec![0.0; 4];
            e[r] = 1.0;
            assert_eq!(t.entries(), e.as_slice());
        }

        let v = vertex_probabilities(2, &iv(0.4, 0.4)).unwrap();
        assert!(v.windows(2).all(|w| w[0] == w[1]));
        assert!(matches!(vertex_probabilities(17, &iv(0.1, 0.2)), Err(Error::ModeCapExceeded { .. })));
    }

    #[test]
    fn vertex_matrix_examples() {
        let m1 = vertex_matrix(1, &iv(0.3, 0.85)).unwrap();
        assert_abs_diff_eq!(m1, DMatrix::from_row_slice(2, 2, &[0.7, 0.15, 0.3, 0.85]), epsilon = 1e-15);
        assert_eq!(vertex_matrix(1, &iv(0.0, 1.0)).unwrap(), DMatrix::identity(2, 2));

        // columns coincide with t̂_m
        let i = iv(0.3, 0.85);
        let m3 = vertex_matrix(3, &i).unwrap();
        for (r, t) in vertex_probabilities(3, &i).unwrap().iter().enumerate() {
            for (k, v) in t.entries().iter().enumerate() {
                assert_abs_diff_eq!(m3[(k, r)], *v, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(vertex_matrix_determinant(2, &i), 0.09150625, epsilon = 1e-14);
    }

    #[test]
    fn barycentric_examples() {
        let b = barycentric_coordinates(&[0.4, 0.6], &iv(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(b.lambda[0], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(b.lambda[1], 0.6, epsilon = 1e-15);

        let b = barycentric_coordinates(&[1.0, 0.0], &iv(0.25, 0.75)).unwrap();
        assert_abs_diff_eq!(b.lambda[0], 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(b.lambda[1], -0.5, epsilon = 1e-14);

        assert!(matches!(barycentric_coordinates(&[0.5, 0.5], &iv(0.5, 0.5)), Err(Error::DegenerateInterval(_))));
        assert!(barycentric_coordinates(&[0.5, 0.25, 0.25], &iv(0.1, 0.5)).is_err());
    }

    #[test]
    fn membership_examples() {
        let i = iv(0.3, 0.85);
        let t = product_vector(&[0.5, 0.6, 0.7]).unwrap();
        assert_eq!(simplex_membership(t.entries(), &i, DEFAULT_MEMBERSHIP_TOL).unwrap().0, Membership::Interior);

        let vertex = product_vector(&[0.3, 0.85, 0.3]).unwrap();
        let (class, bary) = simplex_membership(vertex.entries(), &i, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert_eq!(class, Membership::Boundary);
        assert_abs_diff_eq!(bary.lambda[0b010], 1.0, epsilon = 1e-12);

        let (class, _) = simplex_membership(&[1.0, 0.0], &iv(0.25, 0.75), DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert_eq!(class, Membership::Outside);
    }

    #[test]
    fn tpm_membership_examples() {
        let i = iv(0.2, 0.9);
        let tpm = Tpm::repeated(product_vector(&[0.5, 0.4]).unwrap());
        let res = tpm_membership(&tpm, 2, &i, DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert_eq!(res.aggregate, Membership::Interior);

        let res = tpm_membership(&Tpm::identity(2), 2, &Interval::full(), DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert!(res.aggregate.is_member());

        let res = tpm_membership(&Tpm::identity(1), 1, &iv(0.1, 1.0), DEFAULT_MEMBERSHIP_TOL).unwrap();
        assert_eq!(res.rows[0], Membership::Outside);
        assert_eq!(res.aggregate, Membership::Outside);

        assert!(tpm_membership(&Tpm::identity(1), 2, &i, DEFAULT_MEMBERSHIP_TOL).is_err());
    }

    #[test]
    fn tpm_rejects_bad_rows() {
        assert!(Tpm::from_rows(vec![vec![0.5, 0.6], vec![0.0, 1.0]], 1e-6).is_err());
        assert!(Tpm::from_rows(vec![vec![0.5, 0.5]], 1e-6).is_err());
        assert!(Tpm::from_rows(vec![vec![1.0, 0.0], vec![1.1, -0.1]], 1e-6).is_err());
        assert!(Tpm::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5 + 1e-9]], 1e-6).is_ok());
    }

    /// Distribution of the mode index by enumerating every delivery pattern.
    fn brute_mode_distribution(p: &[f64]) -> Vec<f64> {
        let m = p.len();
        let mut dist = vec![0.0; 1 << m];
        for pattern in 0..1usize << m {
            let theta: Vec<bool> = (0..m).map(|k| (pattern >> k) & 1 == 1).collect();
            let prob: f64 = theta.iter().zip(p).map(|(&t, &pe)| if t { pe } else { 1.0 - pe }).product();
            dist[crate::graph::mode_index(&theta) - 1] += prob;
        }
        dist
    }

    fn interval_strategy() -> impl Strategy<Value = Interval> {
        (0.0..0.9f64, 0.05..1.0f64).prop_map(|(l, w)| {
            let u = (l + w).min(1.0);
            Interval::new(l, u).unwrap()
        })
    }

    proptest! {
        #[test]
        fn product_vector_matches_enumeration(p in prop::collection::vec(0.0..=1.0f64, 1..=4)) {
            let f = product_vector(&p).unwrap();
            for (a, b) in f.entries().iter().zip(brute_mode_distribution(&p)) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }

        #[test]
        fn coordinates_of_stochastic_vectors_sum_to_one(
            i in interval_strategy(),
            raw in prop::collection::vec(0.0..1.0f64, 8),
        ) {
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let t: Vec<f64> = raw.iter().map(|v| (v + 1e-9 / 8.0) / s).collect();
            let b = barycentric_coordinates(&t, &i).unwrap();
            prop_assert!((b.sum() - 1.0).abs() < 1e-10 * (1.0 + b.lambda.iter().map(|v| v.abs()).sum::<f64>()));
            let back = apply_vertex_matrix(&b.lambda, &i).unwrap();
            for (x, y) in back.iter().zip(&t) {
                prop_assert!((x - y).abs() < 1e-10 * (1.0 + b.lambda.iter().map(|v| v.abs()).sum::<f64>()));
            }
        }

        #[test]
        fn factored_solve_agrees_with_dense(i in interval_strategy(), raw in prop::collection::vec(-1.0..1.0f64, 4)) {
            let dense = vertex_matrix(2, &i).unwrap();
            let b = barycentric_coordinates(&raw, &i).unwrap();
            let back = &dense * nalgebra::DVector::from_vec(b.lambda.clone());
            for (x, y) in back.iter().zip(&raw) {
                prop_assert!((x - y).abs() < 1e-9 * i.generator_condition().powi(2));
            }
        }

        #[test]
        fn product_map_is_injective(p in prop::collection::vec(0.0..=1.0f64, 3), q in prop::collection::vec(0.0..=1.0f64, 3)) {
            prop_assume!(p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6));
            let (fp, fq) = (product_vector(&p).unwrap(), product_vector(&q).unwrap());
            let dist = fp.entries().iter().zip(fq.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(dist > 0.0);
        }

        #[test]
        fn membership_is_monotone_in_the_interval(
            i in interval_strategy(),
            grow_l in 0.0..1.0f64,
            grow_u in 0.0..1.0f64,
            raw in prop::collection::vec(0.0..1.0f64, 3),
        ) {
            prop_assume!(!i.is_degenerate());
            // a random hull member of [ρ_l, ρ_u]
            let verts = vertex_probabilities(2, &i).unwrap();
            let w = [raw[0], raw[1] * (1.0 - raw[0]), raw[2] * (1.0 - raw[0]) * (1.0 - raw[1])];
            let w3 = 1.0 - w.iter().sum::<f64>();
            let weights = [w[0], w[1], w[2], w3];
            let t: Vec<f64> = (0..4).map(|k| verts.iter().zip(weights).map(|(v, a)| a * v.entries()[k]).sum()).collect();
            let outer = Interval::new(i.rho_l * (1.0 - grow_l), i.rho_u + (1.0 - i.rho_u) * grow_u).unwrap();
            let (inner_class, _) = simplex_membership(&t, &i, DEFAULT_MEMBERSHIP_TOL).unwrap();
            let (outer_class, _) = simplex_membership(&t, &outer, DEFAULT_MEMBERSHIP_TOL).unwrap();
            prop_assert!(inner_class.is_member());
            prop_assert!(outer_class.is_member());
        }
    }

    #[test]
    fn extreme_point_identity_at_desk_scale() {
        let i = iv(0.2, 0.7);
        for m in 1..=3 {
            let verts = vertex_probabilities(m, &i).unwrap();
            for (r, v) in verts.iter().enumerate() {
                let b = barycentric_coordinates(v.entries(), &i).unwrap();
                for (k, l) in b.lambda.iter().enumerate() {
                    let want = if k == r { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(*l, want, epsilon = 1e-12);
                }
            }
            let p: Vec<f64> = (0..m).map(|k| 0.3 + 0.1 * k as f64).collect();
            let b = barycentric_coordinates(product_vector(&p).unwrap().entries(), &i).unwrap();
            assert!(b.min() > 0.0);
        }
    }
}
