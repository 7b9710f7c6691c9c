//! Undirected communication graphs, their Laplacians, and the packet-loss
//! modes they induce.
//!
//! Edges carry an enumeration `ν: edges → {1..m}`. A loss pattern `θ`
//! (one bit per edge, 1 = packet delivered) is encoded into the mode index
//!
//! ```text
//! σ = 1 + Σ_e θ(e) · 2^(m − ν(e))
//! ```
//!
//! so the edge with `ν = 1` is the most significant bit. Mode `1` is the
//! all-lost pattern and mode `2^m` is the nominal graph.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest edge count for which modes are enumerated (65536 modes).
pub const MODE_CAP: usize = 16;

/// Undirected simple graph on vertices `1..=n` with an edge enumeration.
///
/// `edges()[k]` is the edge with `ν = k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Builds a graph with the default enumeration: edges sorted by
    /// `(min, max)` vertex.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut normalized = Self::validate(n, edges)?;
        normalized.sort_unstable();
        Ok(Self { n, edges: normalized })
    }

    /// Builds a graph whose enumeration follows the given order: the k-th
    /// listed edge gets `ν = k + 1`.
    pub fn with_order(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let normalized = Self::validate(n, edges)?;
        Ok(Self { n, edges: normalized })
    }

    fn validate(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 vertices, got {n}")));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            if i == 0 || j == 0 || i > n || j > n {
                return Err(Error::InvalidGraph(format!("edge {{{i},{j}}} outside vertices 1..={n}")));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge {{{},{}}}", e.0, e.1)));
            }
            out.push(e);
        }
        Ok(out)
    }

    /// Path `1 - 2 - … - n`.
    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        Self::new(n, &edges)
    }

    /// Cycle `1 - 2 - … - n - 1`.
    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGraph(format!("a cycle needs at least 3 vertices, got {n}")));
        }
        let mut edges: Vec<_> = (1..n).map(|i| (i, i + 1)).collect();
        edges.push((1, n));
        Self::new(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                edges.push((i, j));
            }
        }
        Self::new(n, &edges)
    }

    pub fn star(n: usize) -> Result<Self> {
        let edges: Vec<_> = (2..=n).map(|j| (1, j)).collect();
        Self::new(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of edges `m`.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Edges in enumeration order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `ν(e)` for an edge given in either orientation.
    pub fn nu(&self, i: usize, j: usize) -> Option<usize> {
        let e = (i.min(j), i.max(j));
        self.edges.iter().position(|&f| f == e).map(|k| k + 1)
    }

    /// Neighbour set of vertex `i` (1-based).
    pub fn neighbours(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Integer Laplacian: degree on the diagonal, `-1` on edges.
    pub fn laplacian(&self) -> DMatrix<i64> {
        let mut l = DMatrix::<i64>::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            let (a, b) = (i - 1, j - 1);
            l[(a, b)] -= 1;
            l[(b, a)] -= 1;
            l[(a, a)] += 1;
            l[(b, b)] += 1;
        }
        l
    }

    pub fn laplacian_f64(&self) -> DMatrix<f64> {
        self.laplacian().map(|v| v as f64)
    }

    pub fn spectrum(&self) -> LaplacianSpectrum {
        LaplacianSpectrum::of(&self.laplacian_f64())
    }

    /// Encodes a per-edge delivery pattern into the 1-based mode index.
    ///
    /// Every edge must appear exactly once; orientation is ignored.
    pub fn sigma_index(&self, theta: &[((usize, usize), bool)]) -> Result<usize> {
        let m = self.m();
        let mut bits = vec![None; m];
        for &((i, j), delivered) in theta {
            let nu = self.nu(i, j).ok_or_else(|| {
                Error::InvalidAssignment(format!("edge {{{i},{j}}} is not in the graph"))
            })?;
            if bits[nu - 1].replace(delivered).is_some() {
                return Err(Error::InvalidAssignment(format!("edge {{{i},{j}}} assigned twice")));
            }
        }
        let mut bits_ordered = Vec::with_capacity(m);
        for (k, b) in bits.into_iter().enumerate() {
            let (i, j) = self.edges[k];
            bits_ordered.push(b.ok_or_else(|| {
                Error::InvalidAssignment(format!("edge {{{i},{j}}} has no assignment"))
            })?);
        }
        Ok(mode_index(&bits_ordered))
    }

    /// All `2^m` loss-induced subgraphs; position `σ − 1` holds `G_σ`.
    pub fn enumerate_loss_modes(&self) -> Result<Vec<Graph>> {
        self.check_mode_cap()?;
        let m = self.m();
        Ok((0..1usize << m)
            .map(|idx| Graph {
                n: self.n,
                edges: self
                    .edges
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mode_has_edge(m, idx, *k))
                    .map(|(_, &e)| e)
                    .collect(),
            })
            .collect())
    }

    /// Laplacians of all loss modes, in mode order.
    pub fn mode_laplacians(&self) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.enumerate_loss_modes()?.iter().map(Graph::laplacian_f64).collect())
    }

    pub(crate) fn check_mode_cap(&self) -> Result<()> {
        if self.m() > MODE_CAP {
            return Err(Error::ModeCapExceeded { edges: self.m(), cap: MODE_CAP });
        }
        Ok(())
    }
}

/// 1-based mode index of a delivery pattern listed in `ν` order.
pub fn mode_index(bits: &[bool]) -> usize {
    let m = bits.len();
    1 + bits
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(k, _)| 1usize << (m - 1 - k))
        .sum::<usize>()
}

/// Whether the edge at enumeration position `k` (0-based, `ν = k + 1`)
/// delivers in the mode at 0-based position `idx`.
pub fn mode_has_edge(m: usize, idx: usize, k: usize) -> bool {
    (idx >> (m - 1 - k)) & 1 == 1
}

/// Sorted Laplacian eigenvalues with the extreme non-trivial ones pulled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Algebraic connectivity: the second smallest eigenvalue, snapped to
    /// zero below the threshold.
    pub lambda2: f64,
    pub lambda_n: f64,
}

impl LaplacianSpectrum {
    pub fn of(laplacian: &DMatrix<f64>) -> Self {
        let mut eigenvalues: Vec<f64> =
            SymmetricEigen::new(laplacian.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let lambda_n = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        let threshold = Self::zero_threshold_for(lambda_n);
        let lambda2 = match eigenvalues.get(1) {
            Some(&v) if v > threshold => v,
            _ => 0.0,
        };
        Self { eigenvalues, lambda2, lambda_n }
    }

    fn zero_threshold_for(lambda_n: f64) -> f64 {
        1e-9 * lambda_n.max(1.0)
    }

    /// Eigenvalues with `|λ|` at or below this count as zero.
    pub fn zero_threshold(&self) -> f64 {
        Self::zero_threshold_for(self.lambda_n)
    }

    pub fn is_connected(&self) -> bool {
        self.lambda2 > 0.0
    }

    /// `(λ2, λN)`, or `DisconnectedGraph` when `λ2` vanishes.
    pub fn require_connected(&self) -> Result<(f64, f64)> {
        if self.is_connected() {
            Ok((self.lambda2, self.lambda_n))
        } else {
            Err(Error::DisconnectedGraph { lambda2: self.eigenvalues.get(1).copied().unwrap_or(0.0) })
        }
    }

    /// Smallest eigenvalue above the zero threshold, if any.
    pub fn smallest_nonzero(&self) -> Option<f64> {
        let t = self.zero_threshold();
        self.eigenvalues.iter().copied().find(|&v| v > t)
    }
}
