//! File formats: the problem file, TPM and trajectory CSV, and the
//! certificate document.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cert::Certificate;
use crate::error::{Error, Result};
use crate::geometry::{Interval, Tpm};
use crate::graph::Graph;
use crate::mjls::{AgentDynamics, InitialMode, TrajectoryStats};

/// Schema version written to and required from every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Row-sum tolerance for TPMs read from CSV.
pub const CSV_ROW_SUM_TOL: f64 = 1e-6;

/// Serde adapter for `DMatrix<f64>` as `{rows, cols, data}` with `data` in
/// row-major order.
pub mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Repr {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = (0..m.nrows()).flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)])).collect();
        Repr { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = Repr::deserialize(d)?;
        if r.rows * r.cols != r.data.len() {
            return Err(D::Error::custom(format!("{}x{} matrix with {} entries", r.rows, r.cols, r.data.len())));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }
}

/// How the analysis treats the agreement subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisKind {
    /// Stability of the full state.
    #[default]
    General,
    /// Stability of the disagreement `Π x`; the agreement condition is not
    /// imposed.
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    /// 1-based vertex pairs.
    pub edges: Vec<(usize, usize)>,
    /// Enumerate edges in the listed order instead of sorted order.
    #[serde(default)]
    pub keep_order: bool,
}

impl GraphSpec {
    pub fn build(&self) -> Result<Graph> {
        if self.keep_order {
            Graph::with_order(self.n, &self.edges)
        } else {
            Graph::new(self.n, &self.edges)
        }
    }
}

/// Agent dynamics, either as matrices or as the first-order consensus
/// shorthand `Ad = 1`, `Ac = −κ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DynamicsSpec {
    Matrices(DynamicsJson),
    Consensus(ConsensusGain),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusGain {
    pub kappa: f64,
}

/// `Ad` and `Ac`, row-major, `n_x × n_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsJson {
    pub nx: usize,
    pub ad: Vec<f64>,
    pub ac: Vec<f64>,
}

impl DynamicsJson {
    pub fn from_dynamics(d: &AgentDynamics) -> Self {
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Self { nx: d.nx(), ad: row_major(&d.ad), ac: row_major(&d.ac) }
    }

    pub fn build(&self) -> Result<AgentDynamics> {
        let n = self.nx;
        if n == 0 || self.ad.len() != n * n || self.ac.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "nx = {n} needs {} entries per matrix, got {} and {}",
                n * n,
                self.ad.len(),
                self.ac.len()
            )));
        }
        AgentDynamics::new(DMatrix::from_row_slice(n, n, &self.ad), DMatrix::from_row_slice(n, n, &self.ac))
    }
}

impl DynamicsSpec {
    pub fn build(&self) -> Result<AgentDynamics> {
        match self {
            DynamicsSpec::Matrices(m) => m.build(),
            DynamicsSpec::Consensus(c) if c.kappa.is_finite() => Ok(AgentDynamics::consensus(c.kappa)),
            DynamicsSpec::Consensus(c) => Err(Error::ParameterOutOfRange(format!("gain {}", c.kappa))),
        }
    }
}

fn default_seed() -> u64 {
    0
}
fn default_horizon() -> usize {
    200
}
fn default_trials() -> usize {
    1000
}
fn default_tol() -> f64 {
    crate::geometry::DEFAULT_MEMBERSHIP_TOL
}

/// Run options; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// LMI margin; derived from the dynamics when absent.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Base membership tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Initial state; the ramp `1, 2, …, N·n_x` when absent. The ramp has a
    /// disagreement component, unlike the all-ones vector.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_initial_mode")]
    pub initial_mode: InitialMode,
}

fn default_initial_mode() -> InitialMode {
    InitialMode::Uniform
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            horizon: default_horizon(),
            trials: default_trials(),
            eps: None,
            tol: default_tol(),
            x0: None,
            initial_mode: default_initial_mode(),
        }
    }
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub graph: GraphSpec,
    pub dynamics: DynamicsSpec,
    #[serde(default)]
    pub analysis: AnalysisKind,
    pub interval: Interval,
    /// TPM CSV, relative to the problem file.
    #[serde(default)]
    pub tpm: Option<PathBuf>,
    #[serde(default)]
    pub options: RunOptions,
}

/// Validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub graph: Graph,
    pub dynamics: AgentDynamics,
    pub analysis: AnalysisKind,
    pub interval: Interval,
    pub tpm_path: Option<PathBuf>,
    pub options: RunOptions,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported version {} (expected {SCHEMA_VERSION})", file.version)));
        }
        Ok(file)
    }

    /// Resolves the TPM path against `base` and validates every part.
    pub fn into_problem(self, base: Option<&Path>) -> Result<Problem> {
        let graph = self.graph.build()?;
        let dynamics = self.dynamics.build()?;
        let interval = Interval::new(self.interval.rho_l, self.interval.rho_u)?;
        if let Some(x0) = &self.options.x0 {
            let want = graph.n() * dynamics.nx();
            if x0.len() != want {
                return Err(Error::DimensionMismatch(format!("x0 has {} entries, expected {want}", x0.len())));
            }
        }
        if let Some(eps) = self.options.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::ParameterOutOfRange(format!("margin must be positive, got {eps}")));
            }
        }
        let tpm_path = self.tpm.map(|p| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p,
        });
        Ok(Problem { graph, dynamics, analysis: self.analysis, interval, tpm_path, options: self.options })
    }
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        ProblemFile::parse(&text)?.into_problem(path.parent())
    }

    pub fn x0(&self) -> DVector<f64> {
        match &self.options.x0 {
            Some(v) => DVector::from_column_slice(v),
            None => DVector::from_fn(self.graph.n() * self.dynamics.nx(), |i, _| (i + 1) as f64),
        }
    }
}

/// Reads a headerless CSV of `2^m` rows with `2^m` columns each. Lines
/// starting with `#` are ignored.
pub fn parse_tpm_csv(text: &str) -> Result<Tpm> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("TPM row {}: {e}", i + 1)))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("TPM row {}: {f:?}: {e}", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty TPM".into()));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != rows.len()) {
        return Err(Error::DimensionMismatch(format!("TPM row {} has {} columns, expected {}", i + 1, r.len(), rows.len())));
    }
    Tpm::from_rows(rows, CSV_ROW_SUM_TOL)
}

pub fn read_tpm_csv(path: &Path) -> Result<Tpm> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_tpm_csv(&text)
}

fn write_csv<F>(f: F) -> String
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).expect("writing to memory");
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("CSV output is UTF-8")
}

/// Row-major CSV with shortest round-trip float formatting.
pub fn tpm_to_csv(tpm: &Tpm) -> String {
    write_csv(|w| {
        for r in tpm.rows() {
            w.write_record(r.entries().iter().map(|v| v.to_string()))?;
        }
        Ok(())
    })
}

/// `k,mean,stderr` per step.
pub fn trajectory_to_csv(stats: &TrajectoryStats) -> String {
    write_csv(|w| {
        w.write_record(["k", "mean", "stderr"])?;
        for (k, (m, s)) in stats.mean.iter().zip(&stats.stderr).enumerate() {
            w.write_record([k.to_string(), m.to_string(), s.to_string()])?;
        }
        Ok(())
    })
}

/// Self-contained certificate: the dynamics it was issued for travel with
/// it so it can be re-verified without the problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDocument {
    pub version: u32,
    pub dynamics: DynamicsJson,
    pub certificate: Certificate,
}

impl CertificateDocument {
    pub fn new(cert: Certificate, dynamics: &AgentDynamics) -> Self {
        Self { version: SCHEMA_VERSION, dynamics: DynamicsJson::from_dynamics(dynamics), certificate: cert }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported certificate version {}", doc.version)));
        }
        Ok(doc)
    }

    /// Accepts either a bare certificate document or a report that embeds
    /// one under `"certificate"`.
    pub fn extract(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let inner = match value.get("certificate") {
            Some(c) if c.get("dynamics").is_some() => c.clone(),
            _ => value,
        };
        let doc: Self = serde_json::from_value(inner).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported certificate version {}", doc.version)));
        }
        Ok(doc)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}
