//! Shared domain types. No algorithms live here beyond construction-time
//! validation and trivial accessors.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{GfaError, Result};

/// How the columns of a [`SampleEnsemble`] relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Columns are i.i.d. draws of the random vector `y`.
    Replicates,
    /// Column `t` is the cross-section `y(., t)`.
    Timeseries,
}

/// Provenance of a synthetic ensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
    pub generator: String,
}

/// Observations: rows are the cross-section index `k`, columns replicates or
/// time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnsemble {
    data: Array2<f64>,
    kind: EnsembleKind,
    seed_info: Option<SeedInfo>,
}

pub(crate) fn check_finite(m: ArrayView2<f64>) -> Result<()> {
    for ((row, col), x) in m.indexed_iter() {
        if !x.is_finite() {
            return Err(GfaError::NonFinite { row, col });
        }
    }
    Ok(())
}

impl SampleEnsemble {
    pub fn new(data: Array2<f64>, kind: EnsembleKind) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(GfaError::arg(format!(
                "ensemble must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite(data.view())?;
        Ok(SampleEnsemble { data, kind, seed_info: None })
    }

    pub fn with_seed_info(mut self, info: SeedInfo) -> Self {
        self.seed_info = Some(info);
        self
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn seed_info(&self) -> Option<&SeedInfo> {
        self.seed_info.as_ref()
    }

    /// Cross-section size `N`.
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Number of replicates / time points `M`.
    pub fn m(&self) -> usize {
        self.data.ncols()
    }
}

/// Top-`m` eigenpairs of nested truncations `Sigma_n` over a grid of sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenProfile {
    pub grid: Vec<usize>,
    pub m: usize,
    /// `eigvals[g][k]` is the (k+1)-th largest eigenvalue at `grid[g]`.
    pub eigvals: Vec<Vec<f64>>,
    /// `eigvecs[g]` is `grid[g] x m`, columns orthonormal.
    #[serde(skip)]
    pub eigvecs: Vec<Array2<f64>>,
}

impl EigenProfile {
    /// Eigenvalue `k` (0-based) along the grid.
    pub fn track(&self, k: usize) -> Vec<f64> {
        self.eigvals.iter().map(|v| v[k]).collect()
    }

    pub fn largest_n(&self) -> usize {
        *self.grid.last().expect("profile grid is never empty")
    }
}

/// Classification of one tracked eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GrowthClass {
    Diverging,
    Bounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthEntry {
    /// 1-based eigenvalue index.
    pub k: usize,
    /// Per-doubling growth ratios between consecutive grid points.
    pub ratios: Vec<f64>,
    pub mean_ratio: f64,
    pub lambda_last: f64,
    pub class: GrowthClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GapVerdict {
    /// Indices `1..=q` diverge and index `q+1` is bounded.
    Clean,
    /// Diverging indices are not a leading block.
    Ambiguous,
}

/// Output of the diverging-eigenvalue detector, including the thresholds
/// that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    pub q: usize,
    pub gamma: f64,
    pub tau_factor: f64,
    /// `tau_factor` times the median trailing eigenvalue at the largest `n`.
    pub tau: f64,
    pub grid: Vec<usize>,
    pub entries: Vec<GrowthEntry>,
    pub gap: GapVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SliVerdict {
    Strong,
    Weak,
}

/// Strong-linear-independence diagnostic: projection residual norms of each
/// loading column onto the span of the others, per grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliReport {
    pub grid: Vec<usize>,
    /// `residual_norms[i][g]` for factor `i` at `grid[g]`.
    pub residual_norms: Vec<Vec<f64>>,
    /// Geometric-mean growth of each residual norm per doubling of `n`.
    pub growth_per_doubling: Vec<f64>,
    pub gamma_sli: f64,
    pub verdict: SliVerdict,
    pub warnings: Vec<String>,
}

/// Covariance split `Sigma_N = F F^T + Sigma_idio`.
#[derive(Debug, Clone)]
pub struct GfaDecomposition {
    pub q: usize,
    /// `N x q`, columns ordered by eigenvalue.
    pub loadings: Array2<f64>,
    pub idio_cov: Array2<f64>,
    pub growth_report: GrowthReport,
    pub sli_report: Option<SliReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsLabel {
    EigvecDerived,
    ArithmeticMean,
    Sin { omega: f64 },
    Cos { omega: f64 },
    /// `e_n / sqrt(n)`: the single-coordinate sequence.
    UnitTail,
    /// Tail `a(k + n)` of a fixed square-summable sequence.
    ShiftedFunctional,
    QrRow { index: usize },
}

/// Weight vector of an averaging sequence at one truncation size.
/// Entries beyond `weights.len()` are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragingSequence {
    weights: Array1<f64>,
    norm2: f64,
    label: AsLabel,
}

impl AveragingSequence {
    pub fn new(weights: Array1<f64>, label: AsLabel) -> Self {
        let norm2 = weights.dot(&weights).sqrt();
        AveragingSequence { weights, norm2, label }
    }

    /// `(1/n) [1 ... 1]`.
    pub fn arithmetic_mean(n: usize) -> Self {
        Self::new(Array1::from_elem(n, 1.0 / n as f64), AsLabel::ArithmeticMean)
    }

    /// `e_n / sqrt(n)`.
    pub fn unit_tail(n: usize) -> Self {
        let mut w = Array1::zeros(n);
        w[n - 1] = 1.0 / (n as f64).sqrt();
        Self::new(w, AsLabel::UnitTail)
    }

    /// `(1/n) sin(omega k)`, `k = 1..n`.
    pub fn sin(omega: f64, n: usize) -> Self {
        let w = Array1::from_shape_fn(n, |i| (omega * (i + 1) as f64).sin() / n as f64);
        Self::new(w, AsLabel::Sin { omega })
    }

    /// `(1/n) cos(omega k)`, `k = 1..n`.
    pub fn cos(omega: f64, n: usize) -> Self {
        let w = Array1::from_shape_fn(n, |i| (omega * (i + 1) as f64).cos() / n as f64);
        Self::new(w, AsLabel::Cos { omega })
    }

    /// `k -> a(k + shift)` truncated to `len` entries; `a` is indexed from `k = 1`.
    pub fn shifted(a: impl Fn(usize) -> f64, shift: usize, len: usize) -> Self {
        let w = Array1::from_shape_fn(len, |i| a(i + 1 + shift));
        Self::new(w, AsLabel::ShiftedFunctional)
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn norm2(&self) -> f64 {
        self.norm2
    }

    pub fn label(&self) -> &AsLabel {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Internal realization `y = F x + y_idio` of a sample.
#[derive(Debug, Clone)]
pub struct FactorRealization {
    /// `q x M` orthonormalized factor samples.
    pub factors: Array2<f64>,
    /// `N x M`, equals `loadings_x * factors`.
    pub aggregate: Array2<f64>,
    /// `N x M`, computed as `data - aggregate`.
    pub idiosyncratic: Array2<f64>,
    /// `q x q` unit-diagonal upper-triangular factor of the Q-R step.
    pub r: Array2<f64>,
    /// Loadings expressed against `factors`: `aggregate = loadings_x * factors`.
    pub loadings_x: Array2<f64>,
}

/// One spectral line of the purely deterministic part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdLine {
    pub omega: f64,
    /// Cosine amplitude, one per replicate.
    pub v: Vec<f64>,
    /// Sine amplitude, one per replicate; absent when the sine channel is
    /// degenerate (`omega` within `4 pi / N` of 0 or pi).
    pub w: Option<Vec<f64>>,
}

/// Finite-line model of the purely deterministic Wold component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdLineModel {
    pub lines: Vec<PdLine>,
}

impl PdLineModel {
    pub fn new(mut lines: Vec<PdLine>) -> Result<Self> {
        lines.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap_or(std::cmp::Ordering::Equal));
        for l in &lines {
            if !(0.0..std::f64::consts::PI).contains(&l.omega) {
                return Err(GfaError::arg(format!("line frequency {} outside [0, pi)", l.omega)));
            }
        }
        for pair in lines.windows(2) {
            if pair[0].omega == pair[1].omega {
                return Err(GfaError::arg(format!("duplicate line frequency {}", pair[0].omega)));
            }
        }
        Ok(PdLineModel { lines })
    }

    pub fn nu(&self) -> usize {
        self.lines.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.lines.iter().map(|l| l.omega).collect()
    }

    /// `sum_i v_i cos(omega_i k) + w_i sin(omega_i k)`, `k = 1..n`, for one replicate.
    pub fn reconstruct(&self, n: usize, replicate: usize) -> Array1<f64> {
        let mut out = Array1::zeros(n);
        for l in &self.lines {
            let v = l.v[replicate];
            let w = l.w.as_ref().map(|w| w[replicate]).unwrap_or(0.0);
            for (i, o) in out.iter_mut().enumerate() {
                let arg = l.omega * (i + 1) as f64;
                *o += v * arg.cos() + w * arg.sin();
            }
        }
        out
    }
}

/// Unit-variance stationary time process multiplying the space process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum TimeProcess {
    Iid,
    Ar1 { phi: f64 },
    /// `sqrt(2) sin(omega t + phase)` with uniform random phase.
    Sinusoid { omega: f64 },
}

/// `N x T` sample of a space-time field `y(k, t)`.
#[derive(Debug, Clone)]
pub struct SeparableField {
    data: Array2<f64>,
    /// Declared space covariance, if known (`N x N`).
    pub space_model: Option<Array2<f64>>,
    pub time_model: Option<TimeProcess>,
}

impl SeparableField {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(GfaError::arg(format!(
                "field must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_finite(data.view())?;
        Ok(SeparableField { data, space_model: None, time_model: None })
    }

    /// `y(k, t) = v(k) u(t)`.
    pub fn from_parts(v: &Array1<f64>, u: &Array1<f64>) -> Result<Self> {
        let data = Array2::from_shape_fn((v.len(), u.len()), |(k, t)| v[k] * u[t]);
        Self::new(data)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn t(&self) -> usize {
        self.data.ncols()
    }
}
