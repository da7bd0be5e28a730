//! Pipelines behind the `gfa` subcommands, shared by the binary and its tests.

use ndarray::{Array1, Array2};
use serde::Serialize;
use serde_json::{json, Value};

use gfa_core::field::{self, FlockParams};
use gfa_core::spectral::{self, DetectionParams, Whitening};
use gfa_core::stationary;
use gfa_core::{DenseCovariance, EigenProfile, EnsembleKind, GfaError, Result, SampleEnsemble, SeparableField, Tolerances};

/// Process exit status for an error.
pub fn exit_code(e: &GfaError) -> i32 {
    match e {
        GfaError::Parse { .. } | GfaError::Config(_) | GfaError::Io(_) | GfaError::Json(_) => 2,
        GfaError::Eigen
        | GfaError::NoDecomposition { .. }
        | GfaError::DegenerateFactor { .. }
        | GfaError::RankDeficient { .. }
        | GfaError::SupplierInconsistency { .. }
        | GfaError::NotPsd { .. }
        | GfaError::NotSymmetric { .. } => 3,
        GfaError::InvalidArgument(_) | GfaError::NonFinite { .. } | GfaError::InsufficientReplicates { .. } => 4,
    }
}

/// Comma-separated sizes, e.g. `125,250,500`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sizes(pub Vec<usize>);

impl std::str::FromStr for Sizes {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(Sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecomposeFlags {
    pub grid: Option<Vec<usize>>,
    pub gamma: f64,
    pub tau: f64,
    pub top: usize,
    pub header: bool,
}

impl Default for DecomposeFlags {
    fn default() -> Self {
        let d = DetectionParams::default();
        DecomposeFlags { grid: None, gamma: d.gamma, tau: d.tau_factor, top: 10, header: false }
    }
}

pub struct DecomposeOutput {
    pub report: Value,
    pub profile: EigenProfile,
    pub growth: gfa_core::GrowthReport,
    pub loadings: Array2<f64>,
    /// `q x M` realized factors; absent when `q = 0`.
    pub factors: Option<Array2<f64>>,
}

/// Sample-covariance GFA of an `N x M` ensemble (rows: cross-section, columns: replicates).
pub fn run_decompose(data: Array2<f64>, flags: &DecomposeFlags) -> Result<DecomposeOutput> {
    let y = SampleEnsemble::new(data, EnsembleKind::Replicates)?;
    let grid = flags.grid.clone().unwrap_or_else(|| spectral::default_grid(y.n(), 5));
    let top = flags.top.min(grid[0]);
    let params = DetectionParams { gamma: flags.gamma, tau_factor: flags.tau };
    let tol = Tolerances::default();
    let c = DenseCovariance::sample(&y)?;
    let (profile, dec) = spectral::decompose(&c, &grid, top, &params, &tol)?;
    let n = profile.largest_n();
    let factors = if dec.q > 0 {
        let basis = spectral::build_averaging_sequences(dec.loadings.view(), &tol)?;
        let rows = y.data().slice(ndarray::s![..n, ..]);
        Some(spectral::realize_factors(rows, &basis, Whitening::Sample, &tol)?.factors)
    } else {
        None
    };
    let report = json!({
        "flags": flags,
        "n": y.n(),
        "replicates": y.m(),
        "loadings_n": n,
        "q": dec.q,
        "growth_report": dec.growth_report,
        "sli_report": dec.sli_report,
        "profile": profile,
    });
    Ok(DecomposeOutput { report, profile, growth: dec.growth_report, loadings: dec.loadings, factors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryFlags {
    pub max_lines: usize,
    pub threshold: f64,
    pub header: bool,
}

impl Default for StationaryFlags {
    fn default() -> Self {
        StationaryFlags { max_lines: 8, threshold: stationary::DEFAULT_LINE_THRESHOLD, header: false }
    }
}

pub struct StationaryOutput {
    pub report: Value,
    pub pd: Array1<f64>,
    pub pnd: Array1<f64>,
}

/// Line detection and PD/PND split of one series (a single row or column).
pub fn run_stationary(data: Array2<f64>, flags: &StationaryFlags) -> Result<StationaryOutput> {
    let series = match data.dim() {
        (1, _) => data.row(0).to_owned(),
        (_, 1) => data.column(0).to_owned(),
        (r, c) => return Err(GfaError::InvalidArgument(format!("expected a single series, got a {r}x{c} matrix"))),
    };
    let lines = stationary::detect_lines(series.view(), flags.max_lines, flags.threshold)?;
    let split = stationary::wold_split(series.view(), &lines, flags.threshold)?;
    let report = json!({
        "flags": flags,
        "n": series.len(),
        "lines": split.model.lines,
        "residual_peaks": split.residual_peaks,
        "warnings": split.warnings,
    });
    Ok(StationaryOutput { report, pd: split.pd, pnd: split.pnd })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlockFlags {
    pub grid: Option<Vec<usize>>,
    pub gamma: f64,
    pub tau: f64,
    pub top: usize,
    /// Space and time side of the separability sub-blocks.
    pub sub_grid: (usize, usize),
    pub header: bool,
}

impl Default for FlockFlags {
    fn default() -> Self {
        let d = FlockParams::default();
        FlockFlags {
            grid: None,
            gamma: d.detection.gamma,
            tau: d.detection.tau_factor,
            top: d.m,
            sub_grid: (10, 10),
            header: false,
        }
    }
}

pub struct FlockOutput {
    pub report: Value,
    pub extraction: field::FlockReport,
}

/// Flocking extraction from an `N x T` field.
pub fn run_flock(data: Array2<f64>, flags: &FlockFlags) -> Result<FlockOutput> {
    let f = SeparableField::new(data)?;
    let params = FlockParams {
        grid: flags.grid.clone(),
        m: flags.top,
        detection: DetectionParams { gamma: flags.gamma, tau_factor: flags.tau },
    };
    let r = field::extract_flock(&f, &params, &Tolerances::default())?;
    let (p, t) = (flags.sub_grid.0.min(f.n()), flags.sub_grid.1.min(f.t()));
    let sep = field::separability_check(&f, p, t)?;
    let report = json!({
        "flags": flags,
        "n": f.n(),
        "t": f.t(),
        "q": r.q,
        "verdict": r.verdict,
        "loadings_file": "loadings.csv",
        "factors_file": "factors.csv",
        "defect": sep.defect,
        "separability": sep,
        "grid": r.grid,
        "growth_report": r.growth_report,
        "sli_report": r.sli_report,
        "single_snapshot_q": r.single_snapshot_q,
        "single_snapshot_t": r.single_snapshot_t,
    });
    Ok(FlockOutput { report, extraction: r })
}
