//! Flocking extraction for separable space-time fields `y(k, t) = v(k) u(t)`.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceSource, CovarianceSupplier, ToeplitzCovariance};
use crate::error::{GfaError, Result};
use crate::linalg;
use crate::par;
use crate::spectral::{self, DetectionParams, Whitening};
use crate::stationary::{lagged_products, sample_autocov, AutocovEstimate, AutocovEstimator};
use crate::tolerances::Tolerances;
use crate::types::{GrowthReport, SeparableField, SliReport};

/// Spatial autocovariance of the snapshot at time index `t0` (0-based),
/// `(1/N) sum_k y(k + h, t0) y(k, t0)`.
pub fn snapshot_autocov(field: &SeparableField, t0: usize, max_lag: usize) -> Result<AutocovEstimate> {
    if t0 >= field.t() {
        return Err(GfaError::arg(format!("time index {t0} outside 0..{}", field.t())));
    }
    sample_autocov(field.data().column(t0), max_lag, AutocovEstimator::Biased)
}

/// Snapshot autocovariances with the `N - h` divisor, each normalized by its
/// lag-0 value, averaged over the snapshots with nonzero energy.
///
/// Returns the pooled lags and the index of the strongest snapshot.
pub fn pooled_snapshot_lags(field: &SeparableField, max_lag: usize) -> Result<(Vec<f64>, usize)> {
    let n = field.n();
    if max_lag >= n {
        return Err(GfaError::arg(format!("max lag {max_lag} must be below N = {n}")));
    }
    let data = field.data();
    let per_t: Vec<Vec<f64>> = par::map_range(field.t(), |t| {
        let raw = lagged_products(data.column(t), max_lag);
        raw.iter().enumerate().map(|(h, s)| s / (n - h) as f64).collect()
    });
    let mut pooled = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    let mut strongest = (0, f64::NEG_INFINITY);
    for (t, lags) in per_t.iter().enumerate() {
        if lags[0] > strongest.1 {
            strongest = (t, lags[0]);
        }
        if lags[0] > 0.0 {
            for (p, l) in pooled.iter_mut().zip(lags) {
                *p += l / lags[0];
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(GfaError::arg("every snapshot of the field is identically zero"));
    }
    pooled.iter_mut().for_each(|p| *p /= used as f64);
    Ok((pooled, strongest.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlockVerdict {
    #[serde(rename = "FLOCK")]
    Flock,
    #[serde(rename = "NO-FLOCK")]
    NoFlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlockParams {
    /// Truncation grid of the space covariance used for detection; its last
    /// entry must not exceed `N`. `None` uses five doubling sizes ending at
    /// `N / 2`, so every lag involved averages at least `N / 2` products.
    pub grid: Option<Vec<usize>>,
    /// Number of leading eigenvalues tracked.
    pub m: usize,
    pub detection: DetectionParams,
}

impl Default for FlockParams {
    fn default() -> Self {
        FlockParams { grid: None, m: 10, detection: DetectionParams::default() }
    }
}

#[derive(Debug, Clone)]
pub struct FlockReport {
    pub q: usize,
    pub verdict: FlockVerdict,
    pub grid: Vec<usize>,
    pub growth_report: GrowthReport,
    pub sli_report: Option<SliReport>,
    /// Factor count from the strongest single snapshot; `None` if detection failed there.
    pub single_snapshot_q: Option<usize>,
    pub single_snapshot_t: usize,
    /// `N x q` loadings of the pooled space covariance.
    pub loadings: Array2<f64>,
    /// `q x T`, unit second moment over `t`.
    pub factors: Array2<f64>,
    /// `N x T`.
    pub flock: Array2<f64>,
    /// `field - flock`.
    pub residual: Array2<f64>,
}

fn resolve_grid(n: usize, params: &FlockParams) -> Result<Vec<usize>> {
    let grid = params.grid.clone().unwrap_or_else(|| spectral::default_grid(n / 2, 5));
    match grid.last() {
        Some(&last) if last <= n => {}
        _ => return Err(GfaError::arg(format!("flock grid must be non-empty and end at most at N = {n}, got {grid:?}"))),
    }
    Ok(grid)
}

/// Detects a flocking component from pooled snapshot Toeplitz covariances
/// and reconstructs its time factors by averaging over space.
///
/// Detection runs on the grid; loadings come from the full `N x N` pooled
/// Toeplitz matrix. Factors are `x = S^{-1/2} A y(., t)` with `S` the second
/// moment of `A y` over `t`, and `flock` is the projection of each snapshot
/// onto the span of the loadings.
pub fn extract_flock(field: &SeparableField, params: &FlockParams, tol: &Tolerances) -> Result<FlockReport> {
    let (n, t) = (field.n(), field.t());
    let grid = resolve_grid(n, params)?;
    let m = params.m.min(grid[0]);
    let (pooled, strongest) = pooled_snapshot_lags(field, n - 1)?;
    let cov = ToeplitzCovariance::new(pooled, CovarianceSource::Sample)?;
    let (_, dec) = spectral::decompose(&cov, &grid, m, &params.detection, tol)?;
    let loadings = spectral::extract_loadings(cov.eval(n)?.view(), dec.q, tol)?;

    let single_snapshot_q = {
        let data = field.data();
        let raw = lagged_products(data.column(strongest), n - 1);
        let lags: Vec<f64> = raw.iter().enumerate().map(|(h, s)| s / (n - h) as f64).collect();
        ToeplitzCovariance::new(lags, CovarianceSource::Sample)
            .and_then(|c| spectral::eigen_profile(&c, &grid, m, tol))
            .and_then(|p| spectral::detect_factor_count(&p, &params.detection))
            .ok()
            .map(|r| r.q)
    };

    let data = field.data();
    if dec.q == 0 {
        return Ok(FlockReport {
            q: 0,
            verdict: FlockVerdict::NoFlock,
            grid,
            growth_report: dec.growth_report,
            sli_report: None,
            single_snapshot_q,
            single_snapshot_t: strongest,
            loadings,
            factors: Array2::zeros((0, t)),
            flock: Array2::zeros((n, t)),
            residual: data.clone(),
        });
    }
    let basis = spectral::build_averaging_sequences(loadings.view(), tol)?;
    let real = spectral::realize_factors(data.view(), &basis, Whitening::Sample, tol)?;
    let flock = real.aggregate;
    let residual = data - &flock;
    Ok(FlockReport {
        q: dec.q,
        verdict: FlockVerdict::Flock,
        grid,
        growth_report: dec.growth_report,
        sli_report: dec.sli_report,
        single_snapshot_q,
        single_snapshot_t: strongest,
        loadings,
        factors: real.factors,
        flock,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    /// `sqrt(1 - s_1^2 / ||R||_F^2)` of the rearranged block covariance, in `[0, 1]`.
    pub defect: f64,
    pub space_block: usize,
    pub time_block: usize,
    pub blocks: usize,
}

/// Largest sub-block side accepted by [`separability_check`].
pub const MAX_SUB_GRID: usize = 20;

/// Kronecker-rank-one test of the covariance of `p x r` sub-blocks.
///
/// Second moments are averaged over non-overlapping blocks whose space and
/// time offsets form a full Cartesian grid, so an exactly separable field
/// gives an exactly Kronecker-structured estimate. The estimate `C` is
/// rearranged into `R[(k1, k2), (t1, t2)] = C[(k1, t1), (k2, t2)]` and the
/// defect measures the part of `R` outside its best rank-one approximation.
pub fn separability_check(field: &SeparableField, space_block: usize, time_block: usize) -> Result<SeparabilityReport> {
    let (p, r) = (space_block, time_block);
    if p == 0 || r == 0 || p > MAX_SUB_GRID || r > MAX_SUB_GRID {
        return Err(GfaError::arg(format!("sub-grid ({p}, {r}) must be within 1..={MAX_SUB_GRID}")));
    }
    if p > field.n() || r > field.t() {
        return Err(GfaError::arg(format!(
            "sub-grid ({p}, {r}) exceeds the field size ({}, {})",
            field.n(),
            field.t()
        )));
    }
    let data = field.data();
    let (nk, nt) = (field.n() / p, field.t() / r);
    let d = p * r;
    let partial: Vec<Array2<f64>> = par::map_range(nk, |bk| {
        let mut acc = Array2::<f64>::zeros((d, d));
        for bt in 0..nt {
            let block = data.slice(s![bk * p..(bk + 1) * p, bt * r..(bt + 1) * r]);
            // row-major vectorization: index k * r + t
            let vec = block.to_owned().into_shape_with_order(d).expect("contiguous block");
            let col = vec.view().insert_axis(Axis(1));
            acc = acc + col.dot(&col.t());
        }
        acc
    });
    let blocks = nk * nt;
    let c = partial.into_iter().fold(Array2::<f64>::zeros((d, d)), |a, b| a + b) / blocks as f64;

    let mut rearranged = Array2::<f64>::zeros((p * p, r * r));
    for k1 in 0..p {
        for k2 in 0..p {
            for t1 in 0..r {
                for t2 in 0..r {
                    rearranged[[k1 * p + k2, t1 * r + t2]] = c[[k1 * r + t1, k2 * r + t2]];
                }
            }
        }
    }
    let total: f64 = rearranged.iter().map(|x| x * x).sum();
    let defect = if total > 0.0 {
        let s1 = linalg::singular_values(rearranged.view())?[0];
        (1.0 - s1 * s1 / total).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(SeparabilityReport { defect, space_block: p, time_block: r, blocks })
}
