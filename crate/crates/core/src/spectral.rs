//! The GFA engine: nested eigenvalue profiles, detection of diverging
//! eigenvalues, limit-PCA loadings, strong linear independence, and internal
//! factor realization through Q-R averaging sequences.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceSupplier;
use crate::error::{GfaError, Result};
use crate::linalg;
use crate::par;
use crate::tolerances::Tolerances;
use crate::types::{
    AsLabel, AveragingSequence, EigenProfile, FactorRealization, GapVerdict, GfaDecomposition, GrowthClass,
    GrowthEntry, GrowthReport, SampleEnsemble, SliReport, SliVerdict,
};

/// Thresholds of the diverging-eigenvalue detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Minimum mean growth per doubling of `n`.
    pub gamma: f64,
    /// Cap multiplier applied to the median trailing eigenvalue.
    pub tau_factor: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams { gamma: 1.5, tau_factor: 10.0 }
    }
}

/// Default growth factor required of strong-LI residual norms per doubling.
pub const DEFAULT_GAMMA_SLI: f64 = 1.3;

/// Geometric grid with ratio 2 ending at `n_max`: `n_max / 2^(points-1), ..., n_max`.
pub fn default_grid(n_max: usize, points: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..points)
        .rev()
        .map(|i| n_max >> i)
        .filter(|&n| n >= 1)
        .collect();
    grid.dedup();
    grid
}

/// Per-doubling growth ratio between `(n0, l0)` and `(n1, l1)`.
fn growth_per_doubling(n0: usize, l0: f64, n1: usize, l1: f64, floor: f64) -> f64 {
    const CAP: f64 = 1e6;
    if l0 <= floor {
        return if l1 <= floor { 1.0 } else { CAP };
    }
    let exponent = std::f64::consts::LN_2 / (n1 as f64 / n0 as f64).ln();
    (l1.max(0.0) / l0).powf(exponent).min(CAP)
}

/// Top-`m` eigenpairs of `Sigma_n` for every `n` in `grid`.
///
/// Weyl monotonicity (`lambda_{n,k}` non-decreasing in `n`) is asserted; a
/// violation means the supplier is not nested.
pub fn eigen_profile(
    c: &dyn CovarianceSupplier,
    grid: &[usize],
    m: usize,
    tol: &Tolerances,
) -> Result<EigenProfile> {
    if grid.is_empty() {
        return Err(GfaError::arg("grid is empty"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GfaError::arg("grid must be strictly increasing"));
    }
    let n_max = *grid.last().unwrap();
    if n_max > c.max_n() {
        return Err(GfaError::arg(format!("grid maximum {n_max} exceeds supplier max_n {}", c.max_n())));
    }
    if m == 0 || m > grid[0] {
        return Err(GfaError::arg(format!("m = {m} must be in 1..={}", grid[0])));
    }

    let pairs: Vec<Result<linalg::SymEigen>> = par::map_slice(grid, |&n| {
        let sigma = c.eval(n)?;
        linalg::top_eigen(sigma.view(), m)
    });
    let mut eigvals = Vec::with_capacity(grid.len());
    let mut eigvecs = Vec::with_capacity(grid.len());
    for p in pairs {
        let p = p?;
        eigvals.push(p.values);
        eigvecs.push(p.vectors);
    }

    for g in 1..grid.len() {
        let scale = eigvals[g][0].abs().max(eigvals[g - 1][0].abs()).max(f64::MIN_POSITIVE);
        for k in 0..m {
            let (prev, cur) = (eigvals[g - 1][k], eigvals[g][k]);
            if cur < prev - tol.weyl * scale {
                return Err(GfaError::SupplierInconsistency {
                    index: k + 1,
                    n_prev: grid[g - 1],
                    n: grid[g],
                    previous: prev,
                    current: cur,
                });
            }
        }
    }

    Ok(EigenProfile { grid: grid.to_vec(), m, eigvals, eigvecs })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Counts eigenvalues that grow without bound along the grid.
///
/// Index `k` is DIVERGING when its mean per-doubling growth exceeds `gamma`
/// and its value at the largest `n` exceeds `tau = tau_factor * median` of
/// the non-growing (trailing) eigenvalues there. Both statistics are
/// invariant under positive scaling of `Sigma`.
pub fn detect_factor_count(p: &EigenProfile, params: &DetectionParams) -> Result<GrowthReport> {
    let grid = &p.grid;
    if grid.len() < 3 {
        return Err(GfaError::arg(format!("detection needs at least 3 grid points, got {}", grid.len())));
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] < 2 * w[0]) {
        return Err(GfaError::arg(format!("grid sizes must at least double: {} -> {}", w[0], w[1])));
    }
    let last = grid.len() - 1;
    let global = p.eigvals.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
    let floor = 1e-12 * global.max(f64::MIN_POSITIVE);

    let mut ratios = Vec::with_capacity(p.m);
    for k in 0..p.m {
        let r: Vec<f64> = (0..last)
            .map(|g| growth_per_doubling(grid[g], p.eigvals[g][k], grid[g + 1], p.eigvals[g + 1][k], floor))
            .collect();
        ratios.push(r);
    }
    let means: Vec<f64> = ratios.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let growing: Vec<bool> = means.iter().map(|&r| r > params.gamma).collect();
    if growing.iter().all(|&g| g) {
        return Err(GfaError::NoDecomposition { m: p.m });
    }
    let trailing: Vec<f64> = (0..p.m).filter(|&k| !growing[k]).map(|k| p.eigvals[last][k]).collect();
    let tau = params.tau_factor * median(trailing).max(0.0);

    let entries: Vec<GrowthEntry> = (0..p.m)
        .map(|k| {
            let lambda_last = p.eigvals[last][k];
            let class = if growing[k] && lambda_last > tau { GrowthClass::Diverging } else { GrowthClass::Bounded };
            GrowthEntry { k: k + 1, ratios: ratios[k].clone(), mean_ratio: means[k], lambda_last, class }
        })
        .collect();
    let q = entries.iter().filter(|e| e.class == GrowthClass::Diverging).count();
    if q == p.m {
        return Err(GfaError::NoDecomposition { m: p.m });
    }
    let leading = entries[..q].iter().all(|e| e.class == GrowthClass::Diverging);
    let gap = if leading { GapVerdict::Clean } else { GapVerdict::Ambiguous };

    Ok(GrowthReport {
        q,
        gamma: params.gamma,
        tau_factor: params.tau_factor,
        tau,
        grid: grid.clone(),
        entries,
        gap,
    })
}

/// Limit-PCA loadings `F = U_q Lambda_q^{1/2}` of `sigma`.
pub fn extract_loadings(sigma: ArrayView2<f64>, q: usize, tol: &Tolerances) -> Result<Array2<f64>> {
    let n = sigma.nrows();
    if q > n {
        return Err(GfaError::arg(format!("q = {q} exceeds N = {n}")));
    }
    if q == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    let e = linalg::top_eigen(sigma, q)?;
    loadings_from_eigenpairs(&e.values, e.vectors.view(), tol)
}

fn loadings_from_eigenpairs(values: &[f64], vectors: ArrayView2<f64>, tol: &Tolerances) -> Result<Array2<f64>> {
    let q = vectors.ncols();
    let threshold = tol.rank * values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let mut f = vectors.to_owned();
    for i in 0..q {
        if values[i] <= threshold {
            return Err(GfaError::DegenerateFactor { index: i + 1, value: values[i], tolerance: threshold });
        }
        let scale = values[i].sqrt();
        f.column_mut(i).mapv_inplace(|x| x * scale);
    }
    Ok(f)
}

/// Orthonormal basis (as columns) of the span of `cols`, skipping columns
/// that are numerically dependent. Returns the basis and the indices that
/// were dependent.
fn orthonormal_basis(cols: &[Array1<f64>], rel_tol: f64) -> (Vec<Array1<f64>>, Vec<usize>) {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (idx, c) in cols.iter().enumerate() {
        let norm0 = c.dot(c).sqrt();
        let mut v = c.clone();
        for _ in 0..2 {
            for b in &basis {
                let coef = v.dot(b);
                v.scaled_add(-coef, b);
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm <= rel_tol * norm0.max(f64::MIN_POSITIVE) || norm == 0.0 {
            dependent.push(idx);
        } else {
            basis.push(v / norm);
        }
    }
    (basis, dependent)
}

/// Residual norms `||f_i - Proj[f_i | span{f_j, j != i}]||` per grid point.
///
/// `loadings[g]` holds the truncated loadings `F^n` (`n x q`) at the g-th
/// grid size. The verdict is STRONG when every residual grows by at least
/// `gamma_sli` per doubling of `n` (log-log slope between the first and last
/// grid point).
pub fn strong_li_diagnostic(loadings: &[Array2<f64>], gamma_sli: f64, tol: &Tolerances) -> Result<SliReport> {
    if loadings.len() < 2 {
        return Err(GfaError::arg("strong-LI diagnostic needs at least 2 grid points"));
    }
    let q = loadings[0].ncols();
    if q == 0 || loadings.iter().any(|f| f.ncols() != q) {
        return Err(GfaError::arg("every grid point must carry the same positive number of factors"));
    }
    let grid: Vec<usize> = loadings.iter().map(|f| f.nrows()).collect();
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GfaError::arg("loading grid must be strictly increasing in n"));
    }

    let mut warnings = Vec::new();
    let mut residual_norms = vec![Vec::with_capacity(grid.len()); q];
    for (f, &n) in loadings.iter().zip(&grid) {
        for i in 0..q {
            let others: Vec<Array1<f64>> = (0..q).filter(|&j| j != i).map(|j| f.column(j).to_owned()).collect();
            let (basis, dependent) = orthonormal_basis(&others, tol.rank);
            if !dependent.is_empty() {
                warnings.push(format!("collinear loadings at n = {n} (excluding factor {})", i + 1));
            }
            let mut r = f.column(i).to_owned();
            for _ in 0..2 {
                for b in &basis {
                    let coef = r.dot(b);
                    r.scaled_add(-coef, b);
                }
            }
            let norm = r.dot(&r).sqrt();
            let full = f.column(i).dot(&f.column(i)).sqrt();
            if norm <= tol.rank * full.max(f64::MIN_POSITIVE) {
                warnings.push(format!("factor {} lies in the span of the others at n = {n}", i + 1));
            }
            residual_norms[i].push(norm);
        }
    }

    let (n0, n1) = (grid[0] as f64, *grid.last().unwrap() as f64);
    let growth_per_doubling: Vec<f64> = residual_norms
        .iter()
        .map(|r| {
            let (r0, r1) = (r[0], *r.last().unwrap());
            if r0 <= 0.0 {
                return if r1 > 0.0 { f64::INFINITY } else { 1.0 };
            }
            (std::f64::consts::LN_2 * (r1 / r0).ln() / (n1 / n0).ln()).exp()
        })
        .collect();
    let strong = warnings.is_empty() && growth_per_doubling.iter().all(|&g| g >= gamma_sli);
    Ok(SliReport {
        grid,
        residual_norms,
        growth_per_doubling,
        gamma_sli,
        verdict: if strong { SliVerdict::Strong } else { SliVerdict::Weak },
        warnings,
    })
}

/// Gram-Schmidt factorization `F = G R` and the averaging sequences built from it.
#[derive(Debug, Clone)]
pub struct AveragingBasis {
    /// `N x q`, mutually orthogonal (not normalized) columns `g_i`.
    pub g: Array2<f64>,
    /// `q x q` upper triangular with unit diagonal.
    pub r: Array2<f64>,
    /// `q x N`, row `i` is `g_i^T / ||g_i||^2`; `A F = R`.
    pub a: Array2<f64>,
}

impl AveragingBasis {
    pub fn q(&self) -> usize {
        self.r.nrows()
    }

    /// Row `i` of `A` as an averaging sequence; its norm is `1 / ||g_i||`.
    pub fn sequence(&self, i: usize) -> AveragingSequence {
        AveragingSequence::new(self.a.row(i).to_owned(), AsLabel::QrRow { index: i })
    }
}

/// Sequential Gram-Schmidt (with one re-orthogonalization pass) of the
/// loading columns, producing the asymptotic left-inverse `A` of `F`.
pub fn build_averaging_sequences(f: ArrayView2<f64>, tol: &Tolerances) -> Result<AveragingBasis> {
    let (n, q) = f.dim();
    if q == 0 {
        return Err(GfaError::arg("need at least one loading column"));
    }
    if q > n {
        return Err(GfaError::RankDeficient { column: n });
    }
    let mut g = Array2::<f64>::zeros((n, q));
    let mut r = Array2::<f64>::eye(q);
    let mut sq = vec![0.0; q];
    for i in 0..q {
        let fi = f.column(i);
        let mut v = fi.to_owned();
        for _ in 0..2 {
            for j in 0..i {
                let c = v.dot(&g.column(j)) / sq[j];
                v.scaled_add(-c, &g.column(j));
                r[[j, i]] += c;
            }
        }
        let norm2 = v.dot(&v);
        let fnorm = fi.dot(&fi).sqrt();
        if norm2.sqrt() <= tol.rank * fnorm || norm2 == 0.0 {
            return Err(GfaError::RankDeficient { column: i });
        }
        sq[i] = norm2;
        g.column_mut(i).assign(&v);
    }
    let mut a = g.t().to_owned();
    for (i, mut row) in a.axis_iter_mut(Axis(0)).enumerate() {
        row.mapv_inplace(|x| x / sq[i]);
    }
    Ok(AveragingBasis { g, r, a })
}

/// How the averaged factors `z = A y` are orthonormalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Whitening {
    /// Symmetric inverse square root of the sample second moment of `z`.
    Sample,
    /// `(R R^T)^{-1/2}`, the population limit of `E z z^T`.
    Analytic,
}

/// Internal realization: `z = A y`, `x = W z`, `y_hat = F' x`, `y_idio = y - y_hat`.
///
/// `F' = G S^{1/2}` where `S` is the covariance being whitened and
/// `G = F R^{-1}`, so `y_hat = G z` is the orthogonal projection of every
/// column of `y` onto the span of the loadings.
pub fn realize_factors(
    y: ArrayView2<f64>,
    basis: &AveragingBasis,
    mode: Whitening,
    tol: &Tolerances,
) -> Result<FactorRealization> {
    let (n, m) = y.dim();
    let q = basis.q();
    if basis.a.ncols() != n {
        return Err(GfaError::arg(format!(
            "averaging sequences have length {}, data has {n} rows",
            basis.a.ncols()
        )));
    }
    let z = basis.a.dot(&y);
    let s_mat = match mode {
        Whitening::Sample => {
            if m < q {
                return Err(GfaError::InsufficientReplicates { replicates: m, factors: q });
            }
            crate::covariance::sample_second_moment(z.view())
        }
        Whitening::Analytic => basis.r.dot(&basis.r.t()),
    };
    let w = linalg::sym_power(s_mat.view(), -0.5, tol.rank)?
        .ok_or(GfaError::InsufficientReplicates { replicates: m, factors: q })?;
    let s_half = linalg::sym_power(s_mat.view(), 0.5, 0.0)?.expect("non-negative power always exists");
    let factors = w.dot(&z);
    let loadings_x = basis.g.dot(&s_half);
    let aggregate = loadings_x.dot(&factors);
    let idiosyncratic = &y - &aggregate;
    Ok(FactorRealization { factors, aggregate, idiosyncratic, r: basis.r.clone(), loadings_x })
}

/// Decay of `Var(a_n^T y)` along a grid, plus the eigenvalue-side check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdiosyncrasyReport {
    pub grid: Vec<usize>,
    pub as_norms: Vec<f64>,
    /// Sample second moment of `a_n^T y` over replicates.
    pub variances: Vec<f64>,
    /// `variances[0] / variances[last]`.
    pub decay: f64,
    pub delta: f64,
    /// Largest sample eigenvalue at each grid size `n <= M`; `None` when fewer
    /// than two grid sizes qualify.
    pub lambda1: Option<Vec<f64>>,
    pub lambda1_mean_growth: Option<f64>,
    pub gamma: f64,
    pub verdict: IdiosyncrasyVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IdiosyncrasyVerdict {
    IdiosyncraticConsistent,
    NotIdiosyncratic,
}

/// Largest eigenvalue of `Y_n Y_n^T / M` through the smaller Gram matrix.
fn top_sample_eigenvalue(y: ArrayView2<f64>) -> Result<f64> {
    let (n, m) = y.dim();
    let gram = if n <= m { y.dot(&y.t()) } else { y.t().dot(&y) };
    let vals = linalg::sym_eigenvalues(gram.view())?;
    Ok(vals[0] / m as f64)
}

/// Applies an averaging-sequence family along `grid` and checks that the
/// variance of the averages decays by at least `delta`.
pub fn idiosyncrasy_test(
    y: &SampleEnsemble,
    family: &(dyn Fn(usize) -> AveragingSequence + Sync),
    grid: &[usize],
    delta: f64,
    gamma: f64,
) -> Result<IdiosyncrasyReport> {
    if grid.len() < 3 {
        return Err(GfaError::arg(format!("idiosyncrasy test needs at least 3 grid points, got {}", grid.len())));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) || *grid.last().unwrap() > y.n() {
        return Err(GfaError::arg("grid must be increasing and bounded by N"));
    }
    let data = y.data();
    let m = y.m() as f64;
    let rows: Vec<(f64, f64)> = par::map_slice(grid, |&n| {
        let a = family(n);
        let len = a.len().min(data.nrows());
        let proj = a.weights().slice(s![..len]).dot(&data.slice(s![..len, ..]));
        (a.norm2(), proj.mapv(|x| x * x).sum() / m)
    });
    let as_norms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let variances: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let decay = variances[0] / variances.last().unwrap().max(f64::MIN_POSITIVE);

    let eligible: Vec<usize> = grid.iter().copied().filter(|&n| n <= y.m()).collect();
    let (lambda1, lambda1_mean_growth) = if eligible.len() >= 2 {
        let l: Vec<f64> = par::map_slice(&eligible, |&n| top_sample_eigenvalue(data.slice(s![..n, ..])))
            .into_iter()
            .collect::<Result<_>>()?;
        let floor = 1e-12 * l.iter().fold(0.0_f64, |a, x| a.max(*x));
        let growth: Vec<f64> = (0..l.len() - 1)
            .map(|g| growth_per_doubling(eligible[g], l[g], eligible[g + 1], l[g + 1], floor))
            .collect();
        let mean = growth.iter().sum::<f64>() / growth.len() as f64;
        (Some(l), Some(mean))
    } else {
        (None, None)
    };

    let bounded = lambda1_mean_growth.map(|g| g <= gamma).unwrap_or(true);
    let verdict = if decay >= delta && bounded {
        IdiosyncrasyVerdict::IdiosyncraticConsistent
    } else {
        IdiosyncrasyVerdict::NotIdiosyncratic
    };
    Ok(IdiosyncrasyReport {
        grid: grid.to_vec(),
        as_norms,
        variances,
        decay,
        delta,
        lambda1,
        lambda1_mean_growth,
        gamma,
        verdict,
    })
}

/// Full covariance-level pipeline: profile, detection, loadings at the
/// largest grid size, idiosyncratic covariance and strong-LI report.
pub fn decompose(
    c: &dyn CovarianceSupplier,
    grid: &[usize],
    m: usize,
    params: &DetectionParams,
    tol: &Tolerances,
) -> Result<(EigenProfile, GfaDecomposition)> {
    let profile = eigen_profile(c, grid, m, tol)?;
    let growth_report = detect_factor_count(&profile, params)?;
    let q = growth_report.q;
    let n = profile.largest_n();
    let sigma = c.eval(n)?;
    let last = grid.len() - 1;
    let loadings = if q == 0 {
        Array2::zeros((n, 0))
    } else {
        loadings_from_eigenpairs(&profile.eigvals[last][..q], profile.eigvecs[last].slice(s![.., ..q]), tol)?
    };
    let idio_cov = &sigma - &loadings.dot(&loadings.t());
    let sli_report = if q == 0 {
        None
    } else {
        let per_grid: Vec<Array2<f64>> = (0..grid.len())
            .map(|g| loadings_from_eigenpairs(&profile.eigvals[g][..q], profile.eigvecs[g].slice(s![.., ..q]), tol))
            .collect::<Result<_>>()?;
        Some(strong_li_diagnostic(&per_grid, DEFAULT_GAMMA_SLI, tol)?)
    };
    Ok((profile, GfaDecomposition { q, loadings, idio_cov, growth_report, sli_report }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{DenseCovariance, FnCovariance, CovarianceSource};
    use crate::synthesis::{self, LoadingSpec, NoiseSpec};
    use ndarray::{array, Array1};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn identity_profile_is_flat() {
        let c = FnCovariance::identity(64);
        let p = eigen_profile(&c, &[8, 16, 32, 64], 3, &tol()).unwrap();
        for row in &p.eigvals {
            for &l in row {
                assert!((l - 1.0).abs() < 1e-12);
            }
        }
        let r = detect_factor_count(&p, &DetectionParams::default()).unwrap();
        assert_eq!(r.q, 0);
    }

    #[test]
    fn exchangeable_closed_form() {
        let c = FnCovariance::exchangeable(2.0, 1.0, 800);
        let grid = [100, 200, 400, 800];
        let p = eigen_profile(&c, &grid, 3, &tol()).unwrap();
        for (g, &n) in grid.iter().enumerate() {
            let want = 1.0 + n as f64;
            assert!((p.eigvals[g][0] - want).abs() <= 1e-8 * want);
            assert!((p.eigvals[g][1] - 1.0).abs() <= 1e-8);
        }
        let r = detect_factor_count(&p, &DetectionParams::default()).unwrap();
        assert_eq!(r.q, 1);
        assert_eq!(r.gap, GapVerdict::Clean);
    }

    #[test]
    fn exchangeable_dense_oracle_n5() {
        // eigenvalues of I + 11^T at n = 5 are 6 and 1
        let c = FnCovariance::exchangeable(2.0, 1.0, 5);
        let e = linalg::sym_eigen(c.eval(5).unwrap().view()).unwrap();
        assert!((e.values[0] - 6.0).abs() < 1e-12);
        assert!(e.values[1..].iter().all(|l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn geometric_loading_is_bounded() {
        let c = synthesis::model_covariance(&[LoadingSpec::Geometric { lambda: 0.5 }], None, 400);
        let p = eigen_profile(&c, &[50, 100, 200, 400], 2, &tol()).unwrap();
        // rank one with eigenvalue sum_{k<=n} 4^{-k}
        let partial: f64 = (1..=50).map(|k| 0.25f64.powi(k)).sum();
        assert!((p.eigvals[0][0] - partial).abs() < 1e-12);
        let r = detect_factor_count(&p, &DetectionParams::default()).unwrap();
        assert_eq!(r.q, 0);
    }

    #[test]
    fn two_factor_model_detected() {
        let specs = [LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 1 }];
        let c = synthesis::model_covariance(&specs, Some(&NoiseSpec::White { sigma: 1.0 }), 800);
        let p = eigen_profile(&c, &[100, 200, 400, 800], 5, &tol()).unwrap();
        let r = detect_factor_count(&p, &DetectionParams::default()).unwrap();
        assert_eq!(r.q, 2);
    }

    #[test]
    fn detection_is_scale_invariant() {
        let specs = [LoadingSpec::Constant(1.0)];
        let noise = NoiseSpec::MovingAverage { coeffs: vec![1.0, 0.5] };
        let c = synthesis::model_covariance(&specs, Some(&noise), 400);
        let grid = [50, 100, 200, 400];
        let base = eigen_profile(&c, &grid, 4, &tol()).unwrap();
        let q0 = detect_factor_count(&base, &DetectionParams::default()).unwrap().q;
        for scale in [1e-6, 3.7, 1e6] {
            let scaled = FnCovariance::new(400, {
                let c = synthesis::model_covariance(&specs, Some(&noise), 400);
                move |k, j| scale * c.entry(k, j)
            });
            let p = eigen_profile(&scaled, &grid, 4, &tol()).unwrap();
            assert_eq!(detect_factor_count(&p, &DetectionParams::default()).unwrap().q, q0);
        }
        assert_eq!(q0, 1);
    }

    #[test]
    fn all_diverging_is_no_decomposition() {
        let c = FnCovariance::exchangeable(2.0, 1.0, 64);
        let p = eigen_profile(&c, &[8, 16, 32, 64], 1, &tol()).unwrap();
        assert!(matches!(
            detect_factor_count(&p, &DetectionParams::default()),
            Err(GfaError::NoDecomposition { m: 1 })
        ));
    }

    #[test]
    fn non_nested_supplier_rejected() {
        // the diagonal shrinks with n, so leading eigenvalues decrease
        struct Shrinking;
        impl crate::covariance::CovarianceSupplier for Shrinking {
            fn source(&self) -> CovarianceSource {
                CovarianceSource::Analytic
            }
            fn max_n(&self) -> usize {
                64
            }
            fn eval(&self, n: usize) -> Result<Array2<f64>> {
                Ok(Array2::eye(n) / n as f64)
            }
        }
        assert!(matches!(
            eigen_profile(&Shrinking, &[8, 16, 32], 2, &tol()),
            Err(GfaError::SupplierInconsistency { index: 1, .. })
        ));
    }

    #[test]
    fn grid_validation() {
        let c = FnCovariance::identity(64);
        assert!(eigen_profile(&c, &[], 1, &tol()).is_err());
        assert!(eigen_profile(&c, &[16, 8], 1, &tol()).is_err());
        assert!(eigen_profile(&c, &[8, 128], 1, &tol()).is_err());
        let p = eigen_profile(&c, &[8, 12, 16], 1, &tol()).unwrap();
        assert!(detect_factor_count(&p, &DetectionParams::default()).is_err());
        assert_eq!(default_grid(2000, 5), vec![125, 250, 500, 1000, 2000]);
    }

    #[test]
    fn loadings_of_rank_one() {
        let s = Array2::from_elem((3, 3), 4.0);
        let f = extract_loadings(s.view(), 1, &tol()).unwrap();
        for &x in f.iter() {
            assert!((x - 2.0).abs() < 1e-12);
        }
        assert!(matches!(
            extract_loadings(s.view(), 2, &tol()),
            Err(GfaError::DegenerateFactor { index: 2, .. })
        ));
    }

    #[test]
    fn exchangeable_loadings_near_constant() {
        let c = FnCovariance::exchangeable(2.0, 1.0, 100);
        let f = extract_loadings(c.eval(100).unwrap().view(), 1, &tol()).unwrap();
        let dist = f.iter().fold(0.0_f64, |a, x| a.max((x - 1.0).abs()));
        assert!(dist <= 0.02, "dist {dist}");
    }

    #[test]
    fn loadings_reproduce_low_rank_part() {
        let f = array![[1.0, 0.0], [1.0, 2.0], [1.0, -1.0], [1.0, 0.5]];
        let sigma = f.dot(&f.t()) + Array2::<f64>::eye(4) * 0.01;
        let fh = extract_loadings(sigma.view(), 2, &tol()).unwrap();
        let approx = fh.dot(&fh.t()) + Array2::<f64>::eye(4) * 0.01;
        // top-2 of F F^T + 0.01 I equals F F^T + 0.01 P, so the error is 0.01 (I - P)
        let diff = &sigma - &approx;
        assert!(linalg::max_abs(diff.view()) <= 0.01 + 1e-12);
    }

    fn loadings_on_grid(specs: &[LoadingSpec], grid: &[usize]) -> Vec<Array2<f64>> {
        grid.iter().map(|&n| synthesis::loading_matrix(specs, n)).collect()
    }

    #[test]
    fn strong_li_verdicts() {
        let grid = [100, 200, 400, 800];
        let strong = loadings_on_grid(&[LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 1 }], &grid);
        assert_eq!(strong_li_diagnostic(&strong, DEFAULT_GAMMA_SLI, &tol()).unwrap().verdict, SliVerdict::Strong);

        let single = loadings_on_grid(&[LoadingSpec::Constant(1.0)], &grid);
        assert_eq!(strong_li_diagnostic(&single, DEFAULT_GAMMA_SLI, &tol()).unwrap().verdict, SliVerdict::Strong);

        let two_pd: Vec<f64> = (1..=64).map(|k| 1.0 - 0.5f64.powi(k)).collect();
        let weak = loadings_on_grid(&[LoadingSpec::Constant(1.0), LoadingSpec::Custom(two_pd)], &grid);
        let report = strong_li_diagnostic(&weak, DEFAULT_GAMMA_SLI, &tol()).unwrap();
        assert_eq!(report.verdict, SliVerdict::Weak);
        // residual of f_2 on 1 converges to sqrt(t - s^2 / n) -> sqrt(1/3)
        let last = *report.residual_norms[1].last().unwrap();
        assert!((last - (1.0f64 / 3.0).sqrt()).abs() < 1e-2, "{last}");
    }

    #[test]
    fn arithmetic_mean_from_constant_loading() {
        let f = Array2::from_elem((10, 1), 1.0);
        let b = build_averaging_sequences(f.view(), &tol()).unwrap();
        for &x in b.a.iter() {
            assert!((x - 0.1).abs() < 1e-15);
        }
        assert!((b.sequence(0).norm2() - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_loadings_give_identity_r() {
        let f = synthesis::loading_matrix(&[LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 1 }], 8);
        let b = build_averaging_sequences(f.view(), &tol()).unwrap();
        assert!(linalg::max_abs((&b.r - &Array2::<f64>::eye(2)).view()) < 1e-15);
    }

    #[test]
    fn two_pd_left_inverse() {
        let two_pd: Vec<f64> = (1..=64).map(|k| 1.0 - 0.5f64.powi(k)).collect();
        let f = synthesis::loading_matrix(&[LoadingSpec::Constant(1.0), LoadingSpec::Custom(two_pd)], 10);
        let b = build_averaging_sequences(f.view(), &tol()).unwrap();
        let af = b.a.dot(&f);
        assert!(linalg::max_abs((&af - &b.r).view()) < 1e-12);
        assert!((b.r[[0, 0]] - 1.0).abs() < 1e-15 && (b.r[[1, 1]] - 1.0).abs() < 1e-15);
        assert!(b.r[[1, 0]] == 0.0);
    }

    #[test]
    fn dependent_loadings_rejected() {
        let f = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        assert!(matches!(build_averaging_sequences(f.view(), &tol()), Err(GfaError::RankDeficient { column: 1 })));
    }

    #[test]
    fn noiseless_analytic_realization_is_exact() {
        let specs = [LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 2 }];
        let s = synthesis::gen_aggregate(&specs, 64, 20, 3).unwrap();
        let b = build_averaging_sequences(s.loadings.view(), &tol()).unwrap();
        let real = realize_factors(s.ensemble.data().view(), &b, Whitening::Analytic, &tol()).unwrap();
        assert!(linalg::max_abs(real.idiosyncratic.view()) < 1e-12);
        // orthogonal loadings: z = x exactly
        assert!(linalg::max_abs((&real.factors - &s.factors).view()) < 1e-12);
    }

    fn corr(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        a.dot(b) / (a.dot(a) * b.dot(b)).sqrt()
    }

    #[test]
    fn realization_tracks_true_factor() {
        let specs = [LoadingSpec::Constant(1.0)];
        let s = synthesis::gen_factor_model(&specs, &NoiseSpec::White { sigma: 1.0 }, 1000, 200, 11).unwrap();
        let b = build_averaging_sequences(s.loadings.view(), &tol()).unwrap();
        let real = realize_factors(s.ensemble.data().view(), &b, Whitening::Sample, &tol()).unwrap();
        let c = corr(&real.factors.row(0).to_owned(), &s.factors.row(0).to_owned());
        assert!(c >= 0.99, "corr {c}");
        let y = s.ensemble.data();
        assert_eq!(real.idiosyncratic, y - &real.aggregate);
    }

    #[test]
    fn sample_whitening_needs_replicates() {
        let f = synthesis::loading_matrix(&[LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 1 }], 8);
        let b = build_averaging_sequences(f.view(), &tol()).unwrap();
        let y = Array2::<f64>::ones((8, 1));
        assert!(matches!(
            realize_factors(y.view(), &b, Whitening::Sample, &tol()),
            Err(GfaError::InsufficientReplicates { .. })
        ));
    }

    #[test]
    fn idiosyncrasy_of_white_and_white_growing() {
        let grid = [50, 100, 200, 400];
        let white = synthesis::gen_idiosyncratic(&NoiseSpec::White { sigma: 1.0 }, 400, 4000, 5).unwrap();
        let r = idiosyncrasy_test(&white, &AveragingSequence::arithmetic_mean, &grid, 4.0, 1.5).unwrap();
        assert_eq!(r.verdict, IdiosyncrasyVerdict::IdiosyncraticConsistent);
        assert!(r.decay > 4.0);

        let grow = synthesis::gen_idiosyncratic(&NoiseSpec::WhiteGrowing, 400, 4000, 5).unwrap();
        let r = idiosyncrasy_test(&grow, &AveragingSequence::unit_tail, &grid, 4.0, 1.5).unwrap();
        assert_eq!(r.verdict, IdiosyncrasyVerdict::NotIdiosyncratic);
        for v in &r.variances {
            assert!((0.9..=1.1).contains(v), "{v}");
        }
    }

    #[test]
    fn idiosyncrasy_detects_aggregate() {
        let s = synthesis::gen_aggregate(&[LoadingSpec::Constant(1.0)], 400, 300, 2).unwrap();
        let r = idiosyncrasy_test(&s.ensemble, &AveragingSequence::arithmetic_mean, &[50, 100, 200, 400], 4.0, 1.5)
            .unwrap();
        assert_eq!(r.verdict, IdiosyncrasyVerdict::NotIdiosyncratic);
    }

    #[test]
    fn decompose_sample_covariance() {
        let specs = [LoadingSpec::Constant(1.0)];
        let s = synthesis::gen_factor_model(&specs, &NoiseSpec::White { sigma: 1.0 }, 400, 400, 9).unwrap();
        let c = DenseCovariance::sample(&s.ensemble).unwrap();
        let (_, dec) = decompose(&c, &[50, 100, 200, 400], 5, &DetectionParams::default(), &tol()).unwrap();
        assert_eq!(dec.q, 1);
        assert_eq!(dec.loadings.dim(), (400, 1));
        assert_eq!(dec.sli_report.unwrap().verdict, SliVerdict::Strong);
    }
}
