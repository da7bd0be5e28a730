//! Covariance suppliers: anything that can hand out the leading `n x n`
//! block `Sigma_n` of a (conceptually infinite) covariance.

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{GfaError, Result};
use crate::linalg;
use crate::tolerances::Tolerances;
use crate::types::{check_finite, SampleEnsemble};

/// Matrices are dense; this is the documented size limit.
pub const MAX_DENSE_N: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSource {
    Analytic,
    Sample,
}

pub trait CovarianceSupplier: Sync {
    fn source(&self) -> CovarianceSource;

    /// Largest supported truncation.
    fn max_n(&self) -> usize;

    /// Leading `n x n` block. Implementations must be nested: `eval(n)` is the
    /// top-left block of `eval(n')` for every `n' > n`.
    fn eval(&self, n: usize) -> Result<Array2<f64>>;
}

pub(crate) fn check_n(n: usize, max_n: usize) -> Result<()> {
    if n == 0 || n > max_n {
        return Err(GfaError::arg(format!("truncation n = {n} outside 1..={max_n}")));
    }
    Ok(())
}

/// A stored dense matrix; truncations are its leading blocks.
#[derive(Debug, Clone)]
pub struct DenseCovariance {
    matrix: Array2<f64>,
    source: CovarianceSource,
}

impl DenseCovariance {
    pub fn new(matrix: Array2<f64>, source: CovarianceSource) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(GfaError::arg("covariance matrix must be square"));
        }
        if matrix.nrows() > MAX_DENSE_N {
            return Err(GfaError::arg(format!(
                "dense covariance of size {} exceeds the limit {MAX_DENSE_N}",
                matrix.nrows()
            )));
        }
        Ok(DenseCovariance { matrix, source })
    }

    /// Second-moment matrix `Y Y^T / M` of a zero-mean ensemble (no centering).
    pub fn sample(y: &SampleEnsemble) -> Result<Self> {
        Self::new(sample_second_moment(y.data().view()), CovarianceSource::Sample)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// `Y Y^T / M`.
pub fn sample_second_moment(y: ArrayView2<f64>) -> Array2<f64> {
    let m = y.ncols() as f64;
    let mut s = y.dot(&y.t());
    s.mapv_inplace(|x| x / m);
    // symmetrize exactly
    let n = s.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (s[[i, j]] + s[[j, i]]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    s
}

impl CovarianceSupplier for DenseCovariance {
    fn source(&self) -> CovarianceSource {
        self.source
    }

    fn max_n(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, n: usize) -> Result<Array2<f64>> {
        check_n(n, self.max_n())?;
        Ok(self.matrix.slice(s![..n, ..n]).to_owned())
    }
}

/// Stationary covariance `sigma(|k - j|)` from a lag vector.
#[derive(Debug, Clone)]
pub struct ToeplitzCovariance {
    lags: Vec<f64>,
    source: CovarianceSource,
}

impl ToeplitzCovariance {
    pub fn new(lags: Vec<f64>, source: CovarianceSource) -> Result<Self> {
        if lags.is_empty() {
            return Err(GfaError::arg("Toeplitz covariance needs at least lag 0"));
        }
        if let Some(col) = lags.iter().position(|x| !x.is_finite()) {
            return Err(GfaError::NonFinite { row: 0, col });
        }
        Ok(ToeplitzCovariance { lags, source })
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }
}

impl CovarianceSupplier for ToeplitzCovariance {
    fn source(&self) -> CovarianceSource {
        self.source
    }

    fn max_n(&self) -> usize {
        self.lags.len().min(MAX_DENSE_N)
    }

    fn eval(&self, n: usize) -> Result<Array2<f64>> {
        check_n(n, self.max_n())?;
        Ok(linalg::toeplitz(&self.lags, n))
    }
}

/// Entrywise analytic covariance `(k, j) -> sigma(k, j)` with 1-based indices.
pub struct FnCovariance {
    entry: Box<dyn Fn(usize, usize) -> f64 + Send + Sync>,
    max_n: usize,
}

impl FnCovariance {
    pub fn new(max_n: usize, entry: impl Fn(usize, usize) -> f64 + Send + Sync + 'static) -> Self {
        FnCovariance { entry: Box::new(entry), max_n: max_n.min(MAX_DENSE_N) }
    }

    pub fn identity(max_n: usize) -> Self {
        Self::new(max_n, |k, j| if k == j { 1.0 } else { 0.0 })
    }

    /// `sigma(k, j)`, 1-based.
    pub fn entry(&self, k: usize, j: usize) -> f64 {
        (self.entry)(k, j)
    }

    /// Exchangeable covariance: `sigma2` on the diagonal, `rho` elsewhere.
    pub fn exchangeable(sigma2: f64, rho: f64, max_n: usize) -> Self {
        Self::new(max_n, move |k, j| if k == j { sigma2 } else { rho })
    }
}

impl std::fmt::Debug for FnCovariance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnCovariance").field("max_n", &self.max_n).finish_non_exhaustive()
    }
}

impl CovarianceSupplier for FnCovariance {
    fn source(&self) -> CovarianceSource {
        CovarianceSource::Analytic
    }

    fn max_n(&self) -> usize {
        self.max_n
    }

    fn eval(&self, n: usize) -> Result<Array2<f64>> {
        check_n(n, self.max_n)?;
        Ok(Array2::from_shape_fn((n, n), |(i, j)| (self.entry)(i + 1, j + 1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub sym_defect: f64,
    pub min_eig: f64,
    pub psd_tolerance: f64,
    /// Whether `eval(n / 2)` equals the leading block of `eval(n)`.
    pub nested: bool,
}

/// Checks symmetry, positive semidefiniteness and nestedness of `Sigma_n`.
pub fn validate_covariance(
    c: &dyn CovarianceSupplier,
    n: usize,
    tol: &Tolerances,
) -> Result<CovarianceReport> {
    if n > c.max_n() {
        return Err(GfaError::arg(format!("n = {n} exceeds max_n = {}", c.max_n())));
    }
    let sigma = c.eval(n)?;
    check_finite(sigma.view())?;
    let scale = linalg::max_abs(sigma.view());

    let mut sym_defect = 0.0_f64;
    let mut worst = (0, 0);
    for i in 0..n {
        for j in 0..i {
            let d = (sigma[[i, j]] - sigma[[j, i]]).abs();
            if d > sym_defect {
                sym_defect = d;
                worst = (i, j);
            }
        }
    }
    if sym_defect > tol.psd * scale {
        return Err(GfaError::NotSymmetric { row: worst.1, col: worst.0, defect: sym_defect });
    }

    let min_eig = linalg::sym_eigenvalues(sigma.view())?.last().copied().unwrap_or(0.0);
    let psd_tolerance = tol.psd * scale;
    if min_eig < -psd_tolerance {
        return Err(GfaError::NotPsd { min_eig, tolerance: psd_tolerance });
    }

    let nested = if n >= 2 {
        let half = c.eval(n / 2)?;
        half == sigma.slice(s![..n / 2, ..n / 2])
    } else {
        true
    };

    Ok(CovarianceReport { n, sym_defect, min_eig, psd_tolerance, nested })
}
