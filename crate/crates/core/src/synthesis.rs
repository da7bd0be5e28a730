//! Ground-truth generators for every scenario: q-aggregate sequences,
//! idiosyncratic noises, purely deterministic stationary signals and
//! separable space-time fields.
//!
//! All randomness comes from one 64-bit seed. Each column (replicate or time
//! point) and each purpose uses its own ChaCha stream, so generation is
//! independent of evaluation order and of the `parallel` feature.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::{FnCovariance, ToeplitzCovariance, CovarianceSource};
use crate::error::{GfaError, Result};
use crate::par;
use crate::types::{EnsembleKind, PdLine, PdLineModel, SampleEnsemble, SeedInfo, SeparableField, TimeProcess};

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Factors = 1,
    Noise = 2,
    Amplitudes = 3,
    Space = 4,
    Time = 5,
}

fn stream_rng(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

fn normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// Deterministic loading sequence `f(k)`, `k = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LoadingSpec {
    Constant(f64),
    /// `(-1)^floor((k-1)/period)`.
    SignPattern { period: usize },
    /// `cos(theta k)`.
    Cosine { theta: f64 },
    /// `lambda^k`; square-summable for `|lambda| < 1`.
    Geometric { lambda: f64 },
    /// Explicit values; entries past the end repeat the last value.
    Custom(Vec<f64>),
}

impl LoadingSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LoadingSpec::SignPattern { period: 0 } => Err(GfaError::arg("sign_pattern period must be >= 1")),
            LoadingSpec::Custom(v) if v.is_empty() => Err(GfaError::arg("custom loading needs at least one value")),
            LoadingSpec::Custom(v) if v.iter().any(|x| !x.is_finite()) => {
                Err(GfaError::arg("custom loading has non-finite values"))
            }
            _ => Ok(()),
        }
    }

    /// `f(k)` for 1-based `k`.
    pub fn value(&self, k: usize) -> f64 {
        match self {
            LoadingSpec::Constant(c) => *c,
            LoadingSpec::SignPattern { period } => {
                if ((k - 1) / period).is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            LoadingSpec::Cosine { theta } => (theta * k as f64).cos(),
            LoadingSpec::Geometric { lambda } => lambda.powi(k as i32),
            LoadingSpec::Custom(v) => *v.get(k - 1).unwrap_or_else(|| v.last().expect("validated non-empty")),
        }
    }

    /// `(f(1), ..., f(n))`.
    pub fn vector(&self, n: usize) -> Array1<f64> {
        Array1::from_shape_fn(n, |i| self.value(i + 1))
    }

    pub fn square_summable(&self) -> bool {
        match self {
            LoadingSpec::Geometric { lambda } => lambda.abs() < 1.0,
            LoadingSpec::Constant(c) => *c == 0.0,
            LoadingSpec::Custom(v) => v.last() == Some(&0.0),
            _ => false,
        }
    }
}

/// `N x q` matrix with columns `f_i(1..=N)`.
pub fn loading_matrix(specs: &[LoadingSpec], n: usize) -> Array2<f64> {
    let mut f = Array2::zeros((n, specs.len()));
    for (i, spec) in specs.iter().enumerate() {
        f.column_mut(i).assign(&spec.vector(n));
    }
    f
}

/// Idiosyncratic noise families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    White { sigma: f64 },
    /// Independent entries with `Var y(k) = k`: unbounded variance.
    WhiteGrowing,
    /// `y(k) = sum_i c_i e(k - i)` with unit white `e`.
    MovingAverage { coeffs: Vec<f64> },
    /// Moving average with coefficients `decay^i`, `i = 0..=bandwidth`;
    /// the covariance is banded with the given bandwidth.
    Banded { bandwidth: usize, decay: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::White { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(GfaError::arg(format!("white noise sigma must be >= 0, got {sigma}")))
            }
            NoiseSpec::MovingAverage { coeffs } if coeffs.is_empty() => {
                Err(GfaError::arg("moving_average needs at least one coefficient"))
            }
            NoiseSpec::MovingAverage { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                Err(GfaError::arg("moving_average coefficients must be finite"))
            }
            NoiseSpec::Banded { decay, .. } if !decay.is_finite() => Err(GfaError::arg("banded decay must be finite")),
            _ => Ok(()),
        }
    }

    fn ma_coeffs(&self) -> Option<Vec<f64>> {
        match self {
            NoiseSpec::MovingAverage { coeffs } => Some(coeffs.clone()),
            NoiseSpec::Banded { bandwidth, decay } => Some((0..=*bandwidth).map(|i| decay.powi(i as i32)).collect()),
            _ => None,
        }
    }

    /// Whether the covariance operator is bounded on l2.
    pub fn is_bounded(&self) -> bool {
        !matches!(self, NoiseSpec::WhiteGrowing)
    }

    /// Autocovariance `sigma(h)` for stationary families; `None` for
    /// `WhiteGrowing`.
    pub fn autocovariance(&self, max_lag: usize) -> Option<Vec<f64>> {
        match self {
            NoiseSpec::White { sigma } => {
                let mut l = vec![0.0; max_lag + 1];
                l[0] = sigma * sigma;
                Some(l)
            }
            NoiseSpec::WhiteGrowing => None,
            _ => {
                let c = self.ma_coeffs().expect("moving-average family");
                Some(
                    (0..=max_lag)
                        .map(|h| c.iter().zip(c.iter().skip(h)).map(|(a, b)| a * b).sum())
                        .collect(),
                )
            }
        }
    }

    /// `sup_omega S(omega)` of the stationary families, where
    /// `S(omega) = sum_h sigma(h) e^{-i omega h}`.
    pub fn spectral_sup(&self) -> Option<f64> {
        match self {
            NoiseSpec::White { sigma } => Some(sigma * sigma),
            NoiseSpec::WhiteGrowing => None,
            _ => {
                let c = self.ma_coeffs().expect("moving-average family");
                let grid = 8192;
                (0..=grid)
                    .map(|j| {
                        let w = std::f64::consts::PI * j as f64 / grid as f64;
                        let (re, im) = c.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, ci)| {
                            (re + ci * (w * i as f64).cos(), im - ci * (w * i as f64).sin())
                        });
                        re * re + im * im
                    })
                    .reduce(f64::max)
            }
        }
    }

    /// Analytic covariance of `y(1..=N)`.
    pub fn covariance(&self, max_n: usize) -> FnCovariance {
        match self.autocovariance(max_n) {
            Some(lags) => FnCovariance::new(max_n, move |k, j| lags[k.abs_diff(j)]),
            None => FnCovariance::new(max_n, |k, j| if k == j { k as f64 } else { 0.0 }),
        }
    }

    /// One draw of `(y(1), ..., y(n))` from `rng`.
    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        match self {
            NoiseSpec::White { sigma } => normals(rng, n).into_iter().map(|e| sigma * e).collect(),
            NoiseSpec::WhiteGrowing => normals(rng, n)
                .into_iter()
                .enumerate()
                .map(|(i, e)| ((i + 1) as f64).sqrt() * e)
                .collect(),
            _ => {
                let c = self.ma_coeffs().expect("moving-average family");
                let lag = c.len() - 1;
                let e = normals(rng, n + lag);
                Array1::from_shape_fn(n, |k| c.iter().enumerate().map(|(i, ci)| ci * e[k + lag - i]).sum())
            }
        }
    }
}

/// Analytic covariance `F F^T + Sigma_noise` of a factor model.
pub fn model_covariance(specs: &[LoadingSpec], noise: Option<&NoiseSpec>, max_n: usize) -> FnCovariance {
    let specs = specs.to_vec();
    let noise_cov = noise.map(|n| n.covariance(max_n));
    FnCovariance::new(max_n, move |k, j| {
        let agg: f64 = specs.iter().map(|s| s.value(k) * s.value(j)).sum();
        let idio = noise_cov.as_ref().map(|c| c.entry(k, j)).unwrap_or(0.0);
        agg + idio
    })
}

/// Stationary Toeplitz covariance of a bounded noise family.
pub fn noise_toeplitz(noise: &NoiseSpec, max_n: usize) -> Result<ToeplitzCovariance> {
    let lags = noise
        .autocovariance(max_n - 1)
        .ok_or_else(|| GfaError::arg("white_growing noise is not stationary"))?;
    ToeplitzCovariance::new(lags, CovarianceSource::Analytic)
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(GfaError::arg(format!("sizes must be positive, got N = {n}, M = {m}")));
    }
    Ok(())
}

fn check_distinct<T: PartialEq>(items: &[T], what: &str) -> Result<()> {
    for (i, a) in items.iter().enumerate() {
        if items[..i].contains(a) {
            return Err(GfaError::arg(format!("duplicate {what} at position {i}")));
        }
    }
    Ok(())
}

fn seed_info(seed: u64, generator: &str) -> SeedInfo {
    SeedInfo { seed, generator: generator.to_string() }
}

fn columns_to_matrix(n: usize, cols: Vec<Array1<f64>>) -> Array2<f64> {
    let mut out = Array2::zeros((n, cols.len()));
    for (j, c) in cols.into_iter().enumerate() {
        out.column_mut(j).assign(&c);
    }
    out
}

/// Data and ground truth of a synthetic factor model.
#[derive(Debug, Clone)]
pub struct AggregateSample {
    pub ensemble: SampleEnsemble,
    /// `q x M` true factor draws.
    pub factors: Array2<f64>,
    /// `N x q` true loadings.
    pub loadings: Array2<f64>,
}

/// `y = F x` for given factor draws (`q x M`).
pub fn aggregate_from_factors(specs: &[LoadingSpec], n: usize, factors: &Array2<f64>) -> Result<Array2<f64>> {
    if factors.nrows() != specs.len() {
        return Err(GfaError::arg("factor rows must match the number of loadings"));
    }
    Ok(loading_matrix(specs, n).dot(factors))
}

/// q-aggregate ensemble `y(k) = sum_i f_i(k) x_i` with i.i.d. standard normal
/// factor draws per replicate.
pub fn gen_aggregate(specs: &[LoadingSpec], n: usize, m: usize, seed: u64) -> Result<AggregateSample> {
    check_dims(n, m)?;
    if specs.is_empty() {
        return Err(GfaError::arg("at least one loading is required"));
    }
    for s in specs {
        s.validate()?;
    }
    check_distinct(specs, "loading spec")?;
    let q = specs.len();
    let cols = par::map_range(m, |j| Array1::from(normals(&mut stream_rng(seed, Purpose::Factors, j as u64), q)));
    let factors = columns_to_matrix(q, cols);
    let data = aggregate_from_factors(specs, n, &factors)?;
    Ok(AggregateSample {
        ensemble: SampleEnsemble::new(data, EnsembleKind::Replicates)?
            .with_seed_info(seed_info(seed, "aggregate")),
        factors,
        loadings: loading_matrix(specs, n),
    })
}

/// Idiosyncratic ensemble: i.i.d. columns with the covariance of `spec`.
pub fn gen_idiosyncratic(spec: &NoiseSpec, n: usize, m: usize, seed: u64) -> Result<SampleEnsemble> {
    check_dims(n, m)?;
    spec.validate()?;
    let cols = par::map_range(m, |j| spec.draw(n, &mut stream_rng(seed, Purpose::Noise, j as u64)));
    Ok(SampleEnsemble::new(columns_to_matrix(n, cols), EnsembleKind::Replicates)?
        .with_seed_info(seed_info(seed, "idiosyncratic")))
}

/// Aggregate plus independent idiosyncratic noise from a single seed.
pub fn gen_factor_model(
    specs: &[LoadingSpec],
    noise: &NoiseSpec,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<AggregateSample> {
    let agg = gen_aggregate(specs, n, m, seed)?;
    let idio = gen_idiosyncratic(noise, n, m, seed)?;
    let data = agg.ensemble.data() + idio.data();
    Ok(AggregateSample {
        ensemble: SampleEnsemble::new(data, EnsembleKind::Replicates)?
            .with_seed_info(seed_info(seed, "factor_model")),
        factors: agg.factors,
        loadings: agg.loadings,
    })
}

/// One spectral line of a synthetic PD signal: frequency and the common
/// variance of its cosine and sine amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub omega: f64,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct PdSample {
    pub ensemble: SampleEnsemble,
    /// True amplitude draws, one entry per replicate.
    pub truth: PdLineModel,
}

/// `y(k) = sum_i v_i cos(omega_i k) + w_i sin(omega_i k)`, `k = 1..=n`.
pub fn pd_signal(lines: &[(f64, f64, f64)], n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| {
        let k = (i + 1) as f64;
        lines.iter().map(|&(omega, v, w)| v * (omega * k).cos() + w * (omega * k).sin()).sum()
    })
}

/// Purely deterministic stationary ensemble with random line amplitudes.
pub fn gen_pd_stationary(lines: &[LineSpec], n: usize, m: usize, seed: u64) -> Result<PdSample> {
    check_dims(n, m)?;
    for l in lines {
        if !(0.0..std::f64::consts::PI).contains(&l.omega) {
            return Err(GfaError::arg(format!("line frequency {} outside [0, pi)", l.omega)));
        }
        if !(l.variance >= 0.0) {
            return Err(GfaError::arg("line amplitude variance must be >= 0"));
        }
    }
    check_distinct(&lines.iter().map(|l| l.omega).collect::<Vec<_>>(), "line frequency")?;

    let draws: Vec<Vec<(f64, f64)>> = par::map_range(m, |j| {
        let mut rng = stream_rng(seed, Purpose::Amplitudes, j as u64);
        lines
            .iter()
            .map(|l| {
                let sd = l.variance.sqrt();
                let v: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                let w: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                (v, w)
            })
            .collect()
    });
    let cols: Vec<Array1<f64>> = draws
        .iter()
        .map(|d| {
            let spec: Vec<(f64, f64, f64)> = lines.iter().zip(d).map(|(l, &(v, w))| (l.omega, v, w)).collect();
            pd_signal(&spec, n)
        })
        .collect();
    let truth = PdLineModel::new(
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| PdLine {
                omega: l.omega,
                v: draws.iter().map(|d| d[i].0).collect(),
                w: Some(draws.iter().map(|d| d[i].1).collect()),
            })
            .collect(),
    )?;
    Ok(PdSample {
        ensemble: SampleEnsemble::new(columns_to_matrix(n, cols), EnsembleKind::Replicates)?
            .with_seed_info(seed_info(seed, "pd_stationary")),
        truth,
    })
}

/// Space process `v(k) = sum_i f_i(k) z_i + v_idio(k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub loadings: Vec<LoadingSpec>,
    pub noise: Option<NoiseSpec>,
}

impl SpaceSpec {
    /// Exchangeable space process with variance `sigma2` and off-diagonal
    /// covariance `rho > 0`: loading `sqrt(rho)` plus white residual of
    /// variance `sigma2 - rho`.
    pub fn exchangeable(sigma2: f64, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && sigma2 > rho) {
            return Err(GfaError::arg(format!("exchangeable process needs sigma2 > rho > 0, got {sigma2}, {rho}")));
        }
        Ok(SpaceSpec {
            loadings: vec![LoadingSpec::Constant(rho.sqrt())],
            noise: Some(NoiseSpec::White { sigma: (sigma2 - rho).sqrt() }),
        })
    }
}

#[derive(Debug, Clone)]
pub struct FieldSample {
    pub field: SeparableField,
    /// Space draw `v(1..=N)`.
    pub v: Array1<f64>,
    /// Time draw `u(1..=T)`.
    pub u: Array1<f64>,
    /// Space factors `z` (length q).
    pub z: Array1<f64>,
    /// `N x q` true space loadings.
    pub loadings: Array2<f64>,
    /// Flocking component `F z u(t)`, `N x T`.
    pub flock: Array2<f64>,
}

impl TimeProcess {
    pub fn validate(&self) -> Result<()> {
        match self {
            TimeProcess::Ar1 { phi } if !(phi.abs() < 1.0) => {
                Err(GfaError::arg(format!("AR(1) coefficient must satisfy |phi| < 1, got {phi}")))
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, t: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        match *self {
            TimeProcess::Iid => Array1::from(normals(rng, t)),
            TimeProcess::Ar1 { phi } => {
                let e = normals(rng, t);
                let innov = (1.0 - phi * phi).sqrt();
                let mut u = Array1::zeros(t);
                u[0] = e[0];
                for i in 1..t {
                    u[i] = phi * u[i - 1] + innov * e[i];
                }
                u
            }
            TimeProcess::Sinusoid { omega } => {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Array1::from_shape_fn(t, |i| std::f64::consts::SQRT_2 * (omega * (i + 1) as f64 + phase).sin())
            }
        }
    }
}

/// Separable field `y(k, t) = v(k) u(t)` with one space draw per field.
pub fn gen_separable_field(space: &SpaceSpec, time: &TimeProcess, n: usize, t: usize, seed: u64) -> Result<FieldSample> {
    if t == 0 {
        return Err(GfaError::arg("T must be positive"));
    }
    check_dims(n, t)?;
    for l in &space.loadings {
        l.validate()?;
    }
    if let Some(noise) = &space.noise {
        noise.validate()?;
    }
    time.validate()?;

    let q = space.loadings.len();
    let mut zrng = stream_rng(seed, Purpose::Factors, 0);
    let z = Array1::from(normals(&mut zrng, q));
    let loadings = loading_matrix(&space.loadings, n);
    let aggregate_v = loadings.dot(&z);
    let idio_v = match &space.noise {
        Some(noise) => noise.draw(n, &mut stream_rng(seed, Purpose::Space, 0)),
        None => Array1::zeros(n),
    };
    let v = &aggregate_v + &idio_v;
    let u = time.draw(t, &mut stream_rng(seed, Purpose::Time, 0));

    let flock = aggregate_v.view().insert_axis(Axis(1)).dot(&u.view().insert_axis(Axis(0)));
    let mut field = SeparableField::from_parts(&v, &u)?;
    field.time_model = Some(*time);
    if q > 0 || space.noise.is_some() {
        use crate::covariance::CovarianceSupplier;
        if n <= 2048 {
            field.space_model = Some(model_covariance(&space.loadings, space.noise.as_ref(), n).eval(n)?);
        }
    }
    Ok(FieldSample { field, v, u, z, loadings, flock })
}
