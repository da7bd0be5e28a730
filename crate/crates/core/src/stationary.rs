//! Wold-oriented analysis of one stationary realization: autocovariances,
//! spectral lines, sin/cos amplitude recovery and the PD/PND split.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{GfaError, Result};
use crate::linalg;
use crate::par;
use crate::types::{PdLine, PdLineModel};

/// Default peak threshold, in multiples of the periodogram median.
pub const DEFAULT_LINE_THRESHOLD: f64 = 20.0;
/// Smallest series length accepted by [`detect_lines`].
pub const MIN_LINE_SERIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutocovEstimator {
    /// Divide by `N`; Toeplitz truncations are PSD.
    #[default]
    Biased,
    /// Divide by `N - h`.
    Unbiased,
}

/// Sample autocovariances `sigma(0..=L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovEstimate {
    pub lags: Vec<f64>,
    pub n_used: usize,
    pub estimator: AutocovEstimator,
}

impl AutocovEstimate {
    pub fn max_lag(&self) -> usize {
        self.lags.len() - 1
    }

    /// `n x n` Toeplitz matrix of the lags (`n <= L + 1`).
    pub fn toeplitz(&self, n: usize) -> Result<Array2<f64>> {
        if n == 0 || n > self.lags.len() {
            return Err(GfaError::arg(format!("toeplitz size {n} outside 1..={}", self.lags.len())));
        }
        Ok(linalg::toeplitz(&self.lags, n))
    }
}

/// Raw lagged products `sum_k y(k + h) y(k)` for `h = 0..=max_lag`.
pub(crate) fn lagged_products(y: ArrayView1<f64>, max_lag: usize) -> Vec<f64> {
    let n = y.len();
    if max_lag <= 32 {
        return (0..=max_lag)
            .map(|h| (0..n - h).map(|k| y[k + h] * y[k]).sum())
            .collect();
    }
    let nfft = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let mut buf: Vec<Complex64> = y.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    fwd.process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    buf[..=max_lag].iter().map(|c| c.re / nfft as f64).collect()
}

/// Sample autocovariance of one realization, no mean removal.
pub fn sample_autocov(series: ArrayView1<f64>, max_lag: usize, estimator: AutocovEstimator) -> Result<AutocovEstimate> {
    let n = series.len();
    if max_lag >= n {
        return Err(GfaError::arg(format!("max lag {max_lag} must be below the series length {n}")));
    }
    if let Some(col) = series.iter().position(|x| !x.is_finite()) {
        return Err(GfaError::NonFinite { row: 0, col });
    }
    let raw = lagged_products(series, max_lag);
    let lags: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(h, s)| match estimator {
            AutocovEstimator::Biased => s / n as f64,
            AutocovEstimator::Unbiased => s / (n - h) as f64,
        })
        .collect();
    Ok(AutocovEstimate { lags, n_used: n, estimator })
}

/// Periodogram `|sum_k y(k) e^{-i w k}|^2 / N` on `w_j = 2 pi j / nfft`, `j = 0..=nfft/2`.
pub fn periodogram(series: ArrayView1<f64>, nfft: usize) -> Vec<f64> {
    let n = series.len();
    let nfft = nfft.max(n);
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(nfft).process(&mut buf);
    buf[..=nfft / 2].iter().map(|c| c.norm_sqr() / n as f64).collect()
}

/// Periodogram at one arbitrary frequency.
pub fn periodogram_at(series: ArrayView1<f64>, omega: f64) -> f64 {
    let (c, s) = trig_sums(series, omega);
    (c * c + s * s) / series.len() as f64
}

fn trig_sums(series: ArrayView1<f64>, omega: f64) -> (f64, f64) {
    series.iter().enumerate().fold((0.0, 0.0), |(c, s), (i, &y)| {
        let arg = omega * (i + 1) as f64;
        (c + y * arg.cos(), s + y * arg.sin())
    })
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Running median of `p` over `+-half_width` neighbours, evaluated every
/// `half_width / 8` bins and held in between.
pub(crate) fn local_median(p: &[f64], half_width: usize) -> Vec<f64> {
    let stride = (half_width / 8).max(1);
    let centres: Vec<usize> = (0..p.len()).step_by(stride).collect();
    let meds = par::map_slice(&centres, |&c| {
        median(&p[c.saturating_sub(half_width)..=(c + half_width).min(p.len() - 1)])
    });
    (0..p.len()).map(|j| meds[((j + stride / 2) / stride).min(meds.len() - 1)]).collect()
}

/// Half-width, in zero-padded bins, of the neighbourhood used for the noise floor.
fn floor_half_width(nfft: usize) -> usize {
    (nfft / 64).max(64)
}

/// Parzen lag window on `[0, 1]`.
fn parzen(u: f64) -> f64 {
    let u = u.abs();
    if u <= 0.5 {
        1.0 - 6.0 * u * u + 6.0 * u * u * u
    } else if u <= 1.0 {
        2.0 * (1.0 - u).powi(3)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiagnostic {
    pub window: usize,
    /// `sup_w S_hat(w)` of the lag-window estimate.
    pub sup_density: f64,
    pub argmax_omega: f64,
    /// Same statistic with half the window.
    pub sup_density_half_window: f64,
    /// Largest eigenvalue of the Toeplitz matrix of the windowed lags.
    pub lambda1: f64,
    pub toeplitz_n: usize,
    /// `lambda1 <= sup_density * (1 + eps_szego)`.
    pub szego_ok: bool,
    pub eps_szego: f64,
    /// Density estimate grows with the window: a spectral line rather than a density.
    pub line_suspect: bool,
}

/// Slack for the grid maximum in the Toeplitz/symbol bound.
pub const EPS_SZEGO: f64 = 1e-2;

fn windowed_lags(a: &AutocovEstimate, window: usize) -> Vec<f64> {
    (0..=a.max_lag())
        .map(|h| a.lags[h] * parzen(h as f64 / window as f64))
        .collect()
}

fn density_sup(c: &[f64], window: usize) -> (f64, f64) {
    let points = (16 * window).max(512);
    let used = window.min(c.len());
    (0..=points)
        .map(|j| {
            let w = PI * j as f64 / points as f64;
            let s = c[0] + 2.0 * (1..used).map(|h| c[h] * (w * h as f64).cos()).sum::<f64>();
            (s, w)
        })
        .fold((f64::NEG_INFINITY, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc })
}

/// Lag-window (Parzen) spectral density estimate, its supremum, and the
/// operator-norm proxy `lambda_1` of the corresponding Toeplitz matrix.
pub fn spectral_density_diagnostic(a: &AutocovEstimate, window: usize) -> Result<SpectralDiagnostic> {
    if window < 4 || window > a.lags.len() {
        return Err(GfaError::arg(format!("window {window} must be in 4..={}", a.lags.len())));
    }
    let c = windowed_lags(a, window);
    let (sup_density, argmax_omega) = density_sup(&c, window);
    let half = windowed_lags(a, window / 2);
    let (sup_half, _) = density_sup(&half, window / 2);
    let toeplitz_n = a.lags.len().min(1024).max(window);
    let t = linalg::toeplitz(&c, toeplitz_n);
    let lambda1 = linalg::sym_eigenvalues(t.view())?[0];
    Ok(SpectralDiagnostic {
        window,
        sup_density,
        argmax_omega,
        sup_density_half_window: sup_half,
        lambda1,
        toeplitz_n,
        szego_ok: lambda1 <= sup_density.abs() * (1.0 + EPS_SZEGO),
        eps_szego: EPS_SZEGO,
        line_suspect: sup_density > 1.5 * sup_half,
    })
}

/// Amplitudes recovered by sin/cos averaging sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Amplitudes {
    pub omega: f64,
    /// Cosine amplitude.
    pub v: f64,
    /// Sine amplitude; `None` near 0 and pi where the sine channel degenerates.
    pub w: Option<f64>,
}

impl Amplitudes {
    pub fn sine(&self) -> Result<f64> {
        self.w.ok_or_else(|| {
            GfaError::arg(format!("sine amplitude is undefined at omega = {} (endpoint zone)", self.omega))
        })
    }
}

/// Half-width of the endpoint zones around 0 and pi where only the cosine
/// channel is estimated.
pub fn endpoint_zone(n: usize) -> f64 {
    4.0 * PI / n as f64
}

/// `w_hat = (2/n) sum sin(w k) y(k)`, `v_hat = (2/n) sum cos(w k) y(k)`, `k = 1..=n`.
///
/// Within [`endpoint_zone`] of 0 or pi the cosine amplitude is the least
/// squares fit `sum cos(w k) y(k) / sum cos^2(w k)` (the sample mean at
/// `w = 0`) and the sine amplitude is undefined.
pub fn recover_amplitudes(series: ArrayView1<f64>, omega: f64, n: usize) -> Result<Amplitudes> {
    if n == 0 || n > series.len() {
        return Err(GfaError::arg(format!("window {n} must be in 1..={}", series.len())));
    }
    if !(0.0..PI).contains(&omega) {
        return Err(GfaError::arg(format!("frequency {omega} outside [0, pi)")));
    }
    let y = series.slice(ndarray::s![..n]);
    let zone = endpoint_zone(n);
    if omega < zone || omega > PI - zone {
        let (num, den) = y.iter().enumerate().fold((0.0, 0.0), |(num, den), (i, &v)| {
            let c = (omega * (i + 1) as f64).cos();
            (num + c * v, den + c * c)
        });
        return Ok(Amplitudes { omega, v: num / den, w: None });
    }
    let (c, s) = trig_sums(y, omega);
    let scale = 2.0 / n as f64;
    Ok(Amplitudes { omega, v: scale * c, w: Some(scale * s) })
}

fn refine_quadratic(p: &[f64], j: usize, nfft: usize) -> f64 {
    let at = |i: isize| -> f64 {
        // periodogram is even around 0 and around pi
        let m = nfft as isize / 2;
        let idx = if i < 0 { -i } else if i > m { 2 * m - i } else { i };
        p[idx as usize]
    };
    let j = j as isize;
    let (a, b, c) = (at(j - 1), at(j), at(j + 1));
    let denom = a - 2.0 * b + c;
    let delta = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    2.0 * PI * (j as f64 + delta.clamp(-0.5, 0.5)) / nfft as f64
}

/// Newton steps on the continuous periodogram, confined to `+-half_bin`.
fn refine_newton(y: ArrayView1<f64>, omega0: f64, half_bin: f64) -> f64 {
    let mut omega = omega0;
    for _ in 0..8 {
        let mut acc = [0.0_f64; 6];
        for (i, &v) in y.iter().enumerate() {
            let k = (i + 1) as f64;
            let (s, c) = (omega * k).sin_cos();
            acc[0] += v * c;
            acc[1] += v * s;
            acc[2] -= k * v * s;
            acc[3] += k * v * c;
            acc[4] -= k * k * v * c;
            acc[5] -= k * k * v * s;
        }
        let [cs, sn, dc, ds, ddc, dds] = acc;
        let d1 = 2.0 * (cs * dc + sn * ds);
        let d2 = 2.0 * (dc * dc + cs * ddc + ds * ds + sn * dds);
        if d2 >= 0.0 {
            break;
        }
        let step = (-d1 / d2).clamp(-half_bin, half_bin);
        let next = (omega + step).clamp(omega0 - half_bin, omega0 + half_bin);
        if (next - omega).abs() < 1e-15 {
            omega = next;
            break;
        }
        omega = next;
    }
    omega
}

fn subtract_line(residual: &mut Array1<f64>, omega: f64) -> Result<()> {
    let n = residual.len();
    let amp = recover_amplitudes(residual.view(), omega, n)?;
    let zone = endpoint_zone(n);
    if amp.w.is_some() {
        // exact two-channel least squares for the subtraction step
        let (mut scc, mut sss, mut scs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, &v) in residual.iter().enumerate() {
            let (s, c) = (omega * (i + 1) as f64).sin_cos();
            scc += c * c;
            sss += s * s;
            scs += c * s;
            yc += c * v;
            ys += s * v;
        }
        let det = scc * sss - scs * scs;
        let (a, b) = ((yc * sss - ys * scs) / det, (ys * scc - yc * scs) / det);
        for (i, r) in residual.iter_mut().enumerate() {
            let (s, c) = (omega * (i + 1) as f64).sin_cos();
            *r -= a * c + b * s;
        }
    } else {
        debug_assert!(omega < zone || omega > PI - zone);
        for (i, r) in residual.iter_mut().enumerate() {
            *r -= amp.v * (omega * (i + 1) as f64).cos();
        }
    }
    Ok(())
}

/// Detects spectral lines as periodogram peaks above `threshold * median`.
///
/// The median is local: it is taken over a neighbourhood of `nfft / 64`
/// padded bins of the input periodogram, so coloured noise raises the floor
/// where its density is high.
///
/// Peaks are taken one at a time from the residual after removing the lines
/// already found, so sidelobes of a strong line are not reported as lines.
/// Each peak is located on a 2x zero-padded FFT grid, refined by 3-point
/// quadratic interpolation and polished by Newton steps on the continuous
/// periodogram. Frequencies are returned ascending.
pub fn detect_lines(series: ArrayView1<f64>, max_lines: usize, threshold: f64) -> Result<Vec<f64>> {
    let n = series.len();
    if n < MIN_LINE_SERIES {
        return Err(GfaError::arg(format!("line detection needs N >= {MIN_LINE_SERIES}, got {n}")));
    }
    if let Some(col) = series.iter().position(|x| !x.is_finite()) {
        return Err(GfaError::NonFinite { row: 0, col });
    }
    let nfft = (2 * n).next_power_of_two();
    let bin = 2.0 * PI / n as f64;
    let floor = local_median(&periodogram(series, nfft), floor_half_width(nfft));
    let mut residual = series.to_owned();
    let mut found: Vec<f64> = Vec::new();
    while found.len() < max_lines {
        let p = periodogram(residual.view(), nfft);
        let (j, peak) = p
            .iter()
            .zip(&floor)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, (&v, &f))| {
                let r = v / f.max(f64::MIN_POSITIVE);
                if r > acc.1 { (i, r) } else { acc }
            });
        if !(peak > threshold) {
            break;
        }
        let coarse = refine_quadratic(&p, j, nfft);
        let omega = refine_newton(residual.view(), coarse, 0.5 * bin).clamp(0.0, PI);
        if omega >= PI || found.iter().any(|&f| (f - omega).abs() < bin) {
            break;
        }
        subtract_line(&mut residual, omega)?;
        found.push(omega);
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(found)
}

/// Purely deterministic / purely non-deterministic split of one realization.
#[derive(Debug, Clone)]
pub struct WoldSplit {
    pub pd: Array1<f64>,
    pub pnd: Array1<f64>,
    pub model: PdLineModel,
    /// Largest residual periodogram within one Fourier bin of each line, in
    /// multiples of the local residual median.
    pub residual_peaks: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `pd(k) = sum_i v_i cos(w_i k) + w_i sin(w_i k)` with amplitudes from
/// [`recover_amplitudes`] over the full window; `pnd = series - pd`.
pub fn wold_split(series: ArrayView1<f64>, lines: &[f64], threshold: f64) -> Result<WoldSplit> {
    let n = series.len();
    if n == 0 {
        return Err(GfaError::arg("empty series"));
    }
    let mut sorted = lines.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let amps: Vec<Amplitudes> = par::map_slice(&sorted, |&omega| recover_amplitudes(series, omega, n))
        .into_iter()
        .collect::<Result<_>>()?;
    let model = PdLineModel::new(
        amps.iter()
            .map(|a| PdLine { omega: a.omega, v: vec![a.v], w: a.w.map(|w| vec![w]) })
            .collect(),
    )?;
    let pd = model.reconstruct(n, 0);
    let pnd = &series - &pd;

    let mut residual_peaks = Vec::with_capacity(sorted.len());
    let mut warnings = Vec::new();
    if !sorted.is_empty() {
        let nfft = (2 * n).next_power_of_two();
        let p = periodogram(pnd.view(), nfft);
        let floor = local_median(&p, floor_half_width(nfft));
        for &omega in &sorted {
            let centre = (omega * nfft as f64 / (2.0 * PI)).round() as usize;
            let reach = nfft / n;
            let local = p[centre.saturating_sub(reach)..=(centre + reach).min(nfft / 2)]
                .iter()
                .fold(periodogram_at(pnd.view(), omega), |a, &x| a.max(x));
            let ratio = local / floor[centre.min(nfft / 2)].max(f64::MIN_POSITIVE);
            if ratio > threshold {
                warnings.push(format!("incomplete split: residual still peaked at omega = {omega}"));
            }
            residual_peaks.push(ratio);
        }
    }
    Ok(WoldSplit { pd, pnd, model, residual_peaks, warnings })
}
