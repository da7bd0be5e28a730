//! Acceptance criteria. Each test prints one PASS/FAIL line; run with
//! `--nocapture` to see them and `--include-ignored` for the criterion that
//! is known not to hold (see the README).

use std::cell::Cell;
use std::time::{Duration, Instant};

use ndarray::{s, Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use gfa_core::covariance::DenseCovariance;
use gfa_core::field::{self, FlockParams};
use gfa_core::linalg;
use gfa_core::spectral::{self, DetectionParams, Whitening, DEFAULT_GAMMA_SLI};
use gfa_core::stationary;
use gfa_core::synthesis::{self, LineSpec, LoadingSpec, NoiseSpec, SpaceSpec};
use gfa_core::{AveragingSequence, CovarianceSupplier, FnCovariance, SliVerdict, TimeProcess, Tolerances};

fn verdict(id: &str, ok: bool, detail: &str, elapsed: Duration, limit_s: f64) -> bool {
    let in_time = elapsed.as_secs_f64() <= limit_s;
    let pass = ok && in_time;
    println!(
        "criterion {id} [{}] {detail}; runtime {:.2} s (limit {limit_s} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn two_pd() -> Vec<LoadingSpec> {
    vec![LoadingSpec::Constant(1.0), LoadingSpec::Custom((1..=64).map(|k| 1.0 - 0.5f64.powi(k)).collect())]
}

/// Second eigenvalue of the 2x2 Gramian `F^T F` at `n`, and the strong-LI verdict.
fn two_pd_statistics(n: usize) -> (f64, SliVerdict) {
    let grid = [n / 8, n / 4, n / 2, n];
    let f = synthesis::loading_matrix(&two_pd(), n);
    let gram = f.t().dot(&f);
    let lambda2 = linalg::sym_eigenvalues(gram.view()).unwrap()[1];
    let per_grid: Vec<Array2<f64>> = grid.iter().map(|&m| f.slice(s![..m, ..]).to_owned()).collect();
    let sli = spectral::strong_li_diagnostic(&per_grid, DEFAULT_GAMMA_SLI, &Tolerances::default()).unwrap();
    (lambda2, sli.verdict)
}

#[test]
#[ignore = "the stated limit 5/3 does not hold; the Gramian's second eigenvalue tends to 1/6"]
fn criterion_1_two_pd_counterexample() {
    let start = Instant::now();
    let (lambda2, sli) = two_pd_statistics(10_000);
    let ok = (lambda2 - 5.0 / 3.0).abs() <= 1e-3 && sli == SliVerdict::Weak;
    let detail = format!("lambda2 = {lambda2:.6} (target 5/3 +- 1e-3), strong-LI {sli:?}");
    assert!(verdict("1", ok, &detail, start.elapsed(), 5.0));
}

#[test]
fn criterion_1_attainable_part() {
    // independent oracle: lambda2 = (n t - s^2) / trace + O(1/n^2), s = sum 2^-k, t = sum 4^-k
    let start = Instant::now();
    let n = 10_000;
    let (lambda2, sli) = two_pd_statistics(n);
    let (sn, tn) = (1.0, 1.0 / 3.0);
    let nf = n as f64;
    let trace = 2.0 * nf - 2.0 * sn + tn;
    let det = nf * tn - sn * sn;
    let oracle = 0.5 * (trace - (trace * trace - 4.0 * det).sqrt());
    let ok = (lambda2 - oracle).abs() <= 1e-9 && (lambda2 - 1.0 / 6.0).abs() <= 1e-3 && sli == SliVerdict::Weak;
    let detail = format!("lambda2 = {lambda2:.6} vs closed form {oracle:.6} (limit 1/6), strong-LI {sli:?}");
    assert!(verdict("1 (derived limit + WEAK)", ok, &detail, start.elapsed(), 5.0));
}

#[test]
fn criterion_2_geometric_loading() {
    let start = Instant::now();
    let c = synthesis::model_covariance(&[LoadingSpec::Geometric { lambda: 0.5 }], None, 400);
    let lambda1 = linalg::sym_eigenvalues(c.eval(50).unwrap().view()).unwrap()[0];
    let p = spectral::eigen_profile(&c, &[50, 100, 200, 400], 3, &Tolerances::default()).unwrap();
    let q = spectral::detect_factor_count(&p, &DetectionParams::default()).unwrap().q;
    let ok = (lambda1 - 1.0 / 3.0).abs() <= 1e-6 && q == 0;
    let detail = format!("lambda1(Sigma_50) = {lambda1:.9} (1/3 +- 1e-6), q = {q}");
    assert!(verdict("2", ok, &detail, start.elapsed(), 1.0));
}

#[test]
fn criterion_3_exchangeable() {
    let start = Instant::now();
    let c = FnCovariance::exchangeable(2.0, 1.0, 800);
    let grid = [100, 200, 400, 800];
    let tol = Tolerances::default();
    let (p, dec) = spectral::decompose(&c, &grid, 4, &DetectionParams::default(), &tol).unwrap();
    let mut worst = 0.0_f64;
    for (g, &n) in grid.iter().enumerate() {
        let want1 = 1.0 + n as f64;
        worst = worst.max((p.eigvals[g][0] - want1).abs() / want1);
        worst = worst.max((p.eigvals[g][1] - 1.0).abs());
    }
    let rho_sqrt = 1.0;
    let dist = dec.loadings.iter().fold(0.0_f64, |a, x| a.max((x - rho_sqrt).abs()));
    let ok = worst <= 1e-8 && dec.q == 1 && dist <= 0.05;
    let detail = format!("max rel. eigen error {worst:.2e} (1e-8), q = {}, loading sup distance {dist:.4} (0.05)", dec.q);
    assert!(verdict("3", ok, &detail, start.elapsed(), 5.0));
}

/// Cosines of the principal angles between the row spaces of `a` and `b`.
fn canonical_correlations(a: &Array2<f64>, b: &Array2<f64>) -> Vec<f64> {
    fn orthonormal_rows(m: &Array2<f64>) -> Array2<f64> {
        let mut q = m.clone();
        for i in 0..q.nrows() {
            for j in 0..i {
                let c = q.row(i).dot(&q.row(j));
                let rj = q.row(j).to_owned();
                q.row_mut(i).scaled_add(-c, &rj);
            }
            let norm = q.row(i).dot(&q.row(i)).sqrt();
            q.row_mut(i).mapv_inplace(|x| x / norm);
        }
        q
    }
    let (qa, qb) = (orthonormal_rows(a), orthonormal_rows(b));
    linalg::singular_values(qa.dot(&qb.t()).view()).unwrap()
}

#[test]
fn criterion_4_factor_recovery() {
    let start = Instant::now();
    let specs = [LoadingSpec::Constant(1.0), LoadingSpec::SignPattern { period: 1 }];
    let noise = NoiseSpec::MovingAverage { coeffs: vec![1.0, 0.5] };
    let s = synthesis::gen_factor_model(&specs, &noise, 2000, 500, 20_240_601).unwrap();
    let tol = Tolerances::default();
    let c = DenseCovariance::sample(&s.ensemble).unwrap();
    let grid = spectral::default_grid(2000, 5);
    let (_, dec) = spectral::decompose(&c, &grid, 10, &DetectionParams::default(), &tol).unwrap();
    let mut detail = format!("q = {}", dec.q);
    let mut ok = dec.q == 2;
    if ok {
        let basis = spectral::build_averaging_sequences(dec.loadings.view(), &tol).unwrap();
        let real = spectral::realize_factors(s.ensemble.data().view(), &basis, Whitening::Sample, &tol).unwrap();
        let cc = canonical_correlations(&real.factors, &s.factors);
        ok = cc.iter().all(|&x| x >= 0.95);
        detail = format!("q = 2, canonical correlations {:.4}, {:.4} (>= 0.95)", cc[0], cc[1]);
    }
    assert!(verdict("4", ok, &detail, start.elapsed(), 30.0));
}

#[test]
fn criterion_5_sin_cos_recovery() {
    let start = Instant::now();
    let n = 1 << 14;
    let y = synthesis::pd_signal(&[(1.2, 0.0, 3.0)], n)
        + synthesis::gen_idiosyncratic(&NoiseSpec::White { sigma: 0.5 }, n, 1, 55).unwrap().data().column(0);
    let a = stationary::recover_amplitudes(y.view(), 1.2, n).unwrap();
    let w = a.sine().unwrap();
    let ok = (w - 3.0).abs() <= 0.05 && a.v.abs() <= 0.05;
    let detail = format!("w_hat = {w:.4} (3 +- 0.05), v_hat = {:.4} (0 +- 0.05)", a.v);
    assert!(verdict("5", ok, &detail, start.elapsed(), 2.0));
}

#[test]
fn criterion_6_wold_split() {
    let start = Instant::now();
    let n = 1 << 14;
    let truth = [0.7, 2.1];
    let lines: Vec<LineSpec> = truth.iter().map(|&omega| LineSpec { omega, variance: 1.0 }).collect();
    let pd = synthesis::gen_pd_stationary(&lines, n, 1, 77).unwrap();
    let noise = synthesis::gen_idiosyncratic(&NoiseSpec::MovingAverage { coeffs: vec![1.0, 0.5] }, n, 1, 77).unwrap();
    let y: Array1<f64> = pd.ensemble.data().column(0).to_owned() + noise.data().column(0);

    let found = stationary::detect_lines(y.view(), 8, stationary::DEFAULT_LINE_THRESHOLD).unwrap();
    let split = stationary::wold_split(y.view(), &found, stationary::DEFAULT_LINE_THRESHOLD).unwrap();
    let med = {
        let mut p = stationary::periodogram(split.pnd.view(), (2 * n).next_power_of_two());
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p[p.len() / 2]
    };
    let peaks: Vec<f64> = truth.iter().map(|&w| stationary::periodogram_at(split.pnd.view(), w) / med).collect();
    let (a, b) = (&split.pd, &split.pnd);
    let corr = a.dot(b) / (a.dot(a) * b.dot(b)).sqrt();
    let bound = 5.0 / (n as f64).sqrt();
    let ok = found.len() == 2 && peaks.iter().all(|&p| p < 2.0) && corr.abs() <= bound;
    let detail = format!(
        "{} lines, residual periodogram / median at true lines {:.3}, {:.3} (< 2), corr {corr:.2e} (<= {bound:.2e})",
        found.len(),
        peaks[0],
        peaks[1]
    );
    assert!(verdict("6", ok, &detail, start.elapsed(), 5.0));
}

#[test]
fn criterion_7_flocking() {
    let start = Instant::now();
    let space = SpaceSpec::exchangeable(2.0, 1.0).unwrap();
    let s = synthesis::gen_separable_field(&space, &TimeProcess::Ar1 { phi: 0.9 }, 2000, 200, 7).unwrap();
    let r = field::extract_flock(&s.field, &FlockParams::default(), &Tolerances::default()).unwrap();
    let sep = field::separability_check(&s.field, 10, 10).unwrap();
    let mut detail = format!("q = {}, defect {:.2e} (<= 0.1)", r.q, sep.defect);
    let mut ok = r.q == 1 && sep.defect <= 0.1;
    if r.q == 1 {
        let truth = &s.u * s.z[0];
        let x = r.factors.row(0);
        let corr = x.dot(&truth) / (x.dot(&x) * truth.dot(&truth)).sqrt();
        ok &= corr >= 0.95;
        detail = format!("{detail}, corr(x_hat, z u) = {corr:.4} (>= 0.95)");
    }
    assert!(verdict("7", ok, &detail, start.elapsed(), 30.0));
}

fn runner() -> TestRunner {
    TestRunner::new(Config { cases: 100, failure_persistence: None, ..Config::default() })
}

#[test]
fn criterion_8a_weyl_monotonicity() {
    let start = Instant::now();
    let strategy = (1usize..6, 0u64..u64::MAX);
    let result = runner().run(&strategy, |(rank, seed)| {
        // nested truncations of B B^T + D with a random B
        let b = synthesis::gen_idiosyncratic(&NoiseSpec::White { sigma: 1.0 }, 64, rank, seed).unwrap().into_data();
        let d = synthesis::gen_idiosyncratic(&NoiseSpec::White { sigma: 1.0 }, 64, 1, seed ^ 1).unwrap().into_data();
        let sigma = b.dot(&b.t()) + Array2::from_diag(&d.column(0).mapv(|x| x * x));
        let c = DenseCovariance::new(sigma, gfa_core::CovarianceSource::Analytic).unwrap();
        let p = spectral::eigen_profile(&c, &[4, 8, 16, 32, 64], 4, &Tolerances::default());
        prop_assert!(p.is_ok(), "{:?}", p.err());
        let p = p.unwrap();
        for k in 0..4 {
            let t = p.track(k);
            prop_assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0)));
        }
        Ok(())
    });
    let detail = format!("100 random nested PSD families: {}", result.as_ref().map(|_| "monotone".into()).unwrap_or_else(|e| e.to_string()));
    assert!(verdict("8a", result.is_ok(), &detail, start.elapsed(), 60.0));
}

#[test]
fn criterion_8b_left_inverse_structure() {
    let start = Instant::now();
    let strategy = (1usize..5, 8usize..200, 0u64..u64::MAX);
    let worst = Cell::new(0.0_f64);
    let result = runner().run(&strategy, |(q, n, seed)| {
        let f = synthesis::gen_idiosyncratic(&NoiseSpec::White { sigma: 1.0 }, n, q, seed).unwrap().into_data();
        let b = spectral::build_averaging_sequences(f.view(), &Tolerances::default()).unwrap();
        let af = b.a.dot(&f);
        let mut err = 0.0_f64;
        for i in 0..q {
            err = err.max((af[[i, i]] - 1.0).abs());
            for j in 0..i {
                err = err.max(af[[i, j]].abs());
            }
        }
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-10, "deviation {err:e}");
        Ok(())
    });
    let detail = format!("A F unit upper triangular over 100 random F, worst deviation {:.2e} (1e-10)", worst.get());
    assert!(verdict("8b", result.is_ok(), &detail, start.elapsed(), 60.0));
}

#[test]
fn criterion_8c_split_identity() {
    let start = Instant::now();
    let strategy = (1usize..4, 16usize..128, 4usize..40, 0u64..u64::MAX);
    let result = runner().run(&strategy, |(q, n, m, seed)| {
        let specs: Vec<LoadingSpec> = (1..=q).map(|p| LoadingSpec::SignPattern { period: p }).collect();
        let s = synthesis::gen_factor_model(&specs, &NoiseSpec::White { sigma: 1.0 }, n, m.max(q), seed).unwrap();
        let tol = Tolerances::default();
        let b = spectral::build_averaging_sequences(s.loadings.view(), &tol).unwrap();
        let y = s.ensemble.data();
        let r = spectral::realize_factors(y.view(), &b, Whitening::Analytic, &tol).unwrap();
        // the idiosyncratic part is defined as the exact difference
        prop_assert!(r.idiosyncratic == y - &r.aggregate);
        // adding back rounds once
        let sum = &r.aggregate + &r.idiosyncratic;
        for ((a, b), (h, t)) in sum.iter().zip(y.iter()).zip(r.aggregate.iter().zip(r.idiosyncratic.iter())) {
            prop_assert!((a - b).abs() <= 2.0 * f64::EPSILON * h.abs().max(t.abs()).max(b.abs()));
        }
        Ok(())
    });
    let detail = format!(
        "y_idio == y - y_hat bit-exactly, y_hat + y_idio == y to one rounding, 100 trials: {}",
        result.as_ref().map(|_| "ok".into()).unwrap_or_else(|e| e.to_string())
    );
    assert!(verdict("8c", result.is_ok(), &detail, start.elapsed(), 60.0));
}

#[test]
fn criterion_8d_averaging_variance() {
    let start = Instant::now();
    let grid = [32, 64, 128, 256];
    let noise = prop_oneof![
        (0.1f64..3.0).prop_map(|sigma| NoiseSpec::White { sigma }),
        proptest::collection::vec(-1.0f64..1.0, 1..4).prop_map(|mut c| {
            c.insert(0, 1.0);
            NoiseSpec::MovingAverage { coeffs: c }
        }),
        (1usize..5, 0.1f64..0.9).prop_map(|(bandwidth, decay)| NoiseSpec::Banded { bandwidth, decay }),
    ];
    let min_decay = Cell::new(f64::INFINITY);
    let bounded = runner().run(&(noise, 0u64..u64::MAX), |(spec, seed)| {
        let y = synthesis::gen_idiosyncratic(&spec, 256, 400, seed).unwrap();
        let r = spectral::idiosyncrasy_test(&y, &AveragingSequence::arithmetic_mean, &grid, 2.0, 1.5).unwrap();
        min_decay.set(min_decay.get().min(r.decay));
        prop_assert!(r.decay >= 2.0, "{spec:?}: decay {}", r.decay);
        Ok(())
    });
    let range = Cell::new((f64::INFINITY, f64::NEG_INFINITY));
    let growing = runner().run(&(0u64..u64::MAX), |seed| {
        let y = synthesis::gen_idiosyncratic(&NoiseSpec::WhiteGrowing, 256, 4000, seed).unwrap();
        let r = spectral::idiosyncrasy_test(&y, &AveragingSequence::unit_tail, &grid, 2.0, 1.5).unwrap();
        for &v in &r.variances {
            let (lo, hi) = range.get();
            range.set((lo.min(v), hi.max(v)));
            prop_assert!((0.9..=1.1).contains(&v), "variance {v}");
        }
        prop_assert!(r.decay < 2.0);
        Ok(())
    });
    let ok = bounded.is_ok() && growing.is_ok();
    let detail = format!(
        "bounded noises: min decay {:.2} over 32->256 (>= 2); white_growing under d_n: variances in [{:.3}, {:.3}] ([0.9, 1.1])",
        min_decay.get(),
        range.get().0,
        range.get().1
    );
    assert!(verdict("8d", ok, &detail, start.elapsed(), 120.0));
}
