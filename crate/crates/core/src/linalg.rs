//! Dense symmetric linear algebra helpers.
//!
//! Public types use `ndarray`; the eigensolver is faer's self-adjoint
//! divide-and-conquer routine.

use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{GfaError, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
///
/// Each eigenvector has its first nonzero component positive. Eigenvalues
/// that tie (to a few ulps of the spectral scale) are ordered by the
/// lexicographic order of their sign-normalized eigenvectors, descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Columns are eigenvectors.
    pub vectors: Array2<f64>,
}

/// Copies into faer, flushing entries below `1e-200 * max|m|` to zero:
/// subnormal inputs make the tridiagonal QR iteration fail to converge.
fn to_faer(m: ArrayView2<f64>) -> Mat<f64> {
    let floor = 1e-200 * max_abs(m);
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let x = m[[i, j]];
        if x.abs() < floor || x.abs() < f64::MIN_POSITIVE { 0.0 } else { x }
    })
}

/// Flips `v` so that its first component exceeding `tiny` in magnitude is positive.
pub fn apply_sign_convention(mut v: ndarray::ArrayViewMut1<f64>) {
    let scale = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let tiny = 1e-12 * scale;
    if let Some(first) = v.iter().find(|x| x.abs() > tiny) {
        if *first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
}

fn lex_cmp(a: ArrayView1<f64>, b: ArrayView1<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Full eigendecomposition of a symmetric matrix (only the lower triangle is read).
pub fn sym_eigen(m: ArrayView2<f64>) -> Result<SymEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(GfaError::arg(format!("matrix is {}x{}, expected square", n, m.ncols())));
    }
    if n == 0 {
        return Ok(SymEigen { values: vec![], vectors: Array2::zeros((0, 0)) });
    }
    let evd = to_faer(m).self_adjoint_eigen(Side::Lower).map_err(|_| GfaError::Eigen)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut vals: Vec<f64> = (0..n).map(|i| s[i]).collect();
    let mut vecs = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    for col in vecs.axis_iter_mut(Axis(1)) {
        apply_sign_convention(col);
    }

    let scale = vals.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let tie = 16.0 * f64::EPSILON * scale;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        if (vals[a] - vals[b]).abs() <= tie {
            lex_cmp(vecs.column(b), vecs.column(a))
        } else {
            vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal)
        }
    });
    let sorted_vals = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = vecs.select(Axis(1), &order);
    vals.clear();
    vecs = sorted_vecs;
    Ok(SymEigen { values: sorted_vals, vectors: vecs })
}

/// Eigenvalues only, sorted descending.
pub fn sym_eigenvalues(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(vec![]);
    }
    let mut vals = to_faer(m).self_adjoint_eigenvalues(Side::Lower).map_err(|_| GfaError::Eigen)?;
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(vals)
}

/// Top `k` eigenpairs.
pub fn top_eigen(m: ArrayView2<f64>, k: usize) -> Result<SymEigen> {
    let full = sym_eigen(m)?;
    let k = k.min(full.values.len());
    Ok(SymEigen {
        values: full.values[..k].to_vec(),
        vectors: full.vectors.slice(ndarray::s![.., ..k]).to_owned(),
    })
}

/// `S^p` for a symmetric PSD matrix via its eigendecomposition.
///
/// Fails with `None` when `p < 0` and an eigenvalue is not positive relative
/// to `rel_floor * lambda_max`.
pub fn sym_power(s: ArrayView2<f64>, p: f64, rel_floor: f64) -> Result<Option<Array2<f64>>> {
    let e = sym_eigen(s)?;
    let lmax = e.values.first().copied().unwrap_or(0.0);
    if p < 0.0 && e.values.iter().any(|&l| l <= rel_floor * lmax.abs() || l <= 0.0) {
        return Ok(None);
    }
    let d: Array1<f64> = e.values.iter().map(|&l| l.max(0.0).powf(p)).collect();
    let scaled = &e.vectors * &d.view().insert_axis(Axis(0));
    Ok(Some(scaled.dot(&e.vectors.t())))
}

/// Solves `R X = B` for upper-triangular `R` by back substitution.
pub fn solve_upper(r: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let q = r.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in (0..q).rev() {
            let mut acc = x[[i, col]];
            for j in i + 1..q {
                acc -= r[[i, j]] * x[[j, col]];
            }
            x[[i, col]] = acc / r[[i, i]];
        }
    }
    x
}

/// Largest absolute entry.
pub fn max_abs(m: ArrayView2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Symmetric Toeplitz matrix with first row `lags[..n]`.
pub fn toeplitz(lags: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| lags[i.abs_diff(j)])
}

/// Singular values (descending) of a general matrix.
pub fn singular_values(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(vec![]);
    }
    let mut s = to_faer(m).singular_values().map_err(|_| GfaError::Eigen)?;
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_sorted_and_signed() {
        let m = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let e = sym_eigen(m.view()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        assert!((e.values[2] - 1.0).abs() < 1e-12);
        for col in e.vectors.columns() {
            let first = col.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
        // tie between (1,-1,0)/sqrt2 and (0,0,1): lexicographically larger first
        assert!(e.vectors[[0, 1]] > 0.5);
        assert!(e.vectors[[2, 2]] > 0.99);
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let s = array![[4.0, 1.0], [1.0, 3.0]];
        let w = sym_power(s.view(), -0.5, 1e-12).unwrap().unwrap();
        let id = w.dot(&s).dot(&w);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((id[[i, j]] - want).abs() < 1e-12);
            }
        }
        let sing = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(sym_power(sing.view(), -0.5, 1e-12).unwrap().is_none());
    }

    #[test]
    fn back_substitution() {
        let r = array![[1.0, 2.0], [0.0, 1.0]];
        let b = array![[5.0], [2.0]];
        let x = solve_upper(r.view(), b.view());
        assert_eq!(x, array![[1.0], [2.0]]);
    }
}
