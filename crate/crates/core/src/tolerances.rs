use serde::{Deserialize, Serialize};

/// Numerical and statistical tolerances shared by every module.
///
/// Machine-precision checks (`psd`, `weyl`, `orth`, `rank`, `num`) are kept
/// apart from the sample-statistical ones (`fact`, `orth_xy`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// PSD slack, relative to the largest absolute entry of the matrix.
    pub psd: f64,
    /// Weyl monotonicity slack, relative to the largest eigenvalue.
    pub weyl: f64,
    /// Orthonormality of eigenvectors.
    pub orth: f64,
    /// Rank threshold, relative to the largest eigenvalue / column norm.
    pub rank: f64,
    /// Algebraic identities such as `A F = R`.
    pub num: f64,
    /// Sample covariance of realized factors against the identity.
    pub fact: f64,
    /// Sample cross-covariance between factors and idiosyncratic rows.
    pub orth_xy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            psd: 1e-8,
            weyl: 1e-8,
            orth: 1e-10,
            rank: 1e-10,
            num: 1e-10,
            fact: 0.1,
            orth_xy: 0.1,
        }
    }
}
