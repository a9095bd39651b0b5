/// Numerical tolerances shared by the geometry checks and the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Frobenius bound on `R^T R - I` for a matrix to count as orthonormal.
    pub orthonormality: f64,
    /// Bound on `|det(R) - 1|`.
    pub determinant: f64,
    /// The scale denominator must exceed this multiple of `sum |m_i|^2`.
    pub scale_denominator: f64,
    /// Singular values below this multiple of the largest count as zero.
    pub rank: f64,
    /// Absolute slack allowed when checking that an objective trace does not increase.
    pub monotone_slack: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        orthonormality: 1e-9,
        determinant: 1e-9,
        scale_denominator: 1e-12,
        rank: 1e-12,
        monotone_slack: 1e-9,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Returns the first index `k` where `trace[k] > trace[k-1] + slack`, if any.
pub fn first_increase(trace: &[f64], slack: f64) -> Option<usize> {
    trace
        .windows(2)
        .position(|w| w[1] > w[0] + slack)
        .map(|k| k + 1)
}
