//! Trimmed scaling ICP for partially overlapping sets.
//!
//! The objective trades residual against retained fraction:
//!
//! ```text
//! Psi(xi, s, R, t) = e / (s^2 * xi^(1 + lambda)),   e = mean squared residual over P_xi
//! ```
//!
//! Each iteration matches points, picks the overlap by scanning sorted
//! residual prefixes under the current scale, and re-estimates the transform on
//! the retained pairs. The three steps never increase `Psi`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::scaling_icp::{CorrespondenceSet, RegistrationResult, SolverConfig};
use crate::solver::{self, EngineConfig, EngineOutput, ScaleRule};

#[derive(Debug, Clone)]
pub struct TrimConfig {
    pub solver: SolverConfig,
    /// Exponent penalty on small overlaps; larger values favour keeping more points.
    pub lambda: f64,
    /// Smallest admissible overlap fraction.
    pub min_overlap: f64,
}

impl Default for TrimConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            lambda: 2.0,
            min_overlap: 0.3,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "min_overlap must lie in (0, 1], got {}",
                self.min_overlap
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `Psi = mse / (s^2 * xi^(1 + lambda))`.
pub fn psi_objective(mse: f64, scale: f64, xi: f64, lambda: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::InvalidArgument(format!("overlap must lie in (0, 1], got {xi}")));
    }
    Ok(mse / (scale * scale * xi.powf(1.0 + lambda)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapSelection {
    pub xi: f64,
    /// Retained data indices, ascending.
    pub subset: Vec<usize>,
    pub psi: f64,
}

/// Smallest admissible prefix length for `n` points.
pub(crate) fn min_prefix(n: usize, min_overlap: f64) -> usize {
    // the slack absorbs products like 0.3 * 10 = 3.0000000000000004
    ((min_overlap * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Chooses the overlap minimizing `Psi` among prefixes of the pairs sorted by
/// distance (ties by data index). On equal `Psi` the longer prefix wins, so
/// exact-zero residuals keep every perfectly matched point.
pub fn select_overlap(corr: &CorrespondenceSet, scale: f64, cfg: &TrimConfig) -> Result<OverlapSelection> {
    if corr.is_empty() {
        return Err(Error::Empty("correspondence set"));
    }
    cfg.validate()?;
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    Ok(scan_prefixes(corr.squared_distances(), scale, cfg.lambda, cfg.min_overlap))
}

pub(crate) fn scan_prefixes(sq_distances: &[f64], scale: f64, lambda: f64, min_overlap: f64) -> OverlapSelection {
    let n = sq_distances.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sq_distances[a].total_cmp(&sq_distances[b]).then(a.cmp(&b)));

    let first = min_prefix(n, min_overlap);
    let mut running = 0.0;
    let mut best = (first, f64::INFINITY);
    for (k, &i) in order.iter().enumerate() {
        running += sq_distances[i];
        let len = k + 1;
        if len < first {
            continue;
        }
        let xi = len as f64 / n as f64;
        let psi = running / len as f64 / (scale * scale * xi.powf(1.0 + lambda));
        if psi <= best.1 {
            best = (len, psi);
        }
    }

    let mut subset = order[..best.0].to_vec();
    subset.sort_unstable();
    OverlapSelection {
        xi: best.0 as f64 / n as f64,
        subset,
        psi: best.1,
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimmedKind {
    ScaleEmphasized,
    /// Bounded least-squares comparator.
    BoundedBaseline,
}

#[derive(Debug, Clone)]
pub struct TrimmedResult {
    /// `objective_trace` here holds the untrimmed-form sum over the retained
    /// subset; the trimmed objective itself is `psi_trace`.
    pub registration: RegistrationResult,
    pub overlap: f64,
    pub overlap_subset: Vec<usize>,
    pub psi_trace: Vec<f64>,
    pub overlap_trace: Vec<f64>,
    pub kind: TrimmedKind,
}

impl TrimmedResult {
    pub(crate) fn from_engine(out: EngineOutput, kind: TrimmedKind) -> Self {
        Self {
            registration: out.registration,
            overlap: out.overlap,
            overlap_subset: out.subset,
            psi_trace: out.psi_trace,
            overlap_trace: out.overlap_trace,
            kind,
        }
    }
}

pub fn run_strimmed_icp(data: &PointSet, model: &PointSet, cfg: &TrimConfig) -> Result<TrimmedResult> {
    cfg.validate()?;
    let out = solver::run(data, model, &EngineConfig::trimmed(cfg, ScaleRule::Emphasized))?;
    Ok(TrimmedResult::from_engine(out, TrimmedKind::ScaleEmphasized))
}
