//! Comparators and initializers: the bounded-scale trimmed ICP baseline and
//! PCA-based starting values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::solver::{self, EngineConfig, ScaleRule};
use crate::transform::SimilarityTransform;
use crate::trimmed::{TrimConfig, TrimmedKind, TrimmedResult};

/// Closed interval `[low, high]` with `0 < low <= high`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleBounds {
    low: f64,
    high: f64,
}

impl ScaleBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 0.0 && low <= high && high.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid scale bounds [{low}, {high}]")));
        }
        Ok(Self { low, high })
    }

    /// `[lo_factor * center, hi_factor * center]`.
    pub fn around(center: f64, lo_factor: f64, hi_factor: f64) -> Result<Self> {
        Self::new(lo_factor * center, hi_factor * center)
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn contains(&self, s: f64) -> bool {
        self.low <= s && s <= self.high
    }

    pub fn clamp(&self, s: f64) -> f64 {
        s.clamp(self.low, self.high)
    }
}

fn rms_spread(points: &PointSet) -> f64 {
    (points.total_variance() / points.len() as f64).sqrt()
}

/// Isotropic spread ratio `rms(Q - mean Q) / rms(P - mean P)`.
pub fn pca_scale_estimate(data: &PointSet, model: &PointSet) -> Result<f64> {
    model.check_dim(data.dim())?;
    if data.len() < 2 || model.len() < 2 {
        return Err(Error::InvalidArgument("PCA scale needs at least two points per set".into()));
    }
    let (sp, sq) = (rms_spread(data), rms_spread(model));
    if !(sp > 0.0) {
        return Err(Error::DegenerateShape("data set has zero spread"));
    }
    if !(sq > 0.0) {
        return Err(Error::DegenerateShape("model set has zero spread"));
    }
    Ok(sq / sp)
}

/// Covariance eigenvectors as columns, ordered by decreasing eigenvalue.
fn principal_axes(points: &PointSet) -> DMatrix<f64> {
    let m = points.dim();
    let (centered, _) = points.center();
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for p in centered.iter() {
        for r in 0..m {
            for c in 0..m {
                cov[(r, c)] += p[r] * p[c];
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    DMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect::<Vec<_>>())
}

/// Starting transforms that align centroids, PCA spread and principal axes.
///
/// Axis directions are only known up to sign, so every proper sign
/// combination is returned (2 candidates in 2-D, 4 in 3-D).
pub fn principal_axes_initializations(data: &PointSet, model: &PointSet) -> Result<Vec<SimilarityTransform>> {
    let scale = pca_scale_estimate(data, model)?;
    let m = data.dim();
    let (ep, eq) = (principal_axes(data), principal_axes(model));
    let (cp, cq) = (data.centroid(), model.centroid());
    let mut out = Vec::new();
    for mask in 0..(1u32 << m) {
        let signs = DVector::from_iterator(m, (0..m).map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 }));
        let rotation = &eq * DMatrix::from_diagonal(&signs) * ep.transpose();
        if rotation.determinant() < 0.0 {
            continue;
        }
        let translation = &cq - scale * (&rotation * &cp);
        out.push(SimilarityTransform::new(scale, rotation, translation)?);
    }
    Ok(out)
}

/// Trimmed ICP with the least-squares scale clamped into `bounds` every iteration.
///
/// The overlap scan and the recorded `psi_trace` use the unweighted trimmed
/// objective `e / xi^(1 + lambda)`.
pub fn run_bounded_tricp(
    data: &PointSet,
    model: &PointSet,
    cfg: &TrimConfig,
    bounds: ScaleBounds,
) -> Result<TrimmedResult> {
    cfg.validate()?;
    let mut cfg = cfg.clone();
    if let Some(init) = &cfg.solver.initial_transform {
        cfg.solver.initial_transform = Some(init.with_scale(bounds.clamp(init.scale()))?);
    } else {
        let mut init = SimilarityTransform::identity(data.dim());
        init = init.with_scale(bounds.clamp(1.0))?;
        cfg.solver.initial_transform = Some(init);
    }
    let out = solver::run(data, model, &EngineConfig::trimmed(&cfg, ScaleRule::Clamped(bounds)))?;
    Ok(TrimmedResult::from_engine(out, TrimmedKind::BoundedBaseline))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> PointSet {
        let rows: Vec<[f64; 2]> = (0..60)
            .map(|i| {
                let a = i as f64 * 0.1047;
                [3.0 * a.cos() + 0.4 * (2.0 * a).sin(), 1.2 * a.sin()]
            })
            .collect();
        PointSet::from_rows(&rows).unwrap()
    }

    #[test]
    fn bounds_validation() {
        assert!(ScaleBounds::new(0.0, 1.0).is_err());
        assert!(ScaleBounds::new(2.0, 1.0).is_err());
        let b = ScaleBounds::new(0.5, 2.0).unwrap();
        assert_eq!(b.clamp(0.1), 0.5);
        assert_eq!(b.clamp(3.0), 2.0);
        assert_eq!(b.clamp(1.1), 1.1);
        assert!(ScaleBounds::new(1.0, 1.0).unwrap().contains(1.0));
    }

    #[test]
    fn pca_scale_examples() {
        let p = shape();
        assert_eq!(pca_scale_estimate(&p, &p).unwrap(), 1.0);
        let (centered, c) = p.center();
        let tripled = PointSet::new(2, centered.coords().iter().map(|v| 3.0 * v).collect())
            .unwrap()
            .translated(&c);
        assert!((pca_scale_estimate(&p, &tripled).unwrap() - 3.0).abs() < 1e-12);
        let moved = SimilarityTransform::from_2d(2.0, 1.1, -4.0, 7.0).unwrap().apply(&p).unwrap();
        assert!((pca_scale_estimate(&p, &moved).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pca_scale_rejects_degenerate() {
        let flat = PointSet::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(pca_scale_estimate(&flat, &shape()), Err(Error::DegenerateShape(_))));
        let single = PointSet::from_rows(&[[1.0, 1.0]]).unwrap();
        assert!(pca_scale_estimate(&single, &shape()).is_err());
    }

    #[test]
    fn principal_axes_candidates_contain_truth() {
        let p = shape();
        let truth = SimilarityTransform::from_2d(0.7, 2.5, 1.0, -2.0).unwrap();
        let q = truth.apply(&p).unwrap();
        let cands = principal_axes_initializations(&p, &q).unwrap();
        assert_eq!(cands.len(), 2);
        let best = cands
            .iter()
            .map(|c| c.rotation_angle_to(&truth))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9);
    }

    #[test]
    fn bounded_scale_stays_in_bounds() {
        let p = shape();
        let q = SimilarityTransform::from_2d(1.8, 0.1, 0.2, 0.1).unwrap().apply(&p).unwrap();
        let bounds = ScaleBounds::new(0.9, 1.1).unwrap();
        let res = run_bounded_tricp(&p, &q, &TrimConfig::default(), bounds).unwrap();
        assert!(res.registration.scale_trace.iter().all(|&s| bounds.contains(s)));
        assert_eq!(res.registration.transform.scale(), 1.1);
    }
}
