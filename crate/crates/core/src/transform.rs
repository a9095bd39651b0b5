//! Similarity transforms `p -> s R p + t`.

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::tolerances::Tolerances;

/// A validated similarity transform: `s > 0`, `R` a proper rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    scale: f64,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

impl SimilarityTransform {
    pub fn new(scale: f64, rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidTransform(format!("scale must be positive, got {scale}")));
        }
        check_rotation(&rotation, &Tolerances::DEFAULT)?;
        if translation.len() != rotation.nrows() {
            return Err(Error::Dimension {
                expected: rotation.nrows(),
                found: translation.len(),
            });
        }
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            scale: 1.0,
            rotation: DMatrix::identity(dim, dim),
            translation: DVector::zeros(dim),
        }
    }

    /// 2-D transform from a counter-clockwise angle in radians.
    pub fn from_2d(scale: f64, angle: f64, tx: f64, ty: f64) -> Result<Self> {
        Self::new(scale, rotation_2d(angle), DVector::from_vec(vec![tx, ty]))
    }

    /// 3-D transform from an axis-angle vector (radians).
    pub fn from_3d(scale: f64, axis_angle: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            scale,
            rotation_3d(axis_angle),
            DVector::from_column_slice(&translation),
        )
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.rotation.nrows()
    }

    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &DVector<f64> {
        &self.translation
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(scale, self.rotation.clone(), self.translation.clone())
    }

    /// Writes `s R p + t` into `out`.
    #[inline]
    pub fn apply_into(&self, p: &[f64], out: &mut [f64]) {
        let m = self.dim();
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                acc += self.rotation[(r, c)] * p[c];
            }
            out[r] = self.scale * acc + self.translation[r];
        }
    }

    pub fn apply_point(&self, p: &[f64]) -> Result<DVector<f64>> {
        if p.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: p.len(),
            });
        }
        let mut out = DVector::zeros(self.dim());
        self.apply_into(p, out.as_mut_slice());
        Ok(out)
    }

    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        points.check_dim(self.dim())?;
        let m = self.dim();
        let mut coords = vec![0.0; points.coords().len()];
        for (p, out) in points.iter().zip(coords.chunks_exact_mut(m)) {
            self.apply_into(p, out);
        }
        PointSet::new(m, coords)
    }

    /// `(1/s, R^T, -(1/s) R^T t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let translation = -(&rt * &self.translation) / self.scale;
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation,
        }
    }

    /// The transform applying `self` first, then `after`.
    pub fn then(&self, after: &SimilarityTransform) -> Result<Self> {
        if after.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: after.dim(),
            });
        }
        let rotation = orthonormalize(&(&after.rotation * &self.rotation));
        Ok(Self {
            scale: after.scale * self.scale,
            rotation,
            translation: after.scale * (&after.rotation * &self.translation) + &after.translation,
        })
    }

    /// Angle of the relative rotation `R_a^T R_b`, from `|R_a - R_b|_F = 2 sqrt(2) sin(theta/2)`.
    /// Exact for planar rotations (every 2-D and 3-D rotation).
    pub fn rotation_angle_to(&self, other: &SimilarityTransform) -> f64 {
        rotation_angle_between(&self.rotation, &other.rotation)
    }

    pub fn to_record(&self) -> TransformRecord {
        TransformRecord {
            dim: self.dim(),
            scale: self.scale,
            rotation: self.rotation.row_iter().map(|r| r.iter().copied().collect()).collect(),
            translation: self.translation.iter().copied().collect(),
        }
    }
}

/// Serializable form of a transform; rotation stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub dim: usize,
    pub scale: f64,
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

impl TryFrom<TransformRecord> for SimilarityTransform {
    type Error = Error;

    fn try_from(r: TransformRecord) -> Result<Self> {
        let m = r.dim;
        if r.rotation.len() != m || r.rotation.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidTransform("rotation is not dim x dim".into()));
        }
        let flat: Vec<f64> = r.rotation.into_iter().flatten().collect();
        SimilarityTransform::new(
            r.scale,
            DMatrix::from_row_slice(m, m, &flat),
            DVector::from_vec(r.translation),
        )
    }
}

pub fn rotation_2d(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

pub fn rotation_3d(axis_angle: [f64; 3]) -> DMatrix<f64> {
    let r = Rotation3::new(Vector3::from(axis_angle));
    DMatrix::from_iterator(3, 3, r.matrix().iter().copied())
}

pub fn rotation_angle_between(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let half = ((a - b).norm() / (2.0 * std::f64::consts::SQRT_2)).min(1.0);
    2.0 * half.asin()
}

/// Verifies `R^T R = I` and `det R = 1` within the given tolerances.
pub fn check_rotation(r: &DMatrix<f64>, tol: &Tolerances) -> Result<()> {
    if !r.is_square() || r.nrows() < 2 {
        return Err(Error::InvalidTransform(format!(
            "rotation must be square with dim >= 2, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let m = r.nrows();
    let ortho = (r.transpose() * r - DMatrix::<f64>::identity(m, m)).norm();
    if !(ortho <= tol.orthonormality) {
        return Err(Error::InvalidTransform(format!("R^T R deviates from I by {ortho:e}")));
    }
    let det = r.determinant();
    if !((det - 1.0).abs() <= tol.determinant) {
        return Err(Error::InvalidTransform(format!("det(R) = {det}")));
    }
    Ok(())
}

/// Projects a near-rotation back onto SO(m); guards compositions against drift.
pub(crate) fn orthonormalize(r: &DMatrix<f64>) -> DMatrix<f64> {
    let m = r.nrows();
    let svd = r.clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = &u * &vt;
    if q.determinant() < 0.0 {
        let k = (0..m)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        let mut u = u;
        u.column_mut(k).neg_mut();
        q = u * vt;
    }
    q
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use proptest::prelude::*;

    use super::*;

    fn assert_points_close(a: &PointSet, b: &[f64], tol: f64) {
        for (x, y) in a.coords().iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn apply_examples() {
        let p = PointSet::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(SimilarityTransform::identity(2).apply(&p).unwrap().coords(), &[3.0, 4.0]);

        let p = PointSet::from_rows(&[[1.0, 0.0]]).unwrap();
        let t = SimilarityTransform::from_2d(2.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(t.apply(&p).unwrap().coords(), &[3.0, 0.0]);

        let t = SimilarityTransform::from_2d(1.0, FRAC_PI_2, 0.0, 0.0).unwrap();
        assert_points_close(&t.apply(&p).unwrap(), &[0.0, 1.0], 1e-15);
    }

    #[test]
    fn apply_rejects_dimension_mismatch() {
        let p = PointSet::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            SimilarityTransform::identity(2).apply(&p),
            Err(Error::Dimension { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn constructor_rejects_invalid() {
        let refl = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SimilarityTransform::new(1.0, refl, DVector::zeros(2)).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SimilarityTransform::new(1.0, skew, DVector::zeros(2)).is_err());
        let id = DMatrix::identity(2, 2);
        assert!(SimilarityTransform::new(0.0, id.clone(), DVector::zeros(2)).is_err());
        assert!(SimilarityTransform::new(-1.0, id.clone(), DVector::zeros(2)).is_err());
        assert!(SimilarityTransform::new(1.0, id, DVector::zeros(3)).is_err());
    }

    #[test]
    fn rotation_angle_metric() {
        let a = SimilarityTransform::from_2d(1.0, 0.3, 0.0, 0.0).unwrap();
        let b = SimilarityTransform::from_2d(1.0, -0.5, 0.0, 0.0).unwrap();
        assert!((a.rotation_angle_to(&b) - 0.8).abs() < 1e-12);
        let c = SimilarityTransform::from_3d(1.0, [0.0, 0.0, 1e-7], [0.0; 3]).unwrap();
        let id = SimilarityTransform::identity(3);
        assert!((c.rotation_angle_to(&id) - 1e-7).abs() < 1e-15);
    }

    #[test]
    fn record_round_trip() {
        let t = SimilarityTransform::from_3d(1.7, [0.2, -0.4, 1.1], [1.0, 2.0, -3.0]).unwrap();
        let json = serde_json::to_string(&t.to_record()).unwrap();
        let back: TransformRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(SimilarityTransform::try_from(back).unwrap(), t);
    }

    fn arb_transform_3d() -> impl Strategy<Value = SimilarityTransform> {
        (
            0.1f64..10.0,
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-100.0f64..100.0),
        )
            .prop_map(|(s, w, t)| SimilarityTransform::from_3d(s, w, t).unwrap())
    }

    fn arb_points_3d() -> impl Strategy<Value = PointSet> {
        prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..20)
            .prop_map(|rows| PointSet::from_rows(&rows).unwrap())
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(t in arb_transform_3d(), p in arb_points_3d()) {
            let back = t.inverse().apply(&t.apply(&p).unwrap()).unwrap();
            for (a, b) in back.coords().iter().zip(p.coords()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let composed = t.then(&t.inverse()).unwrap();
            for (a, b) in composed.apply(&p).unwrap().coords().iter().zip(p.coords()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn centroid_commutes_with_transform(t in arb_transform_3d(), p in arb_points_3d()) {
            let lhs = t.apply(&p).unwrap().centroid();
            let rhs = t.apply_point(p.centroid().as_slice()).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-9);
        }
    }
}
