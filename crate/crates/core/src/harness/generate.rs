//! Synthetic registration cases with known ground truth.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use super::spec::{ExperimentSpec, InitMode, ShapeSource};
use crate::baselines::{pca_scale_estimate, principal_axes_initializations};
use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::transform::{rotation_2d, rotation_3d, SimilarityTransform};

/// One generated registration problem. `truth` maps `data` onto `model`.
#[derive(Debug, Clone)]
pub struct Case {
    pub data: PointSet,
    pub model: PointSet,
    pub truth: SimilarityTransform,
    pub true_xi: f64,
    /// Data indices moved outside the model hull.
    pub displaced: Vec<usize>,
    /// Starting transforms; more than one means multi-start.
    pub inits: Vec<SimilarityTransform>,
    /// Bounding-box diameter of the model.
    pub diameter: f64,
}

/// RNG for trial `trial`; stream 0 is reserved for the base shape.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

/// Irregular closed contour: a lobed radius function on a stretched circle,
/// sampled at jittered angles.
pub fn contour_2d(n: usize, rng: &mut impl Rng) -> PointSet {
    let mut coords = Vec::with_capacity(2 * n);
    for i in 0..n {
        let theta = (i as f64 + rng.random_range(-0.3..0.3)) * TAU / n as f64;
        let r = 1.0 + 0.3 * (3.0 * theta + 0.4).cos() + 0.15 * (5.0 * theta).sin() + 0.1 * (2.0 * theta).cos();
        coords.push(1.6 * r * theta.cos());
        coords.push(r * theta.sin() + 0.2 * (theta * 2.0).sin());
    }
    PointSet::new(2, coords).expect("finite contour")
}

/// Bumpy ellipsoid surface with distinct principal axes.
pub fn surface_3d(n: usize, rng: &mut impl Rng) -> PointSet {
    let mut coords = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
        let r = 1.0 + 0.2 * (3.0 * x).sin() * (2.0 * y).cos() + 0.1 * (4.0 * z + 0.5).sin();
        coords.extend([2.0 * r * x, 1.2 * r * y + 0.3 * x * x, 0.7 * r * z]);
    }
    PointSet::new(3, coords).expect("finite surface")
}

pub fn base_shape(spec: &ExperimentSpec) -> Result<PointSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match &spec.shape {
        ShapeSource::Contour2d => Ok(contour_2d(spec.points, &mut rng)),
        ShapeSource::Surface3d => Ok(surface_3d(spec.points, &mut rng)),
        ShapeSource::File(path) => PointSet::read(path),
    }
}

fn random_rotation(dim: usize, max_angle: f64, rng: &mut impl Rng) -> Result<nalgebra::DMatrix<f64>> {
    let angle = if max_angle > 0.0 {
        rng.random_range(-max_angle..=max_angle)
    } else {
        0.0
    };
    match dim {
        2 => Ok(rotation_2d(angle)),
        3 => {
            let axis: [f64; 3] = UnitSphere.sample(rng);
            Ok(rotation_3d(axis.map(|a| a * angle)))
        }
        d => Err(Error::InvalidArgument(format!(
            "synthetic perturbations support 2-D and 3-D shapes, got {d}-D"
        ))),
    }
}

fn random_offset(dim: usize, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    if radius <= 0.0 {
        return DVector::zeros(dim);
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let dir = DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(rng)));
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(dim);
    }
    dir / norm * rng.random_range(0.0..=radius)
}

/// Builds the case for trial `trial` of `spec` on `base`; deterministic in
/// `(spec, base, trial)`.
pub fn generate_case(spec: &ExperimentSpec, base: &PointSet, trial: usize) -> Result<Case> {
    spec.validate()?;
    let mut rng = trial_rng(spec.seed, trial);
    let dim = base.dim();
    let n = base.len();
    let diameter = base.bbox_diameter();
    if !(diameter > 0.0) {
        return Err(Error::DegenerateShape("base shape has zero extent"));
    }

    let (lo, hi) = spec.scale_range;
    let scale = if lo == hi {
        lo
    } else {
        rng.random_range(lo.ln()..=hi.ln()).exp()
    };
    let max_angle = spec.rotation_deg.to_radians().min(PI);
    let rotation = random_rotation(dim, max_angle, &mut rng)?;
    let translation = random_offset(dim, spec.translation * diameter, &mut rng);
    let truth = SimilarityTransform::new(scale, rotation, translation)?;

    // Data lives in the model frame until the final inverse mapping.
    let mut moved = base.coords().to_vec();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let k = (spec.occlusion * n as f64).round() as usize;
    let mut displaced = order[..k].to_vec();
    displaced.sort_unstable();
    let center = base.centroid();
    let reach = base
        .iter()
        .map(|p| p.iter().zip(center.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    for &i in &displaced {
        let p = DVector::from_column_slice(base.point(i));
        let mut dir = &p - &center;
        if dir.norm() == 0.0 {
            dir = random_offset(dim, 1.0, &mut rng);
        }
        let target = &center + dir.normalize() * reach * rng.random_range(1.5..2.5);
        moved[i * dim..(i + 1) * dim].copy_from_slice(target.as_slice());
    }
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise * diameter).unwrap();
        for c in moved.iter_mut() {
            *c += normal.sample(&mut rng);
        }
    }
    let data = truth.inverse().apply(&PointSet::new(dim, moved)?)?;
    let model = base.clone();

    let inits = match spec.init {
        InitMode::PrincipalAxes => principal_axes_initializations(&data, &model)?,
        mode => {
            let s0 = match mode {
                InitMode::PcaScale => pca_scale_estimate(&data, &model)?,
                _ => scale * (1.0 + rng.random_range(-spec.init_scale..=spec.init_scale)),
            };
            let r_off = random_rotation(dim, spec.init_rotation_deg.to_radians().min(PI), &mut rng)?;
            let r0 = r_off * truth.rotation();
            // Perturb about the data centroid so rotation error does not leak into translation.
            let cp = data.centroid();
            let anchor = truth.apply_point(cp.as_slice())?
                + random_offset(dim, spec.init_translation * diameter, &mut rng);
            let t0 = anchor - s0 * (&r0 * cp);
            vec![SimilarityTransform::new(s0, crate::transform::orthonormalize(&r0), t0)?]
        }
    };

    Ok(Case {
        data,
        model,
        truth,
        true_xi: 1.0 - k as f64 / n as f64,
        displaced,
        inits,
        diameter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ExperimentSpec {
        ExperimentSpec {
            points: 120,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn clean_case_is_exact_image() {
        let s = spec();
        let base = base_shape(&s).unwrap();
        let case = generate_case(&s, &base, 0).unwrap();
        assert_eq!(case.true_xi, 1.0);
        assert!(case.displaced.is_empty());
        let back = case.truth.apply(&case.data).unwrap();
        for (a, b) in back.coords().iter().zip(case.model.coords()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn occlusion_sets_true_overlap() {
        let s = ExperimentSpec {
            occlusion: 0.3,
            ..spec()
        };
        let base = base_shape(&s).unwrap();
        let case = generate_case(&s, &base, 2).unwrap();
        assert_eq!(case.true_xi, 0.7);
        assert_eq!(case.displaced.len(), 36);
        // displaced points sit well outside the model
        let moved = case.truth.apply(&case.data).unwrap();
        let c = case.model.centroid();
        let reach = case
            .model
            .iter()
            .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        for &i in &case.displaced {
            let p = moved.point(i);
            let r = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt();
            assert!(r > 1.4 * reach);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = ExperimentSpec {
            occlusion: 0.2,
            noise: 0.01,
            shape: ShapeSource::Surface3d,
            ..spec()
        };
        let base = base_shape(&s).unwrap();
        let a = generate_case(&s, &base, 4).unwrap();
        let b = generate_case(&s, &base_shape(&s).unwrap(), 4).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.inits, b.inits);
        let c = generate_case(&s, &base, 5).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn sampled_scale_within_range() {
        let s = ExperimentSpec {
            scale_range: (0.25, 4.0),
            ..spec()
        };
        let base = base_shape(&s).unwrap();
        for t in 0..30 {
            let sc = generate_case(&s, &base, t).unwrap().truth.scale();
            assert!((0.25..=4.0).contains(&sc));
        }
    }
}
