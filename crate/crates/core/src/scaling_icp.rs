//! Scaling ICP for fully overlapping point sets.
//!
//! Each iteration matches every data point to its nearest model point, then
//! solves the scale-emphasized least-squares problem
//!
//! ```text
//! F(s, R, t) = sum_i |s R p_i + t - q_c(i)|^2 / s^2
//! ```
//!
//! in closed form: rotation from the SVD of the cross-covariance of the
//! centered pairs, then `s = sum |m_i|^2 / sum m_i . R d_i`, then the
//! translation that matches centroids. Dividing by `s^2` keeps the optimum
//! away from the collapsed solution `s -> 0` that plain least squares admits.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nnindex::{squared_distance, NearestNeighborIndex};
use crate::points::PointSet;
use crate::solver::{self, EngineConfig, ScaleRule};
use crate::tolerances::Tolerances;
use crate::transform::SimilarityTransform;

/// One nearest-model match per data point, in data order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    model_indices: Vec<usize>,
    sq_distances: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub data_index: usize,
    pub model_index: usize,
    pub distance: f64,
}

impl CorrespondenceSet {
    /// Builds a set from per-data-point model indices and squared distances.
    pub fn new(model_indices: Vec<usize>, sq_distances: Vec<f64>) -> Result<Self> {
        if model_indices.len() != sq_distances.len() {
            return Err(Error::CountMismatch {
                left: model_indices.len(),
                right: sq_distances.len(),
            });
        }
        if let Some(bad) = sq_distances.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("squared distance {bad} is not a finite non-negative value")));
        }
        Ok(Self::from_parts(model_indices, sq_distances))
    }

    pub(crate) fn from_parts(model_indices: Vec<usize>, sq_distances: Vec<f64>) -> Self {
        debug_assert_eq!(model_indices.len(), sq_distances.len());
        Self {
            model_indices,
            sq_distances,
        }
    }

    pub fn len(&self) -> usize {
        self.model_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_indices.is_empty()
    }

    pub fn model_indices(&self) -> &[usize] {
        &self.model_indices
    }

    pub fn squared_distances(&self) -> &[f64] {
        &self.sq_distances
    }

    pub fn get(&self, data_index: usize) -> Correspondence {
        Correspondence {
            data_index,
            model_index: self.model_indices[data_index],
            distance: self.sq_distances[data_index].sqrt(),
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = Correspondence> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }
}

/// Matches each transformed data point `s R p_i + t` to its nearest model point.
pub fn establish_correspondences(
    data: &PointSet,
    transform: &SimilarityTransform,
    index: &NearestNeighborIndex,
) -> Result<CorrespondenceSet> {
    data.check_dim(index.dim())?;
    let moved = transform.apply(data)?;
    let matches = solver::nearest_all(index, &moved);
    let (model_indices, sq_distances) = matches.into_iter().unzip();
    Ok(CorrespondenceSet::from_parts(model_indices, sq_distances))
}

/// Rotation estimate plus a flag raised when the maximizer is not unique.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationFit {
    pub rotation: DMatrix<f64>,
    pub degenerate: bool,
}

fn check_pairs(a: &PointSet, b: &PointSet) -> Result<()> {
    b.check_dim(a.dim())?;
    if a.len() != b.len() {
        return Err(Error::CountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Proper rotation maximizing `sum_i m_i . R d_i` for centered `d`, `m`.
///
/// With `H = (1/N) sum d_i m_i^T = U S V^T`, the maximizer is
/// `R = V diag(1, .., 1, det(V U^T)) U^T`; the last sign flip lands on the
/// smallest singular value so reflections are never returned.
pub fn estimate_rotation(centered_data: &PointSet, centered_model: &PointSet) -> Result<RotationFit> {
    check_pairs(centered_data, centered_model)?;
    let m = centered_data.dim();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for (d, q) in centered_data.iter().zip(centered_model.iter()) {
        for r in 0..m {
            for c in 0..m {
                h[(r, c)] += d[r] * q[c];
            }
        }
    }
    h /= centered_data.len() as f64;
    Ok(rotation_from_cross_covariance(&h, &Tolerances::DEFAULT))
}

pub(crate) fn rotation_from_cross_covariance(h: &DMatrix<f64>, tol: &Tolerances) -> RotationFit {
    let m = h.nrows();
    let svd = h.clone().svd(true, true);
    let sv = &svd.singular_values;
    let largest = sv.max();
    if !(largest > 0.0) {
        return RotationFit {
            rotation: DMatrix::identity(m, m),
            degenerate: true,
        };
    }
    let rank = sv.iter().filter(|&&v| v > tol.rank * largest).count();

    let u = svd.u.expect("svd computed with u");
    let v = svd.v_t.expect("svd computed with v_t").transpose();
    let mut signs = DVector::from_element(m, 1.0);
    if (&v * u.transpose()).determinant() < 0.0 {
        let smallest = (0..m).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        signs[smallest] = -1.0;
    }
    let rotation = &v * DMatrix::from_diagonal(&signs) * u.transpose();
    RotationFit {
        rotation,
        degenerate: rank + 1 < m,
    }
}

/// `sum m_i . R d_i` and `sum |m_i|^2` over centered pairs.
fn scale_terms(d: &PointSet, m: &PointSet, rotation: &DMatrix<f64>) -> (f64, f64, f64) {
    let dim = d.dim();
    let mut cross = 0.0;
    let mut model_sq = 0.0;
    let mut data_sq = 0.0;
    let mut rd = vec![0.0; dim];
    for (dp, mp) in d.iter().zip(m.iter()) {
        for r in 0..dim {
            rd[r] = (0..dim).map(|c| rotation[(r, c)] * dp[c]).sum();
        }
        cross += rd.iter().zip(mp).map(|(a, b)| a * b).sum::<f64>();
        model_sq += mp.iter().map(|v| v * v).sum::<f64>();
        data_sq += dp.iter().map(|v| v * v).sum::<f64>();
    }
    (cross, model_sq, data_sq)
}

/// Stationary point of `F(s) = sum |s R d_i - m_i|^2 / s^2`:
/// `s = sum |m_i|^2 / sum m_i . R d_i`.
///
/// Fails with [`Error::DegenerateScale`] when the denominator does not exceed
/// `1e-12 * sum |m_i|^2`.
pub fn estimate_scale(
    centered_data: &PointSet,
    centered_model: &PointSet,
    rotation: &DMatrix<f64>,
) -> Result<f64> {
    check_pairs(centered_data, centered_model)?;
    let (cross, model_sq, _) = scale_terms(centered_data, centered_model, rotation);
    let floor = Tolerances::DEFAULT.scale_denominator * model_sq;
    if !(cross > floor) {
        return Err(Error::DegenerateScale {
            iteration: 0,
            denominator: cross,
            floor,
        });
    }
    Ok(model_sq / cross)
}

/// Unregularized least-squares scale `sum m_i . R d_i / sum |d_i|^2`, the
/// minimizer of `sum |s R d_i - m_i|^2` without the `1/s^2` weight.
pub fn estimate_least_squares_scale(
    centered_data: &PointSet,
    centered_model: &PointSet,
    rotation: &DMatrix<f64>,
) -> Result<f64> {
    check_pairs(centered_data, centered_model)?;
    let (cross, model_sq, data_sq) = scale_terms(centered_data, centered_model, rotation);
    if !(data_sq > 0.0) {
        return Err(Error::DegenerateShape("data points coincide"));
    }
    let floor = Tolerances::DEFAULT.scale_denominator * model_sq;
    if !(cross > floor) {
        return Err(Error::DegenerateScale {
            iteration: 0,
            denominator: cross,
            floor,
        });
    }
    Ok(cross / data_sq)
}

/// `mean(q_c(i)) - s R mean(p_i)`.
pub fn estimate_translation(
    data: &PointSet,
    matched_model: &PointSet,
    scale: f64,
    rotation: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_pairs(data, matched_model)?;
    Ok(matched_model.centroid() - scale * (rotation * data.centroid()))
}

/// Sum of squared residuals `|s R p_i + t - q_i|^2`, unweighted.
pub(crate) fn residual_sum(
    data: &PointSet,
    matched_model: &PointSet,
    transform: &SimilarityTransform,
) -> f64 {
    let mut buf = vec![0.0; data.dim()];
    data.iter()
        .zip(matched_model.iter())
        .map(|(p, q)| {
            transform.apply_into(p, &mut buf);
            squared_distance(&buf, q)
        })
        .sum()
}

/// `F = sum_i |s R p_i + t - q_i|^2 / s^2` (a sum, not a mean).
pub fn objective_value(
    data: &PointSet,
    matched_model: &PointSet,
    transform: &SimilarityTransform,
) -> Result<f64> {
    check_pairs(data, matched_model)?;
    data.check_dim(transform.dim())?;
    let s = transform.scale();
    Ok(residual_sum(data, matched_model, transform) / (s * s))
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `(F_prev - F) <= objective_rel_tol * F_prev`.
    pub objective_rel_tol: f64,
    /// Starting transform; identity when `None`.
    pub initial_transform: Option<SimilarityTransform>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            objective_rel_tol: 1e-10,
            initial_transform: None,
        }
    }
}

impl SolverConfig {
    pub fn with_initial(mut self, initial: SimilarityTransform) -> Self {
        self.initial_transform = Some(initial);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        if !(self.objective_rel_tol >= 0.0) {
            return Err(Error::InvalidArgument("objective_rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CorrespondencesUnchanged,
    MaxIterations,
    ObjectiveConverged,
}

/// Which quantity an objective trace holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `sum |s R p + t - q|^2 / s^2`
    ScaleEmphasizedSum,
    /// `sum |s R p + t - q|^2`
    LeastSquaresSum,
}

/// Objective values around one iteration: after the correspondence update
/// (`before_overlap`), after the overlap update (`after_overlap`; equal to the
/// former without trimming) and after the transform update (`after_estimate`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationDiagnostics {
    pub before_overlap: f64,
    pub after_overlap: f64,
    pub after_estimate: f64,
}

#[derive(Debug, Clone)]
pub struct RegistrationResult {
    pub transform: SimilarityTransform,
    /// One entry per iteration, evaluated after the transform update.
    pub objective_trace: Vec<f64>,
    pub objective: ObjectiveKind,
    pub scale_trace: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Mean squared residual over the pairs used in the final estimate.
    pub final_mse: f64,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Iterations whose rotation maximizer was not unique.
    pub degenerate_rotations: usize,
    /// Set for the unregularized least-squares run, which exists only to
    /// exhibit scale collapse.
    pub diagnostic_only: bool,
}

/// Full-overlap scaling ICP.
pub fn run_scaling_icp(data: &PointSet, model: &PointSet, cfg: &SolverConfig) -> Result<RegistrationResult> {
    let out = solver::run(data, model, &EngineConfig::full(cfg, ScaleRule::Emphasized))?;
    Ok(out.registration)
}

/// Same loop with the plain least-squares scale. Prone to shrinking the data
/// onto a few model points; kept as a diagnostic.
pub fn run_naive_ls_icp(data: &PointSet, model: &PointSet, cfg: &SolverConfig) -> Result<RegistrationResult> {
    let out = solver::run(data, model, &EngineConfig::full(cfg, ScaleRule::LeastSquares))?;
    Ok(out.registration)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::transform::rotation_2d;

    fn set(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    fn random_centered(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> PointSet {
        let coords = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        PointSet::new(dim, coords).unwrap().center().0
    }

    #[test]
    fn correspondences_identity_match_self() {
        let p = set(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]]);
        let idx = NearestNeighborIndex::build(p.clone());
        let c = establish_correspondences(&p, &SimilarityTransform::identity(2), &idx).unwrap();
        assert_eq!(c.model_indices(), &[0, 1, 2, 3]);
        assert!(c.pairs().all(|pair| pair.distance == 0.0));
    }

    #[test]
    fn correspondences_single_point() {
        let idx = NearestNeighborIndex::build(set(&[[1.0, 0.0], [5.0, 0.0]]));
        let c = establish_correspondences(&set(&[[0.0, 0.0]]), &SimilarityTransform::identity(2), &idx)
            .unwrap();
        assert_eq!(
            c.get(0),
            Correspondence {
                data_index: 0,
                model_index: 0,
                distance: 1.0
            }
        );
    }

    #[test]
    fn rotation_identity_and_quarter_turn() {
        let d = set(&[[1.0, 0.0], [-1.0, 0.5], [0.0, -0.5]]);
        let fit = estimate_rotation(&d, &d).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.rotation - DMatrix::identity(2, 2)).amax() < 1e-9);

        let rot = rotation_2d(FRAC_PI_2);
        let m = PointSet::from_vectors(&(0..d.len()).map(|i| &rot * d.vector(i)).collect::<Vec<_>>())
            .unwrap();
        let fit = estimate_rotation(&d, &m).unwrap();
        assert!((fit.rotation - rot).amax() < 1e-9);
    }

    #[test]
    fn rotation_is_invariant_to_positive_data_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_centered(&mut rng, 30, 3);
        let m = random_centered(&mut rng, 30, 3);
        let a = estimate_rotation(&d, &m).unwrap().rotation;
        let d7 = PointSet::new(3, d.coords().iter().map(|v| v * 7.5).collect()).unwrap();
        let b = estimate_rotation(&d7, &m).unwrap().rotation;
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn rotation_flags_rank_deficiency() {
        // all points on a line in 3-D: rotation about that line is free
        let d = PointSet::from_rows(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        let fit = estimate_rotation(&d, &d).unwrap();
        assert!(fit.degenerate);
        assert!((fit.rotation.determinant() - 1.0).abs() < 1e-9);

        let zero = PointSet::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(estimate_rotation(&zero, &zero).unwrap().degenerate);
    }

    #[test]
    fn rotation_rejects_count_mismatch() {
        let a = set(&[[0.0, 0.0], [1.0, 1.0]]);
        let b = set(&[[0.0, 0.0]]);
        assert!(matches!(estimate_rotation(&a, &b), Err(Error::CountMismatch { .. })));
    }

    #[test]
    fn scale_examples() {
        let d = set(&[[1.0, 0.0], [-1.0, 0.5], [0.0, -0.5]]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(estimate_scale(&d, &d, &id).unwrap(), 1.0);
        let m2 = PointSet::new(2, d.coords().iter().map(|v| 2.0 * v).collect()).unwrap();
        assert_eq!(estimate_scale(&d, &m2, &id).unwrap(), 2.0);
        assert_eq!(estimate_least_squares_scale(&d, &m2, &id).unwrap(), 2.0);
    }

    #[test]
    fn scale_rejects_anticorrelated_rotation() {
        let d = set(&[[1.0, 0.0], [-1.0, 0.0]]);
        let flip = rotation_2d(std::f64::consts::PI);
        assert!(matches!(
            estimate_scale(&d, &d, &flip),
            Err(Error::DegenerateScale { .. })
        ));
    }

    #[test]
    fn translation_examples() {
        let p = set(&[[0.0, 0.0], [2.0, 1.0]]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(estimate_translation(&p, &p, 1.0, &id).unwrap().as_slice(), &[0.0, 0.0]);
        let shifted = p.translated(&DVector::from_vec(vec![3.0, -1.0]));
        let t = estimate_translation(&p, &shifted, 1.0, &id).unwrap();
        assert!((t - DVector::from_vec(vec![3.0, -1.0])).amax() < 1e-15);
    }

    #[test]
    fn objective_examples() {
        let p = set(&[[0.0, 0.0]]);
        let id = SimilarityTransform::identity(2);
        assert_eq!(objective_value(&p, &p, &id).unwrap(), 0.0);
        assert_eq!(objective_value(&p, &set(&[[1.0, 0.0]]), &id).unwrap(), 1.0);
        let t = SimilarityTransform::from_2d(2.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(objective_value(&set(&[[1.0, 0.0]]), &p, &t).unwrap(), 1.0);
    }

    #[test]
    fn identical_sets_converge_in_one_iteration() {
        let p = set(&[[0.0, 0.0], [1.0, 0.2], [0.3, 2.0], [3.0, 3.5], [-1.0, 0.7]]);
        let res = run_scaling_icp(&p, &p, &SolverConfig::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.objective_trace.len(), 1);
        assert!(res.objective_trace[0] < 1e-20);
        assert_eq!(res.termination, Termination::CorrespondencesUnchanged);
        assert!((res.transform.scale() - 1.0).abs() < 1e-12);

        let naive = run_naive_ls_icp(&p, &p, &SolverConfig::default()).unwrap();
        assert!((naive.transform.scale() - 1.0).abs() < 1e-12);
        assert!(naive.objective_trace[0] < 1e-20);
        assert!(naive.diagnostic_only);
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        let p = set(&[[0.0, 0.0], [1.0, 0.0]]);
        assert!(run_scaling_icp(&p, &p, &cfg).is_err());
    }
}
