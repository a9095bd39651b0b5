//! The alternating loop shared by every solver: correspondences, optional
//! overlap trimming, closed-form transform update.

use rayon::prelude::*;

use crate::baselines::ScaleBounds;
use crate::error::{Error, Result};
use crate::nnindex::NearestNeighborIndex;
use crate::points::PointSet;
use crate::scaling_icp::{
    estimate_least_squares_scale, estimate_rotation, estimate_scale, estimate_translation,
    residual_sum, IterationDiagnostics, ObjectiveKind, RegistrationResult, SolverConfig, Termination,
};
use crate::transform::SimilarityTransform;
use crate::trimmed::{scan_prefixes, TrimConfig};

#[derive(Debug, Clone, Copy)]
pub(crate) enum ScaleRule {
    /// Minimizer of the `1/s^2`-weighted objective.
    Emphasized,
    /// Plain least-squares scale.
    LeastSquares,
    /// Least-squares scale clamped into the bounds.
    Clamped(ScaleBounds),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Trim {
    pub lambda: f64,
    pub min_overlap: f64,
}

pub(crate) struct EngineConfig<'a> {
    pub solver: &'a SolverConfig,
    pub rule: ScaleRule,
    pub trim: Option<Trim>,
}

impl<'a> EngineConfig<'a> {
    pub fn full(solver: &'a SolverConfig, rule: ScaleRule) -> Self {
        Self {
            solver,
            rule,
            trim: None,
        }
    }

    pub fn trimmed(cfg: &'a TrimConfig, rule: ScaleRule) -> Self {
        Self {
            solver: &cfg.solver,
            rule,
            trim: Some(Trim {
                lambda: cfg.lambda,
                min_overlap: cfg.min_overlap,
            }),
        }
    }
}

pub(crate) struct EngineOutput {
    pub registration: RegistrationResult,
    pub overlap: f64,
    pub subset: Vec<usize>,
    /// Trimmed objective per iteration (empty without trimming).
    pub psi_trace: Vec<f64>,
    pub overlap_trace: Vec<f64>,
}

/// `(model_index, squared_distance)` for every point of `moved`, in order.
pub(crate) fn nearest_all(index: &NearestNeighborIndex, moved: &PointSet) -> Vec<(usize, f64)> {
    moved
        .coords()
        .par_chunks_exact(moved.dim())
        .map(|q| index.nearest_squared(q))
        .collect()
}

struct Objective {
    emphasized: bool,
    trim: Option<Trim>,
}

impl Objective {
    /// Objective value for a residual sum over `count` retained pairs at scale `s`
    /// and overlap `xi`.
    fn eval(&self, sum: f64, count: usize, s: f64, xi: f64) -> f64 {
        let weighted = |v: f64| if self.emphasized { v / (s * s) } else { v };
        match self.trim {
            None => weighted(sum),
            Some(t) => weighted(sum / count as f64) / xi.powf(1.0 + t.lambda),
        }
    }

    /// The untrimmed sum form recorded in `objective_trace`.
    fn sum_form(&self, sum: f64, s: f64) -> f64 {
        if self.emphasized {
            sum / (s * s)
        } else {
            sum
        }
    }
}

pub(crate) fn run(data: &PointSet, model: &PointSet, cfg: &EngineConfig<'_>) -> Result<EngineOutput> {
    cfg.solver.validate()?;
    if let Some(t) = cfg.trim {
        if !(t.min_overlap > 0.0 && t.min_overlap <= 1.0) {
            return Err(Error::InvalidArgument("min_overlap must lie in (0, 1]".into()));
        }
        if !(t.lambda >= 0.0) {
            return Err(Error::InvalidArgument("lambda must be >= 0".into()));
        }
    }
    model.check_dim(data.dim())?;
    let dim = data.dim();
    let n = data.len();

    let mut transform = match &cfg.solver.initial_transform {
        Some(t) => {
            if t.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: t.dim(),
                });
            }
            t.clone()
        }
        None => SimilarityTransform::identity(dim),
    };

    let objective = Objective {
        emphasized: matches!(cfg.rule, ScaleRule::Emphasized),
        trim: cfg.trim,
    };
    let index = NearestNeighborIndex::build(model.clone());

    let mut subset: Vec<usize> = (0..n).collect();
    let mut xi = 1.0;
    let mut prev_matches: Option<Vec<usize>> = None;

    let mut objective_trace = Vec::new();
    let mut psi_trace = Vec::new();
    let mut overlap_trace = Vec::new();
    let mut scale_trace = Vec::new();
    let mut diagnostics = Vec::new();
    let mut degenerate_rotations = 0;
    let mut final_mse = f64::NAN;
    let mut termination = Termination::MaxIterations;

    for iteration in 1..=cfg.solver.max_iterations {
        let moved = transform.apply(data)?;
        let (matches, sq): (Vec<usize>, Vec<f64>) = nearest_all(&index, &moved).into_iter().unzip();
        let s_prev = transform.scale();
        let subset_sum = |idx: &[usize]| idx.iter().map(|&i| sq[i]).sum::<f64>();

        let before_overlap = objective.eval(subset_sum(&subset), subset.len(), s_prev, xi);

        let (next_subset, next_xi) = match cfg.trim {
            None => (subset.clone(), 1.0),
            Some(t) => {
                let s_weight = if objective.emphasized { s_prev } else { 1.0 };
                let sel = scan_prefixes(&sq, s_weight, t.lambda, t.min_overlap);
                (sel.subset, sel.xi)
            }
        };
        let after_overlap = objective.eval(subset_sum(&next_subset), next_subset.len(), s_prev, next_xi);

        if prev_matches.as_deref() == Some(&matches[..]) && next_subset == subset {
            termination = Termination::CorrespondencesUnchanged;
            break;
        }
        subset = next_subset;
        xi = next_xi;

        let data_sub = data.select(&subset)?;
        let model_idx: Vec<usize> = subset.iter().map(|&i| matches[i]).collect();
        let model_sub = model.select(&model_idx)?;
        let (d, _) = data_sub.center();
        let (m, _) = model_sub.center();

        let fit = estimate_rotation(&d, &m)?;
        if fit.degenerate {
            degenerate_rotations += 1;
        }
        let scale = match cfg.rule {
            ScaleRule::Emphasized => estimate_scale(&d, &m, &fit.rotation),
            ScaleRule::LeastSquares => estimate_least_squares_scale(&d, &m, &fit.rotation),
            ScaleRule::Clamped(bounds) => {
                estimate_least_squares_scale(&d, &m, &fit.rotation).map(|s| bounds.clamp(s))
            }
        }
        .map_err(|e| e.at_iteration(iteration))?;
        let translation = estimate_translation(&data_sub, &model_sub, scale, &fit.rotation)?;
        transform = SimilarityTransform::new(scale, fit.rotation, translation)?;

        let sum = residual_sum(&data_sub, &model_sub, &transform);
        let after_estimate = objective.eval(sum, subset.len(), scale, xi);

        objective_trace.push(objective.sum_form(sum, scale));
        scale_trace.push(scale);
        diagnostics.push(IterationDiagnostics {
            before_overlap,
            after_overlap,
            after_estimate,
        });
        if cfg.trim.is_some() {
            psi_trace.push(after_estimate);
            overlap_trace.push(xi);
        }
        final_mse = sum / subset.len() as f64;
        prev_matches = Some(matches);

        let primary = if cfg.trim.is_some() { &psi_trace } else { &objective_trace };
        if let [.., prev, last] = primary[..] {
            if prev - last <= cfg.solver.objective_rel_tol * prev {
                termination = Termination::ObjectiveConverged;
                break;
            }
        }
    }

    let iterations = objective_trace.len();
    Ok(EngineOutput {
        registration: RegistrationResult {
            transform,
            objective_trace,
            objective: if objective.emphasized {
                ObjectiveKind::ScaleEmphasizedSum
            } else {
                ObjectiveKind::LeastSquaresSum
            },
            scale_trace,
            iterations,
            termination,
            final_mse,
            diagnostics,
            degenerate_rotations,
            diagnostic_only: matches!(cfg.rule, ScaleRule::LeastSquares),
        },
        overlap: xi,
        subset,
        psi_trace,
        overlap_trace,
    })
}
