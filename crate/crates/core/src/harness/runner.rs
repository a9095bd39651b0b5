//! Monte-Carlo trials over generated cases, with CSV/JSON export.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::generate::{base_shape, generate_case, Case};
use super::spec::{Algorithm, BoundsCenter, ExperimentSpec};
use crate::baselines::{pca_scale_estimate, run_bounded_tricp, ScaleBounds};
use crate::error::{Error, Result};
use crate::scaling_icp::{run_naive_ls_icp, run_scaling_icp, RegistrationResult, SolverConfig, Termination};
use crate::tolerances::{first_increase, Tolerances};
use crate::transform::SimilarityTransform;
use crate::trimmed::{run_strimmed_icp, TrimConfig};

/// Solver output reduced to what the harness reports.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub transform: SimilarityTransform,
    /// Trimmed objective for trimmed solvers, the sum objective otherwise.
    pub trace: Vec<f64>,
    pub scale_trace: Vec<f64>,
    pub final_objective: f64,
    pub final_mse: f64,
    pub overlap: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl AlgorithmRun {
    fn from_full(r: RegistrationResult) -> Self {
        Self {
            final_objective: r.objective_trace.last().copied().unwrap_or(f64::NAN),
            transform: r.transform,
            trace: r.objective_trace,
            scale_trace: r.scale_trace,
            final_mse: r.final_mse,
            overlap: 1.0,
            iterations: r.iterations,
            termination: r.termination,
        }
    }
}

/// Runs one algorithm from one starting transform.
pub fn run_algorithm(
    algorithm: Algorithm,
    case: &Case,
    init: &SimilarityTransform,
    spec: &ExperimentSpec,
) -> Result<AlgorithmRun> {
    let solver = SolverConfig {
        max_iterations: spec.max_iterations,
        objective_rel_tol: spec.tolerance,
        initial_transform: Some(init.clone()),
    };
    let trim = TrimConfig {
        solver: solver.clone(),
        lambda: spec.lambda,
        min_overlap: spec.min_overlap,
    };
    let bounds_for = |(lo, hi): (f64, f64)| -> Result<ScaleBounds> {
        let center = match spec.bounds_center {
            BoundsCenter::Pca => pca_scale_estimate(&case.data, &case.model)?,
            BoundsCenter::Truth => case.truth.scale(),
        };
        ScaleBounds::around(center, lo, hi)
    };
    let trimmed = |r: crate::trimmed::TrimmedResult| AlgorithmRun {
        final_objective: r.psi_trace.last().copied().unwrap_or(f64::NAN),
        transform: r.registration.transform,
        trace: r.psi_trace,
        scale_trace: r.registration.scale_trace,
        final_mse: r.registration.final_mse,
        overlap: r.overlap,
        iterations: r.registration.iterations,
        termination: r.registration.termination,
    };
    Ok(match algorithm {
        Algorithm::ScalingIcp => AlgorithmRun::from_full(run_scaling_icp(&case.data, &case.model, &solver)?),
        Algorithm::NaiveLs => AlgorithmRun::from_full(run_naive_ls_icp(&case.data, &case.model, &solver)?),
        Algorithm::Strimmed => trimmed(run_strimmed_icp(&case.data, &case.model, &trim)?),
        Algorithm::BoundedNarrow => {
            trimmed(run_bounded_tricp(&case.data, &case.model, &trim, bounds_for(spec.narrow_bounds)?)?)
        }
        Algorithm::BoundedWide => {
            trimmed(run_bounded_tricp(&case.data, &case.model, &trim, bounds_for(spec.wide_bounds)?)?)
        }
    })
}

/// Runs every starting transform of the case and keeps the lowest final objective.
pub fn run_best_of(algorithm: Algorithm, case: &Case, spec: &ExperimentSpec) -> Result<AlgorithmRun> {
    let mut best: Option<AlgorithmRun> = None;
    let mut last_err = None;
    for init in &case.inits {
        match run_algorithm(algorithm, case, init, spec) {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.final_objective < b.final_objective) {
                    best = Some(run);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::Empty("initial transforms")))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub algorithm: Algorithm,
    /// `ok`, or the error that ended the trial.
    pub status: String,
    /// Mean squared residual over the pairs used in the final estimate.
    pub mse: f64,
    pub time_s: f64,
    pub iterations: usize,
    pub termination: String,
    pub scale: f64,
    pub overlap: f64,
    pub true_scale: f64,
    pub true_overlap: f64,
    /// `|s - s*| / s*`
    pub scale_error: f64,
    /// Radians.
    pub rotation_error: f64,
    /// `|t - t*|` over the model diameter.
    pub translation_error: f64,
    pub overlap_error: f64,
    pub monotone: bool,
}

/// CSV columns excluded from byte-for-byte determinism checks.
pub const TIMING_COLUMNS: &[&str] = &["time_s"];

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub trial: usize,
    pub algorithm: Algorithm,
    pub iteration: usize,
    pub objective: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub mean_mse: f64,
    pub median_mse: f64,
    pub mean_time_s: f64,
    pub mean_scale_error: f64,
    pub median_scale_error: f64,
    pub mean_rotation_error: f64,
    pub mean_translation_error: f64,
    pub mean_overlap_error: f64,
    pub monotone_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub summary: Vec<AlgorithmSummary>,
    pub records: Vec<TrialRecord>,
    #[serde(skip)]
    pub traces: Vec<TraceRow>,
}

impl ExperimentReport {
    pub fn summary_for(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.summary.iter().find(|s| s.algorithm == algorithm)
    }

    pub fn records_for(&self, algorithm: Algorithm) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.algorithm == algorithm)
    }

    pub fn trials_csv(&self) -> Result<String> {
        to_csv(&self.records)
    }

    pub fn traces_csv(&self) -> Result<String> {
        to_csv(&self.traces)
    }

    /// Writes `trials.csv`, `traces.csv`, `summary.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("trials.csv"), self.trials_csv()?)?;
        std::fs::write(dir.join("traces.csv"), self.traces_csv()?)?;
        std::fs::write(dir.join("summary.csv"), to_csv(&self.summary)?)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::CorrespondencesUnchanged => "correspondences_unchanged",
        Termination::MaxIterations => "max_iterations",
        Termination::ObjectiveConverged => "objective_converged",
    }
}

fn run_trial(spec: &ExperimentSpec, case: &Case, trial: usize) -> (Vec<TrialRecord>, Vec<TraceRow>) {
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for &algorithm in &spec.algorithms {
        let start = Instant::now();
        let outcome = run_best_of(algorithm, case, spec);
        let time_s = start.elapsed().as_secs_f64();
        let mut rec = TrialRecord {
            trial,
            algorithm,
            status: "ok".into(),
            mse: f64::NAN,
            time_s,
            iterations: 0,
            termination: String::new(),
            scale: f64::NAN,
            overlap: f64::NAN,
            true_scale: case.truth.scale(),
            true_overlap: case.true_xi,
            scale_error: f64::NAN,
            rotation_error: f64::NAN,
            translation_error: f64::NAN,
            overlap_error: f64::NAN,
            monotone: true,
        };
        match outcome {
            Ok(run) => {
                let t = &run.transform;
                rec.mse = run.final_mse;
                rec.iterations = run.iterations;
                rec.termination = termination_name(run.termination).into();
                rec.scale = t.scale();
                rec.overlap = run.overlap;
                rec.scale_error = (t.scale() - case.truth.scale()).abs() / case.truth.scale();
                rec.rotation_error = t.rotation_angle_to(&case.truth);
                rec.translation_error = (t.translation() - case.truth.translation()).norm() / case.diameter;
                rec.overlap_error = (run.overlap - case.true_xi).abs();
                // Only the scale-emphasized and bounded solvers promise a monotone trace.
                if algorithm != Algorithm::NaiveLs {
                    rec.monotone = first_increase(&run.trace, Tolerances::DEFAULT.monotone_slack).is_none();
                }
                traces.extend(run.trace.iter().zip(&run.scale_trace).enumerate().map(
                    |(k, (&objective, &scale))| TraceRow {
                        trial,
                        algorithm,
                        iteration: k + 1,
                        objective,
                        scale,
                    },
                ));
            }
            Err(e) => rec.status = format!("error: {e}"),
        }
        records.push(rec);
    }
    (records, traces)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn summarize(algorithm: Algorithm, records: &[TrialRecord]) -> AlgorithmSummary {
    let mine: Vec<&TrialRecord> = records.iter().filter(|r| r.algorithm == algorithm).collect();
    let ok: Vec<&&TrialRecord> = mine.iter().filter(|r| r.status == "ok").collect();
    let col = |f: fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let mse = col(|r| r.mse);
    let scale_err = col(|r| r.scale_error);
    AlgorithmSummary {
        algorithm,
        trials: mine.len(),
        failures: mine.len() - ok.len(),
        mean_mse: mean(&mse),
        median_mse: median(&mse),
        mean_time_s: mean(&col(|r| r.time_s)),
        mean_scale_error: mean(&scale_err),
        median_scale_error: median(&scale_err),
        mean_rotation_error: mean(&col(|r| r.rotation_error)),
        mean_translation_error: mean(&col(|r| r.translation_error)),
        mean_overlap_error: mean(&col(|r| r.overlap_error)),
        monotone_violations: ok.iter().filter(|r| !r.monotone).count(),
    }
}

/// Runs all trials (in parallel; results are ordered by trial and algorithm).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let base = base_shape(spec)?;
    let cases: Vec<Case> = (0..spec.trials)
        .map(|t| generate_case(spec, &base, t))
        .collect::<Result<_>>()?;
    let per_trial: Vec<(Vec<TrialRecord>, Vec<TraceRow>)> = cases
        .par_iter()
        .enumerate()
        .map(|(t, case)| run_trial(spec, case, t))
        .collect();
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for (r, t) in per_trial {
        records.extend(r);
        traces.extend(t);
    }
    let summary = spec.algorithms.iter().map(|&a| summarize(a, &records)).collect();
    Ok(ExperimentReport {
        spec: spec.clone(),
        summary,
        records,
        traces,
    })
}

/// Drops the named columns from a CSV document (used to compare runs modulo timing).
pub fn strip_columns(csv_text: &str, drop: &[&str]) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| !drop.contains(&&headers[i])).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &headers[i]))?;
    for rec in rdr.records() {
        let rec = rec?;
        w.write_record(keep.iter().map(|&i| &rec[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(mean(&[]).is_nan());
    }

    #[test]
    fn strip_timing_column() {
        let text = "a,time_s,b\n1,0.5,2\n3,0.7,4\n";
        assert_eq!(strip_columns(text, TIMING_COLUMNS).unwrap(), "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn small_experiment_runs_and_is_reproducible() {
        let spec = ExperimentSpec {
            points: 150,
            trials: 3,
            algorithms: Algorithm::ALL.to_vec(),
            ..ExperimentSpec::default()
        };
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.records.len(), 15);
        assert_eq!(
            strip_columns(&a.trials_csv().unwrap(), TIMING_COLUMNS).unwrap(),
            strip_columns(&b.trials_csv().unwrap(), TIMING_COLUMNS).unwrap()
        );
        assert_eq!(a.traces_csv().unwrap(), b.traces_csv().unwrap());
        for alg in [Algorithm::ScalingIcp, Algorithm::Strimmed] {
            assert_eq!(a.summary_for(alg).unwrap().monotone_violations, 0);
        }
    }
}
