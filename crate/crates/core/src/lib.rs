//! Scale-aware ICP registration with trimmed overlap estimation, baselines,
//! occupancy-map merging and an experiment harness.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod mapmerge;
pub mod nnindex;
pub mod points;
pub mod scaling_icp;
mod solver;
pub mod tolerances;
pub mod transform;
pub mod trimmed;

pub use baselines::{pca_scale_estimate, principal_axes_initializations, run_bounded_tricp, ScaleBounds};
pub use error::{Error, Result};
pub use mapmerge::{merge_maps, CellState, MergeConfig, MergeReport, OccupancyGrid};
pub use nnindex::NearestNeighborIndex;
pub use points::PointSet;
pub use scaling_icp::{
    run_naive_ls_icp, run_scaling_icp, CorrespondenceSet, IterationDiagnostics, RegistrationResult, SolverConfig,
    Termination,
};
pub use tolerances::Tolerances;
pub use transform::{SimilarityTransform, TransformRecord};
pub use trimmed::{run_strimmed_icp, TrimConfig, TrimmedResult};
