//! Merging two occupancy grids of different resolutions.
//!
//! Edge cells (occupied cells touching free space) of both maps are
//! registered with trimmed scaling ICP, then the other map is resampled into
//! the reference frame and composited cell by cell.

mod pgm;

use serde::Serialize;

pub use pgm::{encode_pgm, encode_pgm_ascii, load_pgm, parse_pgm, save_pgm, PgmThresholds};

use crate::error::{Error, Result};
use crate::points::PointSet;
use crate::transform::{SimilarityTransform, TransformRecord};
use crate::trimmed::{run_strimmed_icp, TrimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

impl CellState {
    /// Compositing rule: occupied beats free beats unknown.
    pub fn combine(self, other: CellState) -> CellState {
        self.max(other)
    }
}

/// Row-major grid; cell `(col, row)` covers
/// `origin + [col, col + 1) x [row, row + 1)` in units of `resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: [f64; 2],
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, cells: Vec<CellState>) -> Result<Self> {
        Self::with_origin(width, height, resolution, [0.0, 0.0], cells)
    }

    pub fn with_origin(
        width: usize,
        height: usize,
        resolution: f64,
        origin: [f64; 2],
        cells: Vec<CellState>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("occupancy grid"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidArgument(format!("resolution must be positive, got {resolution}")));
        }
        if cells.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} cells for a {width}x{height} grid",
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells,
        })
    }

    pub fn filled(width: usize, height: usize, resolution: f64, state: CellState) -> Result<Self> {
        Self::new(width, height, resolution, vec![state; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn cells(&self) -> &[CellState] {
        &self.cells
    }

    pub fn get(&self, col: usize, row: usize) -> CellState {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, state: CellState) {
        self.cells[row * self.width + col] = state;
    }

    /// State at signed coordinates; outside the grid reads as unknown.
    pub fn get_signed(&self, col: i64, row: i64) -> CellState {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            CellState::Unknown
        } else {
            self.get(col as usize, row as usize)
        }
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.resolution,
            self.origin[1] + (row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell containing a metric point, as signed indices.
    pub fn locate(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.resolution).floor() as i64,
            ((y - self.origin[1]) / self.resolution).floor() as i64,
        )
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }
}

/// Metric centers of occupied cells with a free 4-neighbour, row-major.
pub fn extract_edge_points(grid: &OccupancyGrid) -> Result<PointSet> {
    let mut coords = Vec::new();
    for row in 0..grid.height {
        for col in 0..grid.width {
            if grid.get(col, row) != CellState::Occupied {
                continue;
            }
            let (c, r) = (col as i64, row as i64);
            let touches_free = [(c - 1, r), (c + 1, r), (c, r - 1), (c, r + 1)]
                .iter()
                .any(|&(nc, nr)| grid.get_signed(nc, nr) == CellState::Free);
            if touches_free {
                coords.extend(grid.cell_center(col, row));
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyEdges);
    }
    PointSet::new(2, coords)
}

#[derive(Debug, Clone)]
pub struct MergeConfig {
    pub registration: TrimConfig,
    /// Reject the merge when the final registration MSE exceeds
    /// `(max_rms_cells * reference resolution)^2`.
    pub max_rms_cells: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            registration: TrimConfig::default(),
            max_rms_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MergeReport {
    /// Maps the other map's metric frame into the reference frame.
    pub transform: TransformRecord,
    pub overlap: f64,
    /// `(reference, other)` edge point counts.
    pub edge_counts: (usize, usize),
    pub output_resolution: f64,
    /// Trimmed mean squared edge residual, in reference units squared.
    pub final_mse: f64,
    pub iterations: usize,
    /// Cells added on the (left, top) side to fit the other map.
    pub padding: (usize, usize),
    pub output_size: (usize, usize),
}

/// Registers `other` onto `reference` starting from `init` and composites both
/// into one grid at the reference resolution and frame.
pub fn merge_maps(
    reference: &OccupancyGrid,
    other: &OccupancyGrid,
    cfg: &MergeConfig,
    init: &SimilarityTransform,
) -> Result<(OccupancyGrid, MergeReport)> {
    if init.dim() != 2 {
        return Err(Error::Dimension {
            expected: 2,
            found: init.dim(),
        });
    }
    let ref_edges = extract_edge_points(reference)?;
    let other_edges = extract_edge_points(other)?;
    let mut reg_cfg = cfg.registration.clone();
    reg_cfg.solver.initial_transform = Some(init.clone());
    let result = run_strimmed_icp(&other_edges, &ref_edges, &reg_cfg)?;
    let transform = result.registration.transform.clone();

    let merged = composite(reference, other, &transform)?;
    let report = MergeReport {
        transform: transform.to_record(),
        overlap: result.overlap,
        edge_counts: (ref_edges.len(), other_edges.len()),
        output_resolution: merged.grid.resolution,
        final_mse: result.registration.final_mse,
        iterations: result.registration.iterations,
        padding: merged.padding,
        output_size: (merged.grid.width, merged.grid.height),
    };
    let bound = (cfg.max_rms_cells * reference.resolution).powi(2);
    if !(report.final_mse <= bound) {
        return Err(Error::MergeRejected {
            report: Box::new(report),
            bound,
        });
    }
    Ok((merged.grid, report))
}

pub struct Composite {
    pub grid: OccupancyGrid,
    pub padding: (usize, usize),
}

/// Resamples `other` through `transform` (other frame -> reference frame) onto
/// the reference lattice, growing the canvas as needed, and combines states.
///
/// Each output cell takes the other map's cell containing the pre-image of its
/// center (nearest-cell lookup), so no holes appear when the other map is coarser.
pub fn composite(
    reference: &OccupancyGrid,
    other: &OccupancyGrid,
    transform: &SimilarityTransform,
) -> Result<Composite> {
    // Extent of the other map's known cells on the reference lattice.
    let (mut lo_c, mut lo_r, mut hi_c, mut hi_r) = (0i64, 0i64, reference.width as i64 - 1, reference.height as i64 - 1);
    let mut buf = [0.0; 2];
    for row in 0..other.height {
        for col in 0..other.width {
            if other.get(col, row) == CellState::Unknown {
                continue;
            }
            transform.apply_into(&other.cell_center(col, row), &mut buf);
            let (c, r) = reference.locate(buf[0], buf[1]);
            lo_c = lo_c.min(c);
            lo_r = lo_r.min(r);
            hi_c = hi_c.max(c);
            hi_r = hi_r.max(r);
        }
    }
    let pad = ((-lo_c) as usize, (-lo_r) as usize);
    let width = (hi_c - lo_c + 1) as usize;
    let height = (hi_r - lo_r + 1) as usize;
    let origin = [
        reference.origin[0] - pad.0 as f64 * reference.resolution,
        reference.origin[1] - pad.1 as f64 * reference.resolution,
    ];
    let mut grid = OccupancyGrid::with_origin(
        width,
        height,
        reference.resolution,
        origin,
        vec![CellState::Unknown; width * height],
    )?;
    for row in 0..reference.height {
        for col in 0..reference.width {
            grid.set(col + pad.0, row + pad.1, reference.get(col, row));
        }
    }

    let inverse = transform.inverse();
    for row in 0..height {
        for col in 0..width {
            inverse.apply_into(&grid.cell_center(col, row), &mut buf);
            let (oc, or) = other.locate(buf[0], buf[1]);
            let state = other.get_signed(oc, or);
            if state != CellState::Unknown {
                let merged = grid.get(col, row).combine(state);
                grid.set(col, row, merged);
            }
        }
    }
    Ok(Composite { grid, padding: pad })
}
