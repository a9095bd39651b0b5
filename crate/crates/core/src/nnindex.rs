//! Exact nearest-neighbour search over the model shape with a static k-d tree.
//!
//! Ties on distance resolve to the smallest model index, so every query is a
//! deterministic function of its input. Pruning only discards a subtree when
//! its splitting plane is strictly farther than the current best, which keeps
//! equidistant candidates with smaller indices reachable.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::points::PointSet;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Squared Euclidean distance, summed in axis order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone)]
pub struct NearestNeighborIndex {
    source: PointSet,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl NearestNeighborIndex {
    pub fn build(source: PointSet) -> Self {
        let mut order: Vec<usize> = (0..source.len()).collect();
        let mut nodes = Vec::with_capacity(2 * source.len() / LEAF_SIZE + 1);
        build_node(&source, &mut order, 0, &mut nodes);
        Self {
            source,
            order,
            nodes,
        }
    }

    pub fn source(&self) -> &PointSet {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    /// Returns `(model_index, distance)` of the nearest model point.
    pub fn query_nearest(&self, x: &[f64]) -> Result<(usize, f64)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let (idx, d2) = self.nearest_squared(x);
        Ok((idx, d2.sqrt()))
    }

    /// Nearest neighbour of every point of `queries`, in query order.
    pub fn query_batch(&self, queries: &PointSet) -> Result<Vec<(usize, f64)>> {
        queries.check_dim(self.dim())?;
        Ok(queries
            .coords()
            .par_chunks_exact(self.dim())
            .map(|q| {
                let (i, d2) = self.nearest_squared(q);
                (i, d2.sqrt())
            })
            .collect())
    }

    pub(crate) fn nearest_squared(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, x, &mut best);
        best
    }

    fn search(&self, node: usize, x: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = squared_distance(x, self.source.point(i));
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = x[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, x, best);
                if diff * diff <= best.1 {
                    self.search(far, x, best);
                }
            }
        }
    }
}

/// Builds the subtree over `order` (a window starting at `offset` in the full
/// permutation) and returns its node id.
fn build_node(points: &PointSet, order: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }

    let dim = points.dim();
    let axis = (0..dim)
        .map(|k| {
            let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = points.point(i)[k];
                (lo.min(v), hi.max(v))
            });
            (k, hi - lo)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .unwrap_or(0);

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points.point(a)[axis]
            .total_cmp(&points.point(b)[axis])
            .then(a.cmp(&b))
    });
    let value = points.point(order[mid])[axis];

    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = order.split_at_mut(mid);
    let left = build_node(points, lo, offset, nodes);
    let right = build_node(points, hi, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}

/// Exhaustive scan with the same tie rule as the tree; reference for testing.
pub fn brute_force_nearest(model: &PointSet, x: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, q) in model.iter().enumerate() {
        let d2 = squared_distance(x, q);
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    (best.0, best.1.sqrt())
}
