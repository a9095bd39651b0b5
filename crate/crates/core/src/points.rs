//! Point sets stored as flat row-major coordinate arrays.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// An ordered, non-empty collection of points in `dim >= 2` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    /// Builds a point set from `dim`-strided coordinates.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "point dimension must be at least 2, got {dim}"
            )));
        }
        if coords.is_empty() {
            return Err(Error::Empty("point set"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not divide into {dim}-D points",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite coordinate in point {}",
                bad / dim
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("point set"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    pub fn from_vectors(points: &[DVector<f64>]) -> Result<Self> {
        let rows: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        Self::from_rows(&rows)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(i))
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }

    /// Component-wise arithmetic mean.
    pub fn centroid(&self) -> DVector<f64> {
        let mut sum = DVector::zeros(self.dim);
        for p in self.iter() {
            for (s, c) in sum.iter_mut().zip(p) {
                *s += c;
            }
        }
        sum / self.len() as f64
    }

    /// Subtracts the centroid from every point; returns the centered set and the centroid.
    pub fn center(&self) -> (PointSet, DVector<f64>) {
        let c = self.centroid();
        (self.translated(&(-&c)), c)
    }

    pub fn translated(&self, offset: &DVector<f64>) -> PointSet {
        debug_assert_eq!(offset.len(), self.dim);
        let coords = self
            .iter()
            .flat_map(|p| p.iter().zip(offset.iter()).map(|(a, b)| a + b))
            .collect();
        PointSet {
            dim: self.dim,
            coords,
        }
    }

    /// Points at `indices`, in that order. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Result<PointSet> {
        if indices.is_empty() {
            return Err(Error::Empty("index selection"));
        }
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for {} points",
                    self.len()
                )));
            }
            coords.extend_from_slice(self.point(i));
        }
        Ok(PointSet {
            dim: self.dim,
            coords,
        })
    }

    /// Sum of squared distances to the centroid.
    pub fn total_variance(&self) -> f64 {
        let c = self.centroid();
        self.iter()
            .map(|p| p.iter().zip(c.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum()
    }

    /// Largest pairwise extent along the bounding-box diagonal.
    pub fn bbox_diameter(&self) -> f64 {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Reads a point file: PLY (ASCII, vertex x/y/z) when the file starts with `ply`,
    /// otherwise whitespace-separated reals, one point per line.
    pub fn read(path: impl AsRef<Path>) -> Result<PointSet> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<PointSet> {
        if text.trim_start().starts_with("ply") {
            parse_ply(text)
        } else {
            parse_plain(text)
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.coords.len() * 12);
        for p in self.iter() {
            let line: Vec<String> = p.iter().map(|c| format!("{c}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Iterates the non-blank, non-comment lines of `text` with their byte offsets.
fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').filter_map(move |raw| {
        let start = offset;
        offset += raw.len();
        let line = raw.trim();
        (!line.is_empty() && !line.starts_with('#')).then_some((start, line))
    })
}

fn parse_reals(offset: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(offset, format!("not a number: {tok:?}")))
        })
        .collect()
}

fn parse_plain(text: &str) -> Result<PointSet> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (offset, line) in lines_with_offsets(text) {
        let row = parse_reals(offset, line)?;
        let d = *dim.get_or_insert(row.len());
        if row.len() != d {
            return Err(Error::parse(
                offset,
                format!("expected {d} coordinates, found {}", row.len()),
            ));
        }
        coords.extend(row);
    }
    let dim = dim.ok_or(Error::Empty("point file"))?;
    PointSet::new(dim, coords).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::parse(0, m),
        other => other,
    })
}

fn parse_ply(text: &str) -> Result<PointSet> {
    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }

    let mut lines = lines_with_offsets(text);
    let mut elements: Vec<Element> = Vec::new();
    let mut body_offset = text.len();
    for (offset, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("ply") | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::parse(offset, "only ASCII PLY is supported"));
                }
            }
            Some("element") => {
                let name = tok.next().unwrap_or_default().to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(offset, "bad element count"))?;
                elements.push(Element {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(offset, "property before element"))?;
                // `property list <count> <item> name` also ends with the name.
                let name = line.split_whitespace().last().unwrap_or_default();
                el.props.push(name.to_string());
            }
            Some("end_header") => {
                body_offset = offset + line.len();
                break;
            }
            _ => return Err(Error::parse(offset, format!("unexpected header line {line:?}"))),
        }
    }

    let mut coords = Vec::new();
    for el in &elements {
        let axes: Option<Vec<usize>> = (el.name == "vertex").then(|| {
            ["x", "y", "z"]
                .iter()
                .filter_map(|a| el.props.iter().position(|p| p == a))
                .collect()
        });
        if let Some(axes) = &axes {
            if axes.len() != 3 {
                return Err(Error::parse(body_offset, "vertex element lacks x/y/z"));
            }
        }
        for _ in 0..el.count {
            let (offset, line) = lines
                .next()
                .ok_or_else(|| Error::parse(text.len(), format!("truncated {} data", el.name)))?;
            if let Some(axes) = &axes {
                let vals = parse_reals(offset, line)?;
                for &a in axes {
                    let v = vals
                        .get(a)
                        .ok_or_else(|| Error::parse(offset, "short vertex line"))?;
                    coords.push(*v);
                }
            }
        }
    }
    if coords.is_empty() {
        return Err(Error::parse(body_offset, "PLY has no vertices"));
    }
    PointSet::new(3, coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centroid_examples() {
        let p = PointSet::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(p.centroid().as_slice(), &[1.0, 0.0]);
        let p = PointSet::from_rows(&[[1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(p.centroid().as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn centroid_of_grid_matches_direct_sum() {
        let rows: Vec<[f64; 2]> = (0..10)
            .flat_map(|i| (0..10).map(move |j| [i as f64 * 0.3 - 1.0, j as f64 * 0.7 + 2.0]))
            .collect();
        let p = PointSet::from_rows(&rows).unwrap();
        let c = p.centroid();
        // grid center from the axis extremes
        assert!((c[0] - (-1.0 + 2.7 - 1.0) / 2.0).abs() < 1e-12);
        assert!((c[1] - (2.0 + 6.3 + 2.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn center_examples() {
        let p = PointSet::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        let (d, c) = p.center();
        assert_eq!(d.coords(), &[-1.0, 0.0, 1.0, 0.0]);
        assert_eq!(c.as_slice(), &[1.0, 0.0]);

        let p = PointSet::from_rows(&[[5.0, 5.0]]).unwrap();
        let (d, c) = p.center();
        assert_eq!(d.coords(), &[0.0, 0.0]);
        assert_eq!(c.as_slice(), &[5.0, 5.0]);
    }

    #[test]
    fn center_round_trip_3d() {
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let x = i as f64;
                [(x * 1.3).sin() * 4.0, (x * 0.7).cos() + 2.0, x * 0.125 - 3.0]
            })
            .collect();
        let p = PointSet::from_rows(&rows).unwrap();
        let (d, c) = p.center();
        assert!(d.centroid().amax() <= 1e-12);
        let back = d.translated(&c);
        for (a, b) in back.coords().iter().zip(p.coords()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(PointSet::new(1, vec![1.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(PointSet::new(2, vec![]), Err(Error::Empty(_))));
        assert!(PointSet::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointSet::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn parses_plain_text() {
        let p = PointSet::parse("# header\n1 2\n\n3.5 -4e1\n").unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.coords(), &[1.0, 2.0, 3.5, -40.0]);

        match PointSet::parse("1 2\n3 4 5\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(PointSet::parse("1 x\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn parses_ascii_ply_vertices_only() {
        let ply = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\n\
                   property float y\nproperty float z\nproperty float confidence\n\
                   element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                   1 2 3 0.5\n4 5 6 0.9\n3 0 1 1\n";
        let p = PointSet::parse(ply).unwrap();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.coords(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let truncated = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\n\
                         property float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(matches!(PointSet::parse(truncated), Err(Error::Parse { .. })));
    }

    #[test]
    fn text_round_trip() {
        let p = PointSet::from_rows(&[[0.1, 1e-300, 7.0], [-2.5, 3.0, 1.0 / 3.0]]).unwrap();
        assert_eq!(PointSet::parse(&p.to_text()).unwrap(), p);
    }
}
