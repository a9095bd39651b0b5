//! Experiment description, read from a flat `key = value` file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ScalingIcp,
    Strimmed,
    BoundedNarrow,
    BoundedWide,
    NaiveLs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::ScalingIcp,
        Algorithm::Strimmed,
        Algorithm::BoundedNarrow,
        Algorithm::BoundedWide,
        Algorithm::NaiveLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ScalingIcp => "scaling_icp",
            Algorithm::Strimmed => "strimmed",
            Algorithm::BoundedNarrow => "bounded_narrow",
            Algorithm::BoundedWide => "bounded_wide",
            Algorithm::NaiveLs => "naive_ls",
        }
    }

    pub fn is_trimmed(self) -> bool {
        matches!(self, Algorithm::Strimmed | Algorithm::BoundedNarrow | Algorithm::BoundedWide)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeSource {
    /// Closed, irregular 2-D contour.
    Contour2d,
    /// Anisotropic bumpy 3-D surface cloud.
    Surface3d,
    /// Point file (plain text or ASCII PLY).
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Ground truth perturbed by the `init_*` magnitudes.
    Perturbed,
    /// Perturbed rotation and translation with the PCA spread ratio as scale.
    PcaScale,
    /// Multi-start from principal-axes alignments; the lowest final objective wins.
    PrincipalAxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsCenter {
    /// PCA spread ratio of the generated pair.
    Pca,
    /// The true scale (an oracle setting for the "bounds cover s*" case).
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub shape: ShapeSource,
    pub points: usize,
    /// Scale of the data-to-model transform, sampled log-uniformly.
    pub scale_range: (f64, f64),
    /// Largest rotation angle, degrees.
    pub rotation_deg: f64,
    /// Largest translation, as a fraction of the model diameter.
    pub translation: f64,
    /// Fraction of data points displaced outside the model's hull.
    pub occlusion: f64,
    /// Gaussian noise sigma, as a fraction of the model diameter.
    pub noise: f64,
    pub trials: usize,
    pub seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub init: InitMode,
    /// Relative scale perturbation: `s0 = s* (1 + u)`, `|u| <= init_scale`.
    pub init_scale: f64,
    pub init_rotation_deg: f64,
    /// Fraction of the model diameter.
    pub init_translation: f64,
    pub lambda: f64,
    pub min_overlap: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub bounds_center: BoundsCenter,
    pub narrow_bounds: (f64, f64),
    pub wide_bounds: (f64, f64),
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            shape: ShapeSource::Contour2d,
            points: 500,
            scale_range: (0.5, 2.0),
            rotation_deg: 30.0,
            translation: 0.5,
            occlusion: 0.0,
            noise: 0.0,
            trials: 20,
            seed: 1,
            algorithms: vec![Algorithm::ScalingIcp, Algorithm::Strimmed],
            init: InitMode::Perturbed,
            init_scale: 0.1,
            init_rotation_deg: 10.0,
            init_translation: 0.05,
            lambda: 2.0,
            min_overlap: 0.3,
            max_iterations: 100,
            tolerance: 1e-10,
            bounds_center: BoundsCenter::Pca,
            narrow_bounds: (0.9, 1.1),
            wide_bounds: (0.5, 2.0),
        }
    }
}

fn parse_pair(v: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts[..] {
        [a, b] => Ok((
            a.parse().map_err(|_| format!("bad number {a:?}"))?,
            b.parse().map_err(|_| format!("bad number {b:?}"))?,
        )),
        _ => Err(format!("expected `lo,hi`, got {v:?}")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad number {v:?}"))
}

impl ExperimentSpec {
    /// Parses `key = value` lines; `#` starts a comment. Relative file paths
    /// resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let at = offset;
            offset += raw.len();
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(at, format!("expected `key = value`, got {line:?}")))?;
            spec.set(key, value, base_dir).map_err(|m| Error::parse(at, m))?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent())
    }

    fn set(&mut self, key: &str, v: &str, base_dir: Option<&Path>) -> Result<(), String> {
        match key {
            "name" => self.name = v.to_string(),
            "shape" => {
                self.shape = match v {
                    "contour2d" => ShapeSource::Contour2d,
                    "surface3d" => ShapeSource::Surface3d,
                    path => {
                        let p = PathBuf::from(path);
                        ShapeSource::File(match base_dir {
                            Some(dir) if p.is_relative() => dir.join(p),
                            _ => p,
                        })
                    }
                }
            }
            "points" => self.points = parse_num(v)?,
            "scale_range" => self.scale_range = parse_pair(v)?,
            "rotation_deg" => self.rotation_deg = parse_num(v)?,
            "translation" => self.translation = parse_num(v)?,
            "occlusion" => self.occlusion = parse_num(v)?,
            "noise" => self.noise = parse_num(v)?,
            "trials" => self.trials = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "algorithms" => {
                self.algorithms = v
                    .split(',')
                    .map(|a| a.trim().parse())
                    .collect::<Result<Vec<_>, _>>()?
            }
            "init" => {
                self.init = match v {
                    "perturbed" => InitMode::Perturbed,
                    "pca_scale" => InitMode::PcaScale,
                    "principal_axes" => InitMode::PrincipalAxes,
                    _ => return Err(format!("unknown init mode {v:?}")),
                }
            }
            "init_scale" => self.init_scale = parse_num(v)?,
            "init_rotation_deg" => self.init_rotation_deg = parse_num(v)?,
            "init_translation" => self.init_translation = parse_num(v)?,
            "lambda" => self.lambda = parse_num(v)?,
            "min_overlap" => self.min_overlap = parse_num(v)?,
            "max_iterations" => self.max_iterations = parse_num(v)?,
            "tolerance" => self.tolerance = parse_num(v)?,
            "bounds_center" => {
                self.bounds_center = match v {
                    "pca" => BoundsCenter::Pca,
                    "truth" => BoundsCenter::Truth,
                    _ => return Err(format!("unknown bounds center {v:?}")),
                }
            }
            "narrow_bounds" => self.narrow_bounds = parse_pair(v)?,
            "wide_bounds" => self.wide_bounds = parse_pair(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale_range must satisfy 0 < lo <= hi, got {lo},{hi}"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.occlusion) {
            return bad(format!("occlusion must lie in [0, 1), got {}", self.occlusion));
        }
        for (name, v) in [
            ("rotation_deg", self.rotation_deg),
            ("translation", self.translation),
            ("noise", self.noise),
            ("init_scale", self.init_scale),
            ("init_rotation_deg", self.init_rotation_deg),
            ("init_translation", self.init_translation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number, got {v}"));
            }
        }
        if self.init_scale >= 1.0 {
            return bad("init_scale must be < 1".into());
        }
        if self.points < 3 && !matches!(self.shape, ShapeSource::File(_)) {
            return bad("points must be >= 3".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        for (name, (a, b)) in [("narrow_bounds", self.narrow_bounds), ("wide_bounds", self.wide_bounds)] {
            if !(a > 0.0 && a <= b) {
                return bad(format!("{name} must satisfy 0 < lo <= hi"));
            }
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return bad("min_overlap must lie in (0, 1]".into());
        }
        if !(self.lambda >= 0.0) || self.max_iterations == 0 || !(self.tolerance >= 0.0) {
            return bad("solver settings out of range".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let text = "# demo\nname = occl\nshape = surface3d\ntrials = 5\nseed=9\n\
                    scale_range = 0.25, 4\nalgorithms = strimmed, bounded_narrow\n\
                    occlusion = 0.3  # displaced\ninit = principal_axes\nbounds_center = truth\n";
        let spec = ExperimentSpec::parse(text, None).unwrap();
        assert_eq!(spec.name, "occl");
        assert_eq!(spec.shape, ShapeSource::Surface3d);
        assert_eq!(spec.trials, 5);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.scale_range, (0.25, 4.0));
        assert_eq!(spec.algorithms, vec![Algorithm::Strimmed, Algorithm::BoundedNarrow]);
        assert_eq!(spec.occlusion, 0.3);
        assert_eq!(spec.init, InitMode::PrincipalAxes);
        assert_eq!(spec.bounds_center, BoundsCenter::Truth);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let spec = ExperimentSpec::parse("shape = bunny.ply\n", Some(Path::new("/data"))).unwrap();
        assert_eq!(spec.shape, ShapeSource::File(PathBuf::from("/data/bunny.ply")));
    }

    #[test]
    fn reports_line_offsets() {
        match ExperimentSpec::parse("trials = 3\nbogus = 1\n", None) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentSpec::parse("trials 3\n", None),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn rejects_invalid_ranges() {
        for text in [
            "trials = 0",
            "occlusion = 1.0",
            "scale_range = 2, 1",
            "scale_range = 0, 1",
            "noise = -1",
            "algorithms = nope",
        ] {
            assert!(ExperimentSpec::parse(text, None).is_err(), "{text}");
        }
    }
}
