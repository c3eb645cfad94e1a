//! Scenario configs: a cost, two measures and a pair of grid sizes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{CostSpec, Point};
use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::transport::{RegularGrid, WeightedCloud};

/// Keys accepted by `--tol-override` and the `tolerances` table.
pub const TOLERANCE_KEYS: [&str; 7] = [
    "contact_tol",
    "contraction_min",
    "diameter_factor",
    "tested_nodes",
    "tol_pos",
    "max_gap",
    "max_feasibility",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    #[default]
    Uniform,
    /// `background + Σ weight · exp(−|x − center|² / (2 width²))`.
    GaussianBumps { background: f64, bumps: Vec<Bump> },
}

impl DensitySpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::GaussianBumps { background, bumps } => {
                background
                    + bumps
                        .iter()
                        .map(|b| {
                            let r2: f64 = x.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum();
                            b.weight * (-r2 / (2.0 * b.width * b.width)).exp()
                        })
                        .sum::<f64>()
            }
        }
    }

    fn validate(&self, side: &str) -> Result<()> {
        if let Self::GaussianBumps { background, bumps } = self {
            if !(*background > 0.0) {
                return Err(config(side, "density background must be positive"));
            }
            if bumps.iter().any(|b| !(b.width > 0.0) || !(b.weight >= 0.0)) {
                return Err(config(side, "bumps need positive width and non-negative weight"));
            }
        }
        Ok(())
    }
}

/// One side of the problem: a shape discretized on a grid, or a point file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Shape>,
    /// CSV of `coords…, weight` rows; replaces `domain` and `density`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_file: Option<PathBuf>,
    #[serde(default)]
    pub density: DensitySpec,
    /// Uniform random displacement of grid points, in units of the spacing.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSizes {
    pub coarse: usize,
    pub fine: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySettings {
    pub n_pairs: usize,
    pub n_frames: usize,
}

impl Default for ClassifySettings {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            n_frames: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub cost: CostSpec,
    pub source: MeasureSpec,
    pub target: MeasureSpec,
    pub grids: GridSizes,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub classify: ClassifySettings,
}

fn config(field: &str, message: &str) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Load a config; relative point-file paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for side in [&mut s.source, &mut s.target] {
            if let Some(p) = side.points_file.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grids.coarse >= 4 && self.grids.coarse < self.grids.fine) {
            return Err(config("grids", "need 4 ≤ coarse < fine"));
        }
        for (side, m) in [("source", &self.source), ("target", &self.target)] {
            match (&m.domain, &m.points_file) {
                (Some(d), None) => d.validate().map_err(|e| config(side, &e.to_string()))?,
                (None, Some(_)) => {}
                _ => return Err(config(side, "give exactly one of `domain` and `points_file`")),
            }
            m.density.validate(side)?;
            if !(m.jitter >= 0.0 && m.jitter < 0.5) {
                return Err(config(side, "jitter must lie in [0, 0.5)"));
            }
        }
        if self.source.jitter != 0.0 {
            return Err(config(
                "source",
                "source points stay on the grid; jitter applies to targets only",
            ));
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&k.as_str()) {
                return Err(config(&format!("tolerances.{k}"), "unknown key"));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(config(&format!("tolerances.{k}"), "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Apply `KEY=VAL` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config("--tol-override", &format!("expected KEY=VAL, got '{o}'")))?;
            let val: f64 = v
                .trim()
                .parse()
                .map_err(|_| config(&format!("--tol-override {k}"), &format!("'{v}' is not a number")))?;
            self.tolerances.insert(k.trim().to_string(), val);
        }
        self.validate()
    }

    pub fn tolerance(&self, key: &str, default: f64) -> f64 {
        self.tolerances.get(key).copied().unwrap_or(default)
    }

    pub fn dim(&self) -> Option<usize> {
        self.source.domain.as_ref().map(|d| d.dim())
    }
}

/// A measure sampled at one resolution.
#[derive(Debug, Clone)]
pub struct Discretized {
    /// Present when the points are the active nodes of a grid.
    pub grid: Option<RegularGrid>,
    pub active: Vec<bool>,
    pub cloud: WeightedCloud,
    pub spacing: f64,
}

impl Discretized {
    pub fn points(&self) -> Vec<Point> {
        self.cloud.points.iter().map(|p| Point::from_column_slice(p)).collect()
    }
}

/// Sample `spec` with `k` cells per axis. Jitter draws from a stream
/// seeded by `seed`.
pub fn discretize(spec: &MeasureSpec, k: usize, seed: u64) -> Result<Discretized> {
    if let Some(path) = &spec.points_file {
        let cloud = WeightedCloud::from_csv(path)?;
        let pts: Vec<Point> = cloud.points.iter().map(|p| Point::from_column_slice(p)).collect();
        let spacing = crate::regularity::max_nn_spacing(&pts);
        return Ok(Discretized {
            grid: None,
            active: vec![true; cloud.points.len()],
            cloud,
            spacing,
        });
    }
    let shape = spec.domain.as_ref().expect("validated");
    let (lo, hi) = shape.bounding_box();
    let grid = RegularGrid::cell_centered(&lo, &hi, &vec![k; lo.len()])?;
    let h = grid.spacing.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut active = Vec::with_capacity(grid.len());
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for idx in 0..grid.len() {
        let p = grid.point(idx);
        let inside = shape.contains(p.as_slice());
        active.push(inside);
        if inside {
            let mut q = p.as_slice().to_vec();
            if spec.jitter > 0.0 {
                for (a, qa) in q.iter_mut().enumerate() {
                    *qa += spec.jitter * h[a] * rng.random_range(-1.0..1.0);
                }
            }
            weights.push(spec.density.eval(p.as_slice()));
            points.push(q);
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyMeasure(format!(
            "no grid node of {k} per axis falls inside {shape:?}"
        )));
    }
    Ok(Discretized {
        spacing: grid.max_spacing(),
        grid: Some(grid),
        active,
        cloud: WeightedCloud::new(points, weights),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "cost": {"name": "quadratic"},
        "source": {"domain": {"kind": "box", "lo": [0, 0], "hi": [1, 1]}},
        "target": {"domain": {"kind": "ball", "center": [0, 0], "radius": 1}},
        "grids": {"coarse": 8, "fine": 16}
    }"#;

    #[test]
    fn parses_and_discretizes() {
        let s = Scenario::from_json(BASE).unwrap();
        assert_eq!(s.dim(), Some(2));
        let d = discretize(&s.target, 8, 0).unwrap();
        // cell centres at ±1/8, ±3/8, ±5/8, ±7/8; inside the unit disc
        assert_eq!(d.cloud.points.len(), 52);
        assert_eq!(d.spacing, 0.25);
    }

    #[test]
    fn reports_field_and_line() {
        let bad = BASE.replace("\"fine\": 16", "\"fine\": 4");
        assert!(matches!(Scenario::from_json(&bad), Err(Error::Config { field, .. }) if field == "grids"));
        let err = Scenario::from_json(&BASE.replace("\"t\"", "t")).unwrap_err();
        assert!(matches!(err, Error::Config { field, .. } if field.starts_with("line 2")));
        let mut s = Scenario::from_json(BASE).unwrap();
        assert!(s.apply_overrides(&["nope=1".into()]).is_err());
        let mut s2 = Scenario::from_json(BASE).unwrap();
        s2.apply_overrides(&["contraction_min=2".into()]).unwrap();
        assert_eq!(s2.tolerance("contraction_min", 1.5), 2.0);
        assert!(s.apply_overrides(&["contact_tol".into()]).is_err());
    }
}
