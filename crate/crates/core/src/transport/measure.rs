use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::Point;
use crate::error::{Error, Result};

/// Allowed deviation of a normalized total from one.
pub const TOTAL_TOL: f64 = 1e-12;

/// Allowed mismatch between raw totals when normalization is disabled.
pub const BALANCE_TOL: f64 = 1e-9;

/// Raw, unnormalized weights on a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCloud {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl WeightedCloud {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        Self { points, weights }
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = vec![1.0; points.len()];
        Self { points, weights: w }
    }

    /// CSV rows `coord_1, …, coord_n, weight`, optional header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = match vals {
                Ok(v) => v,
                Err(_) if k == 0 => continue,
                Err(e) => return Err(Error::InvalidInput(format!("{}: row {}: {e}", path.display(), k + 1))),
            };
            if vals.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "{}: row {} needs coordinates and a weight",
                    path.display(),
                    k + 1
                )));
            }
            let (w, p) = vals.split_last().unwrap();
            points.push(p.to_vec());
            weights.push(*w);
        }
        Ok(Self { points, weights })
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// A probability measure on finitely many points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// `max w / min w`.
    pub fn ratio(&self) -> f64 {
        self.max_weight() / self.min_weight()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Uniform weights on `points`.
    pub fn uniform(points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyMeasure("no points".into()));
        }
        Ok(Self {
            points,
            weights: vec![1.0 / n as f64; n],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub n_points: usize,
    pub raw_total: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub ratio: f64,
}

impl MeasureSummary {
    pub fn of(m: &DiscreteMeasure, raw_total: f64) -> Self {
        Self {
            n_points: m.len(),
            raw_total,
            min_weight: m.min_weight(),
            max_weight: m.max_weight(),
            ratio: m.ratio(),
        }
    }
}

fn validate(name: &str, cloud: &WeightedCloud) -> Result<f64> {
    if cloud.points.is_empty() {
        return Err(Error::EmptyMeasure(format!("{name} has no points")));
    }
    if cloud.points.len() != cloud.weights.len() {
        return Err(Error::InvalidInput(format!(
            "{name}: {} points but {} weights",
            cloud.points.len(),
            cloud.weights.len()
        )));
    }
    let dim = cloud.points[0].len();
    for (k, (p, &w)) in cloud.points.iter().zip(&cloud.weights).enumerate() {
        if p.len() != dim || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("{name} point {k} is malformed: {p:?}")));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidInput(format!("{name} weight {k} is {w}")));
        }
        if w == 0.0 {
            return Err(Error::EmptyMeasure(format!(
                "{name} point {k} at {p:?} has zero weight"
            )));
        }
    }
    let total = cloud.total();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::EmptyMeasure(format!("{name} total weight is {total}")));
    }
    Ok(total)
}

fn finish(cloud: &WeightedCloud, scale: f64) -> DiscreteMeasure {
    DiscreteMeasure {
        points: cloud.points.iter().map(|p| Point::from_column_slice(p)).collect(),
        weights: cloud.weights.iter().map(|w| w / scale).collect(),
    }
}

/// Validate both clouds and scale each to total one. With `normalize`
/// off the raw totals must already agree to [`BALANCE_TOL`] and weights are
/// still divided by the common total.
pub fn normalize_and_validate(
    f_raw: &WeightedCloud,
    g_raw: &WeightedCloud,
    normalize: bool,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let tf = validate("source", f_raw)?;
    let tg = validate("target", g_raw)?;
    if f_raw.points[0].len() != g_raw.points[0].len() {
        return Err(Error::InvalidInput("source and target dimensions differ".into()));
    }
    if !normalize && (tf - tg).abs() > BALANCE_TOL {
        return Err(Error::MassImbalance {
            source_total: tf,
            target_total: tg,
        });
    }
    let (sf, sg) = if normalize { (tf, tg) } else { (tf, tf) };
    let mu = finish(f_raw, sf);
    let nu = finish(g_raw, sg);
    for (name, m) in [("source", &mu), ("target", &nu)] {
        let t = m.total();
        if (t - 1.0).abs() > TOTAL_TOL {
            return Err(Error::InvalidInput(format!("{name} total {t} after normalization")));
        }
    }
    Ok((mu, nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|k| vec![k as f64]).collect()
    }

    #[test]
    fn uniform_clouds_stay_uniform() {
        let f = WeightedCloud::uniform(line(7));
        let (mu, nu) = normalize_and_validate(&f, &f, true).unwrap();
        assert!(mu.weights.iter().all(|&w| w == mu.weights[0]));
        assert_eq!(mu.ratio(), 1.0);
        assert_eq!(nu.ratio(), 1.0);
    }

    #[test]
    fn totals_are_normalized() {
        let f = WeightedCloud::new(line(2), vec![1.5, 0.5]);
        let g = WeightedCloud::new(line(3), vec![0.2, 0.3, 0.5]);
        let (mu, nu) = normalize_and_validate(&f, &g, true).unwrap();
        assert!((mu.total() - 1.0).abs() <= TOTAL_TOL);
        assert!((nu.total() - 1.0).abs() <= TOTAL_TOL);
        assert_eq!(mu.ratio(), 3.0);
        assert!(matches!(
            normalize_and_validate(&f, &g, false),
            Err(Error::MassImbalance { .. })
        ));
    }

    #[test]
    fn zero_weight_is_rejected() {
        let f = WeightedCloud::uniform(line(3));
        let g = WeightedCloud::new(line(3), vec![1.0, 0.0, 1.0]);
        match normalize_and_validate(&f, &g, true) {
            Err(Error::EmptyMeasure(msg)) => assert!(msg.contains("point 1")),
            other => panic!("{other:?}"),
        }
        let e = WeightedCloud::new(vec![], vec![]);
        assert!(matches!(
            normalize_and_validate(&e, &f, true),
            Err(Error::EmptyMeasure(_))
        ));
    }
}
