//! Sampled domains with boundary normals and optional defining functions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::Point;
use crate::error::{Error, Result};

/// Analytic defining function `φ` with `φ < 0` inside and `φ = 0` on the
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum DefiningFunction {
    /// `|x − c|² − r²`
    Ball { center: Vec<f64>, radius: f64 },
    /// `Σ ((x_i − c_i)/a_i)² − 1`
    Ellipse { center: Vec<f64>, semi_axes: Vec<f64> },
    /// `|x − f₁|²|x − f₂|² − b⁴` with foci `c ± a e₁`, planar only.
    /// Nonconvex (peanut shaped) for `a < b < √2·a`.
    Cassini { center: Vec<f64>, a: f64, b: f64 },
}

impl DefiningFunction {
    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { center, .. } | Self::Ellipse { center, .. } | Self::Cassini { center, .. } => center.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Ball { center, radius } => {
                x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() - radius * radius
            }
            Self::Ellipse { center, semi_axes } => {
                x.iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((a, c), s)| ((a - c) / s).powi(2))
                    .sum::<f64>()
                    - 1.0
            }
            Self::Cassini { center, a, b } => {
                let (u, v) = (x[0] - center[0], x[1] - center[1]);
                let p = (u - a).powi(2) + v * v;
                let q = (u + a).powi(2) + v * v;
                p * q - b.powi(4)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        match self {
            Self::Ball { center, .. } => {
                DVector::from_iterator(x.len(), x.iter().zip(center).map(|(a, c)| 2.0 * (a - c)))
            }
            Self::Ellipse { center, semi_axes } => DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((a, c), s)| 2.0 * (a - c) / (s * s)),
            ),
            Self::Cassini { center, a, .. } => {
                let (u, v) = (x[0] - center[0], x[1] - center[1]);
                let p = (u - a).powi(2) + v * v;
                let q = (u + a).powi(2) + v * v;
                DVector::from_vec(vec![2.0 * (u - a) * q + 2.0 * (u + a) * p, 2.0 * v * q + 2.0 * v * p])
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Self::Ball { .. } => DMatrix::identity(n, n) * 2.0,
            Self::Ellipse { semi_axes, .. } => {
                DMatrix::from_diagonal(&DVector::from_iterator(n, semi_axes.iter().map(|s| 2.0 / (s * s))))
            }
            Self::Cassini { center, a, .. } => {
                let (u, v) = (x[0] - center[0], x[1] - center[1]);
                let p = (u - a).powi(2) + v * v;
                let q = (u + a).powi(2) + v * v;
                let (pu, pv) = (2.0 * (u - a), 2.0 * v);
                let (qu, qv) = (2.0 * (u + a), 2.0 * v);
                // (pq)'' = p''q + 2 p'q' + p q'' with p'' = q'' = 2I
                let huu = 2.0 * q + 2.0 * pu * qu + 2.0 * p;
                let hvv = 2.0 * q + 2.0 * pv * qv + 2.0 * p;
                let huv = pu * qv + pv * qu;
                DMatrix::from_row_slice(2, 2, &[huu, huv, huv, hvv])
            }
        }
    }
}

/// Parametric region from which a [`Domain`] is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Ellipse {
        center: Vec<f64>,
        semi_axes: Vec<f64>,
    },
    /// Planar annulus sector `r_inner ≤ |x − c| ≤ r_outer`, angle in `[theta0, theta1]`.
    AnnulusSector {
        center: Vec<f64>,
        r_inner: f64,
        r_outer: f64,
        theta0: f64,
        theta1: f64,
    },
    Cassini {
        center: Vec<f64>,
        a: f64,
        b: f64,
    },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Ball { center, .. }
            | Self::Ellipse { center, .. }
            | Self::AnnulusSector { center, .. }
            | Self::Cassini { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("{m}: {self:?}")));
        let n = self.dim();
        if n == 0 {
            return bad("empty coordinates");
        }
        match self {
            Self::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return bad("box needs lo < hi per axis");
                }
            }
            Self::Ball { radius, .. } => {
                if !(*radius > 0.0) {
                    return bad("ball radius must be positive");
                }
            }
            Self::Ellipse { semi_axes, .. } => {
                if semi_axes.len() != n || semi_axes.iter().any(|s| !(*s > 0.0)) {
                    return bad("ellipse semi-axes must be positive, one per axis");
                }
            }
            Self::AnnulusSector {
                r_inner,
                r_outer,
                theta0,
                theta1,
                ..
            } => {
                if n != 2 || !(0.0 < *r_inner && r_inner < r_outer) || !(theta0 < theta1) {
                    return bad("annulus sector needs n = 2, 0 < r_inner < r_outer, theta0 < theta1");
                }
            }
            Self::Cassini { a, b, .. } => {
                if n != 2 || !(*a > 0.0 && b > a) {
                    return bad("Cassini oval needs n = 2 and 0 < a < b");
                }
            }
        }
        Ok(())
    }

    pub fn defining_function(&self) -> Option<DefiningFunction> {
        match self {
            Self::Ball { center, radius } => Some(DefiningFunction::Ball {
                center: center.clone(),
                radius: *radius,
            }),
            Self::Ellipse { center, semi_axes } => Some(DefiningFunction::Ellipse {
                center: center.clone(),
                semi_axes: semi_axes.clone(),
            }),
            Self::Cassini { center, a, b } => Some(DefiningFunction::Cassini {
                center: center.clone(),
                a: *a,
                b: *b,
            }),
            Self::Box { .. } | Self::AnnulusSector { .. } => None,
        }
    }

    /// Closed-set membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Self::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *a <= *v && *v <= *b),
            Self::AnnulusSector {
                center,
                r_inner,
                r_outer,
                theta0,
                theta1,
            } => {
                let (u, v) = (x[0] - center[0], x[1] - center[1]);
                let r = u.hypot(v);
                let th = angle_in(v.atan2(u), *theta0);
                r >= *r_inner && r <= *r_outer && th <= *theta1
            }
            _ => self.defining_function().is_some_and(|f| f.value(x) <= 0.0),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Box { lo, hi } => (lo.clone(), hi.clone()),
            Self::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Self::Ellipse { center, semi_axes } => (
                center.iter().zip(semi_axes).map(|(c, s)| c - s).collect(),
                center.iter().zip(semi_axes).map(|(c, s)| c + s).collect(),
            ),
            Self::AnnulusSector { center, r_outer, .. } => (
                center.iter().map(|c| c - r_outer).collect(),
                center.iter().map(|c| c + r_outer).collect(),
            ),
            Self::Cassini { center, a, b } => {
                let rx = (a * a + b * b).sqrt();
                // max over the polar parametrization of r·sin θ
                let ry = (0..=720)
                    .map(|k| {
                        let th = PI * k as f64 / 720.0;
                        cassini_radius(*a, *b, th) * th.sin()
                    })
                    .fold(0.0, f64::max);
                (
                    vec![center[0] - rx, center[1] - ry],
                    vec![center[0] + rx, center[1] + ry],
                )
            }
        }
    }

    /// Sample the closed region: a Cartesian grid with `resolution` nodes per
    /// axis over the bounding box (kept if inside) and boundary points with
    /// inward unit normals.
    pub fn sample(&self, resolution: usize) -> Result<Domain> {
        self.validate()?;
        let n = self.dim();
        if resolution < 2 {
            return Err(Error::InvalidInput("sampling resolution must be at least 2".into()));
        }
        if n > 3 {
            return Err(Error::InvalidInput(format!(
                "domains are supported in dimension 2 or 3, got {n}"
            )));
        }
        let (lo, hi) = self.bounding_box();
        let mut interior = Vec::new();
        for idx in grid_indices(n, resolution) {
            let x: Vec<f64> = (0..n)
                .map(|a| lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / (resolution - 1) as f64)
                .collect();
            if self.contains(&x) {
                interior.push(DVector::from_vec(x));
            }
        }
        let boundary = self.boundary(resolution)?;
        if interior.is_empty() {
            // Thin shapes at coarse resolution: fall back to a boundary point.
            interior.push(boundary[0].point.clone());
        }
        Ok(Domain {
            dim: n,
            interior_samples: interior,
            boundary_samples: boundary,
            defining_function: self.defining_function(),
            bbox_lo: lo,
            bbox_hi: hi,
            shape: Some(self.clone()),
        })
    }

    fn boundary(&self, resolution: usize) -> Result<Vec<BoundarySample>> {
        let n = self.dim();
        let m = 4 * resolution;
        let mut out = Vec::new();
        match self {
            Self::Box { lo, hi } => {
                // Face grids; each point carries the normal of its face.
                for axis in 0..n {
                    for (side, sign) in [(lo[axis], 1.0), (hi[axis], -1.0)] {
                        for idx in grid_indices(n - 1, resolution) {
                            let mut x = vec![0.0; n];
                            let mut k = 0;
                            for (a, xa) in x.iter_mut().enumerate() {
                                if a == axis {
                                    *xa = side;
                                } else {
                                    *xa = lo[a] + (hi[a] - lo[a]) * idx[k] as f64 / (resolution - 1) as f64;
                                    k += 1;
                                }
                            }
                            let mut nu = vec![0.0; n];
                            nu[axis] = sign;
                            out.push(BoundarySample::new(x, nu));
                        }
                    }
                }
            }
            Self::Ball { .. } | Self::Ellipse { .. } => {
                let (center, axes): (Vec<f64>, Vec<f64>) = match self {
                    Self::Ball { center, radius } => (center.clone(), vec![*radius; n]),
                    Self::Ellipse { center, semi_axes } => (center.clone(), semi_axes.clone()),
                    _ => unreachable!(),
                };
                let phi = self.defining_function().expect("analytic shape");
                for dir in sphere_directions(n, m) {
                    let x: Vec<f64> = (0..n).map(|a| center[a] + axes[a] * dir[a]).collect();
                    let g = phi.gradient(&x);
                    out.push(BoundarySample::new(x, (-g).as_slice().to_vec()));
                }
            }
            Self::AnnulusSector {
                center,
                r_inner,
                r_outer,
                theta0,
                theta1,
            } => {
                let (cx, cy) = (center[0], center[1]);
                for k in 0..m {
                    let th = theta0 + (theta1 - theta0) * (k as f64 + 0.5) / m as f64;
                    let (s, c) = th.sin_cos();
                    out.push(BoundarySample::new(
                        vec![cx + r_outer * c, cy + r_outer * s],
                        vec![-c, -s],
                    ));
                    out.push(BoundarySample::new(
                        vec![cx + r_inner * c, cy + r_inner * s],
                        vec![c, s],
                    ));
                }
                for k in 0..resolution {
                    let r = r_inner + (r_outer - r_inner) * (k as f64 + 0.5) / resolution as f64;
                    let (s0, c0) = theta0.sin_cos();
                    out.push(BoundarySample::new(vec![cx + r * c0, cy + r * s0], vec![-s0, c0]));
                    let (s1, c1) = theta1.sin_cos();
                    out.push(BoundarySample::new(vec![cx + r * c1, cy + r * s1], vec![s1, -c1]));
                }
            }
            Self::Cassini { center, a, b } => {
                let phi = self.defining_function().expect("analytic shape");
                for k in 0..m {
                    let th = 2.0 * PI * k as f64 / m as f64;
                    let r = cassini_radius(*a, *b, th);
                    let x = vec![center[0] + r * th.cos(), center[1] + r * th.sin()];
                    let g = phi.gradient(&x);
                    out.push(BoundarySample::new(x, (-g).as_slice().to_vec()));
                }
            }
        }
        Ok(out)
    }
}

/// Polar radius of the Cassini oval `r⁴ − 2a²r² cos 2θ + a⁴ = b⁴` (b > a).
fn cassini_radius(a: f64, b: f64, th: f64) -> f64 {
    let c2 = (2.0 * th).cos();
    let disc = a.powi(4) * (c2 * c2 - 1.0) + b.powi(4);
    (a * a * c2 + disc.sqrt()).sqrt()
}

fn angle_in(th: f64, start: f64) -> f64 {
    let mut t = th;
    while t < start {
        t += 2.0 * PI;
    }
    while t >= start + 2.0 * PI {
        t -= 2.0 * PI;
    }
    t
}

pub(crate) fn grid_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// `m` unit directions: a uniform circle in 2-D, a Fibonacci sphere in 3-D.
pub(crate) fn sphere_directions(n: usize, m: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..m)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / m as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    vec![r * th.cos(), r * th.sin(), z]
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: Point,
    /// Unit inward normal.
    pub normal: DVector<f64>,
}

impl BoundarySample {
    pub fn new(point: Vec<f64>, normal: Vec<f64>) -> Self {
        let nu = DVector::from_vec(normal);
        let norm = nu.norm();
        Self {
            point: DVector::from_vec(point),
            normal: nu / norm,
        }
    }
}

/// A sampled region: interior points, boundary points with inward normals,
/// and an optional defining function.
#[derive(Debug, Clone)]
pub struct Domain {
    pub dim: usize,
    pub interior_samples: Vec<Point>,
    pub boundary_samples: Vec<BoundarySample>,
    pub defining_function: Option<DefiningFunction>,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    /// The generating shape, when known; used for membership tests.
    pub shape: Option<Shape>,
}

impl Domain {
    pub fn diameter(&self) -> f64 {
        self.bbox_lo
            .iter()
            .zip(&self.bbox_hi)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt()
    }

    /// Interior samples followed by boundary points.
    pub fn all_samples(&self) -> Vec<Point> {
        self.interior_samples
            .iter()
            .cloned()
            .chain(self.boundary_samples.iter().map(|b| b.point.clone()))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Some(s) => s.contains(x),
            None => match &self.defining_function {
                Some(f) => f.value(x) <= 0.0,
                None => x
                    .iter()
                    .zip(self.bbox_lo.iter().zip(&self.bbox_hi))
                    .all(|(v, (a, b))| *a <= *v && *v <= *b),
            },
        }
    }

    /// Check the documented invariants: unit normals, `φ` vanishing on the
    /// boundary and negative at interior samples.
    pub fn check(&self) -> Result<()> {
        if self.interior_samples.is_empty() && self.boundary_samples.is_empty() {
            return Err(Error::InvalidInput("domain has no samples".into()));
        }
        for b in &self.boundary_samples {
            if (b.normal.norm() - 1.0).abs() > 1e-12 || b.point.len() != self.dim {
                return Err(Error::InvalidInput(format!(
                    "bad boundary sample {:?}",
                    b.point.as_slice()
                )));
            }
        }
        if let Some(f) = &self.defining_function {
            for b in &self.boundary_samples {
                let v = f.value(b.point.as_slice());
                if v.abs() > 1e-8 {
                    return Err(Error::InvalidInput(format!(
                        "defining function is {v:.3e} at boundary sample {:?}",
                        b.point.as_slice()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_file(data: DomainFile) -> Result<Self> {
        let dim = data.dimension;
        let phi = match data.phi {
            PhiEntry::Keyword(k) if k == "none" => None,
            PhiEntry::Keyword(k) => {
                return Err(Error::Config {
                    field: "phi".into(),
                    message: format!("unknown keyword '{k}', expected \"none\" or a named form"),
                })
            }
            PhiEntry::Form(f) => Some(f),
        };
        let to_point = |v: &Vec<f64>| -> Result<Point> {
            if v.len() != dim || !v.iter().all(|c| c.is_finite()) {
                return Err(Error::Config {
                    field: "samples".into(),
                    message: format!("point {v:?} does not have {dim} finite coordinates"),
                });
            }
            Ok(DVector::from_vec(v.clone()))
        };
        let interior = data.interior_samples.iter().map(to_point).collect::<Result<Vec<_>>>()?;
        let mut boundary = Vec::new();
        for b in &data.boundary_samples {
            let p = to_point(&b.point)?;
            let nu = to_point(&b.normal)?;
            if nu.norm() == 0.0 {
                return Err(Error::Config {
                    field: "boundary_samples.normal".into(),
                    message: "zero normal".into(),
                });
            }
            boundary.push(BoundarySample::new(p.as_slice().to_vec(), nu.as_slice().to_vec()));
        }
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in interior.iter().chain(boundary.iter().map(|b| &b.point)) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let d = Domain {
            dim,
            interior_samples: interior,
            boundary_samples: boundary,
            defining_function: phi,
            bbox_lo: lo,
            bbox_hi: hi,
            shape: None,
        };
        d.check()?;
        Ok(d)
    }
}

/// On-disk domain description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainFile {
    pub dimension: usize,
    pub interior_samples: Vec<Vec<f64>>,
    pub boundary_samples: Vec<BoundaryEntry>,
    pub phi: PhiEntry,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryEntry {
    pub point: Vec<f64>,
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhiEntry {
    Keyword(String),
    Form(DefiningFunction),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_boundary_is_on_zero_set() {
        let d = Shape::Ball {
            center: vec![0.1, -0.2],
            radius: 0.3,
        }
        .sample(9)
        .unwrap();
        d.check().unwrap();
        for b in &d.boundary_samples {
            // inward normal points to the center
            let to_c = DVector::from_vec(vec![0.1, -0.2]) - &b.point;
            assert!((to_c.normalize() - &b.normal).norm() < 1e-12);
        }
    }

    #[test]
    fn cassini_boundary_and_hessian() {
        let s = Shape::Cassini {
            center: vec![0.0, 0.0],
            a: 1.0,
            b: 1.2,
        };
        let d = s.sample(10).unwrap();
        d.check().unwrap();
        let f = s.defining_function().unwrap();
        let x = [0.3, 0.4];
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let col = (f.gradient(&xp) - f.gradient(&xm)) / (2.0 * h);
            for j in 0..2 {
                assert!((col[j] - f.hessian(&x)[(j, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn annulus_sector_membership() {
        let s = Shape::AnnulusSector {
            center: vec![0.0, 0.0],
            r_inner: 0.5,
            r_outer: 1.0,
            theta0: 0.0,
            theta1: PI,
        };
        assert!(s.contains(&[0.0, 0.75]));
        assert!(!s.contains(&[0.0, 0.2]));
        assert!(!s.contains(&[0.0, -0.75]));
        let d = s.sample(8).unwrap();
        assert!(d.interior_samples.iter().all(|p| s.contains(p.as_slice())));
    }

    #[test]
    fn box_samples_include_faces() {
        let d = Shape::Box {
            lo: vec![0.0, 0.0, 0.0],
            hi: vec![1.0, 1.0, 1.0],
        }
        .sample(3)
        .unwrap();
        assert_eq!(d.interior_samples.len(), 27);
        assert_eq!(d.boundary_samples.len(), 6 * 9);
    }

    #[test]
    fn domain_file_round_trip() {
        let json = r#"{"dimension":2,"interior_samples":[[0.0,0.0]],
            "boundary_samples":[{"point":[1.0,0.0],"normal":[-2.0,0.0]}],
            "phi":{"form":"ball","center":[0.0,0.0],"radius":1.0}}"#;
        let f: DomainFile = serde_json::from_str(json).unwrap();
        let d = Domain::from_file(f).unwrap();
        assert_eq!(d.boundary_samples[0].normal.as_slice(), &[-1.0, 0.0]);
        let json = r#"{"dimension":2,"interior_samples":[[0.0,0.0]],"boundary_samples":[],"phi":"none"}"#;
        let d = Domain::from_file(serde_json::from_str(json).unwrap()).unwrap();
        assert!(d.defining_function.is_none());
    }
}
