//! Two formulations of c-convexity of a domain: convexity of the image
//! `c_y(U, y)` of sampled boundary points, and the analytic criterion on a
//! defining function.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hull::{convex_hull_2d, depth_in_polygon};
use super::Domain;
use crate::cost::{check_pair, derivatives, invert_mixed, Cost, Point};
use crate::error::{Error, Result};

/// Relative geometric tolerance for the image test.
pub const GEOM_TOL_REL: f64 = 1e-6;

/// Absolute tolerance on the smallest eigenvalue in the analytic test.
pub const ANALYTIC_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageConvexity {
    pub is_convex: bool,
    /// Largest penetration of a mapped boundary point inside the image's
    /// convex hull (2-D) or behind another point's tangent plane (3-D).
    pub defect: f64,
    pub tolerance: f64,
    pub image_diameter: f64,
}

/// Test whether `{D_y c(x, y) : x ∈ ∂U}` bounds a convex set.
pub fn image_c_convexity<C: Cost + ?Sized>(cost: &C, domain: &Domain, y: &Point) -> Result<ImageConvexity> {
    let n = cost.dim();
    if domain.dim != n || !(2..=3).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "image convexity is implemented for n = 2, 3 (cost n = {n}, domain n = {})",
            domain.dim
        )));
    }
    if domain.boundary_samples.len() < n + 1 {
        return Err(Error::InvalidInput("too few boundary samples".into()));
    }
    let mapped: Vec<(DVector<f64>, DVector<f64>)> = domain
        .boundary_samples
        .par_iter()
        .map(|b| {
            check_pair(cost, b.point.as_slice(), y.as_slice())?;
            if n == 2 {
                Ok((cost.grad_y(b.point.as_slice(), y.as_slice())?, DVector::zeros(n)))
            } else {
                let d = derivatives(cost, &b.point, y, 2)?;
                let inv = invert_mixed(&d.hess_xy)?;
                let nu = (&inv * &b.normal).normalize();
                Ok((d.grad_y, nu))
            }
        })
        .collect::<Result<_>>()?;
    let mut diam = 0.0f64;
    for a in &mapped {
        for b in &mapped {
            diam = diam.max((&a.0 - &b.0).norm());
        }
    }
    let tolerance = GEOM_TOL_REL * diam;
    let defect = if n == 2 {
        let pts: Vec<[f64; 2]> = mapped.iter().map(|(q, _)| [q[0], q[1]]).collect();
        let hull: Vec<[f64; 2]> = convex_hull_2d(&pts).into_iter().map(|i| pts[i]).collect();
        pts.iter().map(|&q| depth_in_polygon(&hull, q)).fold(0.0, f64::max)
    } else {
        mapped
            .par_iter()
            .map(|(qk, nk)| mapped.iter().map(|(qj, _)| -(qj - qk).dot(nk)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    };
    Ok(ImageConvexity {
        is_convex: defect <= tolerance,
        defect,
        tolerance,
        image_diameter: diam,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticConvexity {
    /// Smallest tangential eigenvalue over boundary samples and targets.
    pub min_eigenvalue: f64,
    pub c_convex: bool,
    pub uniformly_c_convex: bool,
    /// The uniform constant when positive.
    pub delta: f64,
    pub tolerance: f64,
    pub argmin_x: Vec<f64>,
    pub argmin_y: Vec<f64>,
}

/// The matrix `φ_ij − c^{k,l} c_{ij,k} φ_l` at `(x, y)`.
pub fn convexity_matrix<C: Cost + ?Sized>(
    cost: &C,
    phi_grad: &DVector<f64>,
    phi_hess: &DMatrix<f64>,
    x: &Point,
    y: &Point,
) -> Result<DMatrix<f64>> {
    let n = cost.dim();
    let d = derivatives(cost, x, y, 3)?;
    let inv = invert_mixed(&d.hess_xy)?;
    // w_k = c^{k,l} φ_l (k a y-index)
    let w = &inv * phi_grad;
    let mut a = phi_hess.clone();
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += d.xxy.get(i, j, k) * w[k];
            }
            a[(i, j)] -= s;
        }
    }
    Ok(a)
}

/// Orthonormal basis of the complement of `g`, as columns.
pub(crate) fn tangent_basis(g: &DVector<f64>) -> DMatrix<f64> {
    let n = g.len();
    let gn = g.normalize();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for a in 0..n {
        let mut v = DVector::zeros(n);
        v[a] = 1.0;
        v -= &gn * gn.dot(&v);
        for c in &cols {
            let p = c.dot(&v);
            v -= c * p;
        }
        if v.norm() > 1e-8 {
            cols.push(v.normalize());
        }
        if cols.len() == n - 1 {
            break;
        }
    }
    DMatrix::from_columns(&cols)
}

/// Smallest eigenvalue of the convexity matrix restricted to the tangent
/// space `∇φ^⊥`, minimized over boundary samples of `U` and `targets`.
pub fn analytic_c_convexity<C: Cost + ?Sized>(
    cost: &C,
    domain: &Domain,
    targets: &[Point],
) -> Result<AnalyticConvexity> {
    let phi = domain
        .defining_function
        .as_ref()
        .ok_or(Error::MissingDefiningFunction)?;
    if targets.is_empty() || domain.boundary_samples.is_empty() {
        return Err(Error::InvalidInput(
            "analytic convexity needs boundary samples and targets".into(),
        ));
    }
    let best = domain
        .boundary_samples
        .par_iter()
        .enumerate()
        .map(|(bi, b)| -> Result<(f64, usize, usize)> {
            let x = &b.point;
            let g = phi.gradient(x.as_slice());
            let h = phi.hessian(x.as_slice());
            let basis = tangent_basis(&g);
            let mut best = (f64::INFINITY, bi, 0);
            for (yi, y) in targets.iter().enumerate() {
                let a = convexity_matrix(cost, &g, &h, x, y)?;
                let r = basis.transpose() * &a * &basis;
                let r = (&r + r.transpose()) * 0.5;
                let ev = r.symmetric_eigenvalues().min();
                if ev < best.0 {
                    best = (ev, bi, yi);
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((f64::INFINITY, 0, 0), |a, b| if b.0 < a.0 { b } else { a });
    let (min, bi, yi) = best;
    Ok(AnalyticConvexity {
        min_eigenvalue: min,
        c_convex: min >= -ANALYTIC_TOL,
        uniformly_c_convex: min > ANALYTIC_TOL,
        delta: min.max(0.0),
        tolerance: ANALYTIC_TOL,
        argmin_x: domain.boundary_samples[bi].point.as_slice().to_vec(),
        argmin_y: targets[yi].as_slice().to_vec(),
    })
}

/// Image test for every target; the domain is c-convex with respect to the
/// set iff every image is convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConvexity {
    pub is_c_convex: bool,
    pub max_defect: f64,
    pub worst_target: Vec<f64>,
    pub n_targets: usize,
    pub tolerance_rel: f64,
}

pub fn domain_c_convexity<C: Cost + ?Sized>(cost: &C, domain: &Domain, targets: &[Point]) -> Result<DomainConvexity> {
    let mut worst = (f64::NEG_INFINITY, 0usize, true);
    for (k, y) in targets.iter().enumerate() {
        let r = image_c_convexity(cost, domain, y)?;
        let rel = r.defect / r.image_diameter.max(1e-300);
        if rel > worst.0 {
            worst = (rel, k, worst.2);
        }
        worst.2 &= r.is_convex;
    }
    if targets.is_empty() {
        return Err(Error::InvalidInput("no targets for the convexity check".into()));
    }
    Ok(DomainConvexity {
        is_c_convex: worst.2,
        max_defect: worst.0,
        worst_target: targets[worst.1].as_slice().to_vec(),
        n_targets: targets.len(),
        tolerance_rel: GEOM_TOL_REL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, RadialCost};
    use crate::geometry::Shape;
    use nalgebra::dvector;

    #[test]
    fn quadratic_ball_image_is_convex() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let u = Shape::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }
        .sample(16)
        .unwrap();
        let r = image_c_convexity(&c, &u, &dvector![3.0, 1.0]).unwrap();
        assert!(r.is_convex && r.defect <= 1e-10, "{r:?}");
        let a = analytic_c_convexity(&c, &u, &[dvector![3.0, 1.0]]).unwrap();
        assert!((a.min_eigenvalue - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_annulus_sector_is_not_convex() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let u = Shape::AnnulusSector {
            center: vec![0.0, 0.0],
            r_inner: 0.5,
            r_outer: 1.0,
            theta0: 0.0,
            theta1: std::f64::consts::PI,
        }
        .sample(12)
        .unwrap();
        let r = image_c_convexity(&c, &u, &dvector![0.0, -2.0]).unwrap();
        assert!(!r.is_convex && r.defect > 0.1, "{r:?}");
    }

    #[test]
    fn peanut_has_negative_eigenvalue() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let u = Shape::Cassini {
            center: vec![0.0, 0.0],
            a: 1.0,
            b: 1.1,
        }
        .sample(16)
        .unwrap();
        let a = analytic_c_convexity(&c, &u, &[dvector![5.0, 0.0]]).unwrap();
        assert!(a.min_eigenvalue < 0.0);
        assert!(!image_c_convexity(&c, &u, &dvector![5.0, 0.0]).unwrap().is_convex);
    }

    #[test]
    fn missing_phi() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let u = Shape::Box {
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
        }
        .sample(4)
        .unwrap();
        assert!(matches!(
            analytic_c_convexity(&c, &u, &[dvector![0.0, 0.0]]),
            Err(Error::MissingDefiningFunction)
        ));
    }

    #[test]
    fn three_dimensional_ball() {
        let c = RadialCost::new(3, CostSpec::SqrtOnePlus).unwrap();
        let u = Shape::Ball {
            center: vec![0.0, 0.0, 0.0],
            radius: 0.3,
        }
        .sample(8)
        .unwrap();
        let y = dvector![1.0, 0.2, -0.1];
        let img = image_c_convexity(&c, &u, &y).unwrap();
        let an = analytic_c_convexity(&c, &u, &[y]).unwrap();
        assert_eq!(img.is_convex, an.c_convex, "{img:?} {an:?}");
    }
}
