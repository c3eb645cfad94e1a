use nalgebra::{DMatrix, DVector};

use super::convexity::tangent_basis;
use crate::cost::{derivatives, Cost, Point};
use crate::error::{Error, Result};

/// Local coordinates at a tangency point: `x = x₀ + Q x̂` with the last
/// column of `Q` along a chosen normal, and `ŷ = A (y − y₀)` with
/// `A = Qᵀ c_{i,j}(x₀, y₀)`, so the mixed Hessian is the identity at the
/// origin of both frames.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub x0: Point,
    pub y0: Point,
    pub rotation: DMatrix<f64>,
    pub y_map: DMatrix<f64>,
    y_map_inv: DMatrix<f64>,
}

impl LocalFrame {
    pub fn new<C: Cost + ?Sized>(cost: &C, x0: &Point, y0: &Point, normal: &DVector<f64>) -> Result<Self> {
        let n = cost.dim();
        if normal.len() != n || !(normal.norm() > 0.0) {
            return Err(Error::InvalidInput("local frame needs a nonzero normal".into()));
        }
        let e_n = normal.normalize();
        let mut cols: Vec<DVector<f64>> = tangent_basis(&e_n).column_iter().map(|c| c.into_owned()).collect();
        cols.push(e_n);
        let rotation = DMatrix::from_columns(&cols);
        let m = derivatives(cost, x0, y0, 2)?.hess_xy;
        let y_map = rotation.transpose() * m;
        let y_map_inv = y_map.clone().try_inverse().ok_or(Error::A2Violation {
            det: y_map.determinant().abs(),
            context: " (local frame)".into(),
        })?;
        Ok(Self {
            x0: x0.clone(),
            y0: y0.clone(),
            rotation,
            y_map,
            y_map_inv,
        })
    }

    pub fn x_to_local(&self, x: &Point) -> DVector<f64> {
        self.rotation.transpose() * (x - &self.x0)
    }

    pub fn x_from_local(&self, xh: &DVector<f64>) -> Point {
        &self.x0 + &self.rotation * xh
    }

    pub fn y_to_local(&self, y: &Point) -> DVector<f64> {
        &self.y_map * (y - &self.y0)
    }

    pub fn y_from_local(&self, yh: &DVector<f64>) -> Point {
        &self.y0 + &self.y_map_inv * yh
    }

    /// Mixed Hessian of the cost in local coordinates at `(x̂, ŷ)`.
    pub fn local_mixed_hessian<C: Cost + ?Sized>(
        &self,
        cost: &C,
        xh: &DVector<f64>,
        yh: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let m = derivatives(cost, &self.x_from_local(xh), &self.y_from_local(yh), 2)?.hess_xy;
        Ok(self.rotation.transpose() * m * &self.y_map_inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, RadialCost};
    use nalgebra::dvector;

    #[test]
    fn mixed_hessian_is_identity_at_origin() {
        for spec in [CostSpec::SqrtOneMinus, CostSpec::NegLog, CostSpec::Power { p: 3.0 }] {
            let c = RadialCost::new(3, spec).unwrap();
            let (x0, y0) = (dvector![0.1, 0.0, -0.2], dvector![0.4, 0.3, 0.1]);
            let f = LocalFrame::new(&c, &x0, &y0, &dvector![0.3, -1.0, 0.5]).unwrap();
            let z = DVector::zeros(3);
            let m = f.local_mixed_hessian(&c, &z, &z).unwrap();
            assert!((m - DMatrix::identity(3, 3)).norm() < 1e-12);
            let x = dvector![0.5, 0.5, 0.5];
            assert!((f.x_from_local(&f.x_to_local(&x)) - &x).norm() < 1e-14);
            assert!((f.y_from_local(&f.y_to_local(&x)) - &x).norm() < 1e-12);
        }
    }
}
