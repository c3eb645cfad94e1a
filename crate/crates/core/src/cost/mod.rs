//! Cost functions `c(x, y)` and their mixed derivatives up to order four.
//!
//! Index conventions follow the usual optimal-transport notation: indices
//! before the comma are `x` derivatives, indices after it are `y` derivatives.
//!
//! | field      | meaning                      |
//! |------------|------------------------------|
//! | `hess_xx`  | `c_{ij}`   = ∂x_i ∂x_j c     |
//! | `hess_xy`  | `c_{i,j}`  = ∂x_i ∂y_j c     |
//! | `xxy`      | `c_{ij,k}` = ∂x_i ∂x_j ∂y_k c |
//! | `xyy`      | `c_{i,jk}` = ∂x_i ∂y_j ∂y_k c |
//! | `xxyy`     | `c_{ij,kl}`                  |

mod catalog;
mod fd;
mod newton;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

pub use catalog::{CostSpec, RadialCost};
pub use fd::{fd_validate, FdDiscrepancy, FiniteDifferenceCost};
pub use newton::{solve_y_from_gradient, solve_y_from_gradient_with, NewtonOptions};

/// A point of `R^n`.
pub type Point = DVector<f64>;

/// Margin kept between validity predicates and singular sets.
pub const SINGULAR_MARGIN: f64 = 1e-6;

/// Threshold on `|det c_{i,j}|` below which (A2) is considered violated.
pub const A2_DET_TOL: f64 = 1e-12;

/// All derivative tensors of `c` at a pair `(x, y)` up to `order`.
///
/// Tensors above the requested order are left zero.
#[derive(Debug, Clone)]
pub struct DerivativeBundle {
    pub order: usize,
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_y: DVector<f64>,
    pub hess_xx: DMatrix<f64>,
    pub hess_xy: DMatrix<f64>,
    pub hess_yy: DMatrix<f64>,
    pub xxy: Tensor3,
    pub xyy: Tensor3,
    pub xxyy: Tensor4,
}

impl DerivativeBundle {
    pub fn zeros(n: usize, order: usize, value: f64) -> Self {
        Self {
            order,
            value,
            grad_x: DVector::zeros(n),
            grad_y: DVector::zeros(n),
            hess_xx: DMatrix::zeros(n, n),
            hess_xy: DMatrix::zeros(n, n),
            hess_yy: DMatrix::zeros(n, n),
            xxy: Tensor3::zeros(n),
            xyy: Tensor3::zeros(n),
            xxyy: Tensor4::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.grad_x.len()
    }
}

/// A smooth cost function on `R^n × R^n`.
///
/// Implementations are pure; `compute_derivatives` may assume the pair is
/// valid, the checked entry point is [`derivatives`].
pub trait Cost: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Short human-readable name, used in reports.
    fn label(&self) -> String;

    fn eval(&self, x: &[f64], y: &[f64]) -> f64;

    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool;

    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle>;

    /// Whether `z` lies in the image of `y ↦ D_x c(x, y)` over valid `y`.
    /// The default cannot tell and answers `true`.
    fn gradient_reachable(&self, _x: &[f64], _z: &[f64]) -> bool {
        true
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        Ok(self.compute_derivatives(x, y, 1)?.grad_x)
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        Ok(self.compute_derivatives(x, y, 1)?.grad_y)
    }

    /// `(D_x c, c_{i,j})` in one call; Newton iterations use this.
    fn grad_x_and_mixed(&self, x: &[f64], y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let d = self.compute_derivatives(x, y, 2)?;
        Ok((d.grad_x, d.hess_xy))
    }
}

impl<C: Cost + ?Sized> Cost for Arc<C> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        (**self).is_valid(x, y)
    }
    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle> {
        (**self).compute_derivatives(x, y, order)
    }
    fn gradient_reachable(&self, x: &[f64], z: &[f64]) -> bool {
        (**self).gradient_reachable(x, z)
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        (**self).grad_x(x, y)
    }
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        (**self).grad_y(x, y)
    }
    fn grad_x_and_mixed(&self, x: &[f64], y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        (**self).grad_x_and_mixed(x, y)
    }
}

impl<C: Cost + ?Sized> Cost for Box<C> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (**self).eval(x, y)
    }
    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        (**self).is_valid(x, y)
    }
    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle> {
        (**self).compute_derivatives(x, y, order)
    }
    fn gradient_reachable(&self, x: &[f64], z: &[f64]) -> bool {
        (**self).gradient_reachable(x, z)
    }
    fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        (**self).grad_x(x, y)
    }
    fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<DVector<f64>> {
        (**self).grad_y(x, y)
    }
    fn grad_x_and_mixed(&self, x: &[f64], y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        (**self).grad_x_and_mixed(x, y)
    }
}

/// The cost with the roles of `x` and `y` exchanged: `c*(x, y) = c(y, x)`.
#[derive(Debug, Clone)]
pub struct Swapped<C>(pub C);

impl<C: Cost> Cost for Swapped<C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn label(&self) -> String {
        format!("swapped({})", self.0.label())
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.0.eval(y, x)
    }

    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        self.0.is_valid(y, x)
    }

    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle> {
        let d = self.0.compute_derivatives(y, x, order)?;
        let n = d.dim();
        Ok(DerivativeBundle {
            order: d.order,
            value: d.value,
            grad_x: d.grad_y.clone(),
            grad_y: d.grad_x.clone(),
            hess_xx: d.hess_yy.clone(),
            hess_xy: d.hess_xy.transpose(),
            hess_yy: d.hess_xx.clone(),
            // c*_{ij,k} = ∂y_i ∂y_j ∂x_k c = c_{k,ij}
            xxy: Tensor3::from_fn(n, |i, j, k| d.xyy.get(k, i, j)),
            // c*_{i,jk} = ∂y_i ∂x_j ∂x_k c = c_{jk,i}
            xyy: Tensor3::from_fn(n, |i, j, k| d.xxy.get(j, k, i)),
            xxyy: Tensor4::from_fn(n, |i, j, k, l| d.xxyy.get(k, l, i, j)),
        })
    }
}

pub(crate) fn check_pair<C: Cost + ?Sized>(cost: &C, x: &[f64], y: &[f64]) -> Result<()> {
    let n = cost.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::InvalidInput(format!(
            "point dimension {}/{} does not match cost dimension {n}",
            x.len(),
            y.len()
        )));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) || !cost.is_valid(x, y) {
        return Err(Error::OutOfValidityDomain(format!(
            "{} at x={x:?}, y={y:?}",
            cost.label()
        )));
    }
    Ok(())
}

/// Checked derivative evaluation.
pub fn derivatives<C: Cost + ?Sized>(cost: &C, x: &Point, y: &Point, order: usize) -> Result<DerivativeBundle> {
    if order > 4 {
        return Err(Error::UnsupportedOrder(order));
    }
    check_pair(cost, x.as_slice(), y.as_slice())?;
    cost.compute_derivatives(x.as_slice(), y.as_slice(), order)
}

/// Inverse `c^{i,j}` of the mixed Hessian `c_{i,j}`.
///
/// Row index of the inverse is a `y` index, column index an `x` index, so
/// that `Σ_j c^{i,j} c_{j,k} = δ_{ik}`.
pub fn inverse_mixed_hessian<C: Cost + ?Sized>(cost: &C, x: &Point, y: &Point) -> Result<DMatrix<f64>> {
    let d = derivatives(cost, x, y, 2)?;
    invert_mixed(&d.hess_xy)
}

pub(crate) fn invert_mixed(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let det = m.determinant();
    if !det.is_finite() || det.abs() < A2_DET_TOL {
        return Err(Error::A2Violation {
            det: det.abs(),
            context: String::new(),
        });
    }
    m.clone().try_inverse().ok_or(Error::A2Violation {
        det: det.abs(),
        context: " (inverse failed)".into(),
    })
}

/// Build a cost from a catalog spec, boxed for dynamic use.
pub fn build(spec: &CostSpec, dim: usize) -> Result<Arc<dyn Cost>> {
    Ok(Arc::new(spec.build(dim)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn swapped_exchanges_roles() {
        let c = RadialCost::new(2, CostSpec::Power { p: 3.0 }).unwrap();
        let s = Swapped(c.clone());
        let x = [0.1, 0.7];
        let y = [0.9, -0.2];
        let d = c.compute_derivatives(&x, &y, 4).unwrap();
        let ds = s.compute_derivatives(&y, &x, 4).unwrap();
        assert_eq!(d.value, ds.value);
        assert_eq!(d.grad_x, ds.grad_y);
        assert_eq!(d.hess_xy, ds.hess_xy.transpose());
        assert_eq!(d.xxy.get(0, 1, 1), ds.xyy.get(1, 0, 1));
        assert_eq!(d.xxyy.get(0, 1, 1, 0), ds.xxyy.get(1, 0, 0, 1));
    }

    #[test]
    fn unsupported_order() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let err = derivatives(&c, &dvector![0.0, 0.0], &dvector![1.0, 0.0], 5).unwrap_err();
        assert!(matches!(err, Error::UnsupportedOrder(5)));
    }

    #[test]
    fn invalid_pair_is_rejected() {
        let c = RadialCost::new(2, CostSpec::NegLog).unwrap();
        let err = derivatives(&c, &dvector![0.5, 0.5], &dvector![0.5, 0.5], 2).unwrap_err();
        assert!(matches!(err, Error::OutOfValidityDomain(_)));
    }

    #[test]
    fn quadratic_inverse_is_minus_identity() {
        let c = RadialCost::new(3, CostSpec::Quadratic).unwrap();
        let inv = inverse_mixed_hessian(&c, &dvector![0.3, -1.0, 2.0], &dvector![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(inv, -DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn sqrt_one_plus_at_coincidence() {
        let c = RadialCost::new(2, CostSpec::SqrtOnePlus).unwrap();
        let p = dvector![0.4, 0.1];
        let d = derivatives(&c, &p, &p, 2).unwrap();
        assert_eq!(d.hess_xy, -DMatrix::<f64>::identity(2, 2));
        let inv = inverse_mixed_hessian(&c, &p, &p).unwrap();
        assert_eq!(inv, -DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn degenerate_mixed_hessian_is_a2_violation() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(invert_mixed(&m), Err(Error::A2Violation { .. })));
    }
}
