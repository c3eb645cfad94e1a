//! Finite-difference machinery: eval-only user costs and the derivative
//! consistency check used as an oracle for the closed forms.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{check_pair, Cost, DerivativeBundle, Point};
use crate::error::{Error, Result};
use crate::tensor::{max_abs, max_abs_diff, Tensor3, Tensor4};

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type ValidFn = dyn Fn(&[f64], &[f64]) -> bool + Send + Sync;

/// Step multipliers per derivative order, relative to the base step.
/// Higher orders divide by `h^k`, so they need larger steps to stay above
/// roundoff.
const ORDER_STEP: [f64; 4] = [1.0, 10.0, 50.0, 100.0];

/// A cost supplied only through its values; derivatives are synthesized by
/// nested central differences with one Richardson step-halving.
#[derive(Clone)]
pub struct FiniteDifferenceCost {
    dim: usize,
    label: String,
    base_step: f64,
    eval: Arc<EvalFn>,
    valid: Arc<ValidFn>,
}

impl fmt::Debug for FiniteDifferenceCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteDifferenceCost")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .field("base_step", &self.base_step)
            .finish()
    }
}

impl FiniteDifferenceCost {
    pub fn new(
        dim: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        valid: impl Fn(&[f64], &[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            base_step: 1e-4,
            eval: Arc::new(eval),
            valid: Arc::new(valid),
        }
    }

    pub fn with_base_step(mut self, h: f64) -> Self {
        self.base_step = h;
        self
    }

    fn step(&self, order: usize, x: &[f64], y: &[f64]) -> f64 {
        let scale = super::catalog::dist_sq(x, y).sqrt().max(1.0);
        self.base_step * scale * ORDER_STEP[order - 1]
    }

    /// Nested central difference along `dirs` (`(false, i)` = x_i, `(true, j)` = y_j).
    fn nested(&self, x: &mut Vec<f64>, y: &mut Vec<f64>, dirs: &[(bool, usize)], h: f64) -> Result<f64> {
        let Some((&(on_y, idx), rest)) = dirs.split_first() else {
            if !(self.valid)(x, y) {
                return Err(Error::OutOfValidityDomain(format!(
                    "finite-difference stencil of {} left the validity domain at x={x:?}, y={y:?}",
                    self.label
                )));
            }
            return Ok((self.eval)(x, y));
        };
        let set = |x: &mut Vec<f64>, y: &mut Vec<f64>, v: f64| {
            if on_y {
                y[idx] = v;
            } else {
                x[idx] = v;
            }
        };
        let orig = if on_y { y[idx] } else { x[idx] };
        set(x, y, orig + h);
        let plus = self.nested(x, y, rest, h);
        set(x, y, orig - h);
        let minus = self.nested(x, y, rest, h);
        set(x, y, orig);
        Ok((plus? - minus?) / (2.0 * h))
    }

    fn richardson(&self, x: &[f64], y: &[f64], dirs: &[(bool, usize)], h: f64) -> Result<f64> {
        let mut xs = x.to_vec();
        let mut ys = y.to_vec();
        let coarse = self.nested(&mut xs, &mut ys, dirs, h)?;
        let fine = self.nested(&mut xs, &mut ys, dirs, 0.5 * h)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }
}

impl Cost for FiniteDifferenceCost {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self) -> String {
        self.label.clone()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }

    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        (self.valid)(x, y)
    }

    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle> {
        if order > 4 {
            return Err(Error::UnsupportedOrder(order));
        }
        let n = self.dim;
        let mut out = DerivativeBundle::zeros(n, order, (self.eval)(x, y));
        if order >= 1 {
            let h = self.step(1, x, y);
            for i in 0..n {
                out.grad_x[i] = self.richardson(x, y, &[(false, i)], h)?;
                out.grad_y[i] = self.richardson(x, y, &[(true, i)], h)?;
            }
        }
        if order >= 2 {
            let h = self.step(2, x, y);
            for i in 0..n {
                for j in 0..n {
                    out.hess_xx[(i, j)] = self.richardson(x, y, &[(false, i), (false, j)], h)?;
                    out.hess_xy[(i, j)] = self.richardson(x, y, &[(false, i), (true, j)], h)?;
                    out.hess_yy[(i, j)] = self.richardson(x, y, &[(true, i), (true, j)], h)?;
                }
            }
        }
        if order >= 3 {
            let h = self.step(3, x, y);
            let mut xxy = Tensor3::zeros(n);
            let mut xyy = Tensor3::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        xxy.set(i, j, k, self.richardson(x, y, &[(false, i), (false, j), (true, k)], h)?);
                        xyy.set(i, j, k, self.richardson(x, y, &[(false, i), (true, j), (true, k)], h)?);
                    }
                }
            }
            out.xxy = xxy;
            out.xyy = xyy;
        }
        if order >= 4 {
            let h = self.step(4, x, y);
            let mut vals = Vec::with_capacity(n * n * n * n);
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            vals.push(self.richardson(x, y, &[(false, i), (false, j), (true, k), (true, l)], h)?);
                        }
                    }
                }
            }
            let mut it = vals.into_iter();
            out.xxyy = Tensor4::from_fn(n, |_, _, _, _| it.next().unwrap_or(0.0));
        }
        Ok(out)
    }
}

/// Maximum relative discrepancy between analytic derivatives and central
/// differences, per derivative order (index 0 = first order).
///
/// The relative scale is `max(‖analytic tensor‖_∞, 1)`, so vanishing tensors
/// are compared in absolute terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdDiscrepancy {
    pub per_order: [f64; 4],
}

impl FdDiscrepancy {
    pub fn max(&self) -> f64 {
        self.per_order.iter().copied().fold(0.0, f64::max)
    }
}

/// Compare the analytic derivative bundle with central differences.
///
/// Each order `k` is differenced from the analytic order `k − 1` quantities
/// (order 1 from values), with step `h` and one Richardson halving.
pub fn fd_validate<C: Cost + ?Sized>(cost: &C, x: &Point, y: &Point, h: f64) -> Result<FdDiscrepancy> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let n = cost.dim();
    check_pair(cost, x.as_slice(), y.as_slice())?;
    // Every stencil point must be valid.
    for on_y in [false, true] {
        for i in 0..n {
            for s in [-h, h, -0.5 * h, 0.5 * h] {
                let (xs, ys) = shifted(x, y, on_y, i, s);
                check_pair(cost, xs.as_slice(), ys.as_slice())?;
            }
        }
    }
    let base = cost.compute_derivatives(x.as_slice(), y.as_slice(), 4)?;

    // Central difference of a flattened quantity along one coordinate.
    let diff = |on_y: bool, i: usize, f: &dyn Fn(&DerivativeBundle) -> Vec<f64>| -> Result<Vec<f64>> {
        let at = |s: f64| -> Result<Vec<f64>> {
            let (xs, ys) = shifted(x, y, on_y, i, s);
            Ok(f(&cost.compute_derivatives(xs.as_slice(), ys.as_slice(), 4)?))
        };
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(0.5 * h)?, at(-0.5 * h)?);
        Ok((0..p1.len())
            .map(|k| {
                let coarse = (p1[k] - m1[k]) / (2.0 * h);
                let fine = (p2[k] - m2[k]) / h;
                (4.0 * fine - coarse) / 3.0
            })
            .collect())
    };

    let rel = |analytic: &[f64], numeric: &[f64]| max_abs_diff(analytic, numeric) / max_abs(analytic).max(1.0);

    // order 1
    let value = |d: &DerivativeBundle| vec![d.value];
    let mut gx = Vec::new();
    let mut gy = Vec::new();
    for i in 0..n {
        gx.push(diff(false, i, &value)?[0]);
        gy.push(diff(true, i, &value)?[0]);
    }
    let o1 = rel(base.grad_x.as_slice(), &gx).max(rel(base.grad_y.as_slice(), &gy));

    // order 2: column j of each Hessian from differencing a gradient along j
    let mut hxx = DMatrix::zeros(n, n);
    let mut hxy = DMatrix::zeros(n, n);
    let mut hyy = DMatrix::zeros(n, n);
    let grad_x = |d: &DerivativeBundle| d.grad_x.as_slice().to_vec();
    let grad_y = |d: &DerivativeBundle| d.grad_y.as_slice().to_vec();
    for j in 0..n {
        let a = diff(false, j, &grad_x)?;
        let b = diff(true, j, &grad_x)?;
        let c = diff(true, j, &grad_y)?;
        for i in 0..n {
            hxx[(i, j)] = a[i];
            hxy[(i, j)] = b[i];
            hyy[(i, j)] = c[i];
        }
    }
    let o2 = rel(base.hess_xx.as_slice(), hxx.as_slice())
        .max(rel(base.hess_xy.as_slice(), hxy.as_slice()))
        .max(rel(base.hess_yy.as_slice(), hyy.as_slice()));

    // order 3: c_{ij,k} = ∂y_k c_{ij}, c_{i,jk} = ∂y_k c_{i,j}
    let mut xxy = Tensor3::zeros(n);
    let mut xyy = Tensor3::zeros(n);
    let hess_xx = |d: &DerivativeBundle| d.hess_xx.as_slice().to_vec();
    let hess_xy = |d: &DerivativeBundle| d.hess_xy.as_slice().to_vec();
    for k in 0..n {
        let a = diff(true, k, &hess_xx)?;
        let b = diff(true, k, &hess_xy)?;
        for i in 0..n {
            for j in 0..n {
                // nalgebra storage is column-major
                xxy.set(i, j, k, a[i + j * n]);
                xyy.set(i, j, k, b[i + j * n]);
            }
        }
    }
    let o3 = rel(base.xxy.as_slice(), xxy.as_slice()).max(rel(base.xyy.as_slice(), xyy.as_slice()));

    // order 4: c_{ij,kl} = ∂y_l c_{ij,k}
    let mut cols = Vec::with_capacity(n);
    let third = |d: &DerivativeBundle| d.xxy.as_slice().to_vec();
    for l in 0..n {
        cols.push(diff(true, l, &third)?);
    }
    let xxyy = Tensor4::from_fn(n, |i, j, k, l| cols[l][(i * n + j) * n + k]);
    let o4 = rel(base.xxyy.as_slice(), xxyy.as_slice());

    Ok(FdDiscrepancy {
        per_order: [o1, o2, o3, o4],
    })
}

fn shifted(x: &Point, y: &Point, on_y: bool, i: usize, s: f64) -> (DVector<f64>, DVector<f64>) {
    let mut xs = x.clone();
    let mut ys = y.clone();
    if on_y {
        ys[i] += s;
    } else {
        xs[i] += s;
    }
    (xs, ys)
}
