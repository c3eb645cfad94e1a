use nalgebra::DVector;

use super::{check_pair, Cost, Point, A2_DET_TOL};
use crate::error::{Error, Result};

/// Damped Newton settings for inverting `y ↦ D_x c(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-10,
            max_halvings: 40,
        }
    }
}

/// Solve `D_x c(x, y) = z` for `y`, starting at `y_init`.
pub fn solve_y_from_gradient<C: Cost + ?Sized>(cost: &C, x: &Point, z: &DVector<f64>, y_init: &Point) -> Result<Point> {
    solve_y_from_gradient_with(cost, x, z, y_init, NewtonOptions::default())
}

pub fn solve_y_from_gradient_with<C: Cost + ?Sized>(
    cost: &C,
    x: &Point,
    z: &DVector<f64>,
    y_init: &Point,
    opts: NewtonOptions,
) -> Result<Point> {
    if z.len() != cost.dim() {
        return Err(Error::InvalidInput(format!(
            "gradient target has dimension {}, cost has {}",
            z.len(),
            cost.dim()
        )));
    }
    check_pair(cost, x.as_slice(), y_init.as_slice())?;
    let xs = x.as_slice();
    let mut y = y_init.clone();
    let (g, mut m) = cost.grad_x_and_mixed(xs, y.as_slice())?;
    let mut r = z - g;
    let mut res = r.norm();
    for _ in 0..opts.max_iterations {
        if res <= opts.tolerance {
            return Ok(y);
        }
        let det = m.determinant();
        if !det.is_finite() || det.abs() < A2_DET_TOL {
            return Err(Error::A2Violation {
                det: det.abs(),
                context: format!(" along Newton path at y={:?}", y.as_slice()),
            });
        }
        let step = m.clone().lu().solve(&r).ok_or(Error::A2Violation {
            det: det.abs(),
            context: " (singular Newton system)".into(),
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &y + lambda * &step;
            if trial.iter().all(|v| v.is_finite()) && cost.is_valid(xs, trial.as_slice()) {
                let tg = cost.grad_x(xs, trial.as_slice())?;
                let tr = z - tg;
                let tres = tr.norm();
                if tres < res {
                    y = trial;
                    r = tr;
                    res = tres;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            // No descent possible in floating point: accept if already close.
            if res <= opts.tolerance {
                return Ok(y);
            }
            return Err(Error::NoConvergence {
                iterations: opts.max_iterations,
                residual: res,
            });
        }
        m = cost.grad_x_and_mixed(xs, y.as_slice())?.1;
    }
    if res <= opts.tolerance {
        Ok(y)
    } else {
        Err(Error::NoConvergence {
            iterations: opts.max_iterations,
            residual: res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, RadialCost};
    use nalgebra::dvector;

    #[test]
    fn quadratic_inverse_is_exact() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let x = dvector![0.3, -0.2];
        let z = dvector![0.5, 1.5];
        let y = solve_y_from_gradient(&c, &x, &z, &dvector![0.0, 0.0]).unwrap();
        assert!((y - (&x - &z)).norm() < 1e-12);
    }

    #[test]
    fn zero_gradient_means_coincidence() {
        let c = RadialCost::new(2, CostSpec::SqrtOnePlus).unwrap();
        let x = dvector![0.7, 0.1];
        let y = solve_y_from_gradient(&c, &x, &dvector![0.0, 0.0], &dvector![1.5, -0.5]).unwrap();
        assert!((y - x).norm() < 1e-10);
    }

    #[test]
    fn neg_log_round_trip() {
        let c = RadialCost::new(2, CostSpec::NegLog).unwrap();
        let x = dvector![0.0, 0.0];
        let z = dvector![1.0, 0.0];
        let y = solve_y_from_gradient(&c, &x, &z, &dvector![0.5, 0.3]).unwrap();
        let back = c.grad_x(x.as_slice(), y.as_slice()).unwrap();
        assert!((back - z).norm() <= 1e-10);
    }

    #[test]
    fn unreachable_gradient_fails() {
        // |D_x| of √(1+|x−y|²) is bounded by 1.
        let c = RadialCost::new(2, CostSpec::SqrtOnePlus).unwrap();
        let err = solve_y_from_gradient(&c, &dvector![0.0, 0.0], &dvector![2.0, 0.0], &dvector![0.1, 0.0]);
        assert!(matches!(
            err,
            Err(Error::NoConvergence { .. }) | Err(Error::A2Violation { .. })
        ));
    }
}
