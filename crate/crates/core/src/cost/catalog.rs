//! Built-in costs of the form `c(x, y) = F(|x − y|² / 2)`.
//!
//! With `d = x − y` and `s = |d|²/2`, derivatives of `φ(d) = F(s)` follow from
//! the chain rule (`∂_i s = d_i`, `∂_ij s = δ_ij`), and since `∂_y = −∂_d`
//! every mixed derivative of `c` is `±` a derivative of `φ`.

use serde::{Deserialize, Serialize};

use super::{Cost, DerivativeBundle, SINGULAR_MARGIN};
use crate::error::{Error, Result};
use crate::tensor::{Tensor3, Tensor4};

/// Catalog entry: a named radial cost and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CostSpec {
    /// `½|x − y|²`
    Quadratic,
    /// `√(1 + |x − y|²)`
    SqrtOnePlus,
    /// `−√(1 − |x − y|²)`, valid for `|x − y| < 1`
    NegSqrtOneMinus,
    /// `√(1 − |x − y|²)`, valid for `|x − y| < 1`
    SqrtOneMinus,
    /// `−log|x − y|`, valid for `x ≠ y`
    NegLog,
    /// `|x − y|^p` with `p > 1`, `p ≠ 2`, valid for `x ≠ y`
    Power { p: f64 },
}

impl CostSpec {
    pub fn build(&self, dim: usize) -> Result<RadialCost> {
        RadialCost::new(dim, *self)
    }

    /// Every catalog family with representative parameters.
    pub fn catalog() -> Vec<CostSpec> {
        vec![
            CostSpec::Quadratic,
            CostSpec::SqrtOnePlus,
            CostSpec::NegSqrtOneMinus,
            CostSpec::SqrtOneMinus,
            CostSpec::NegLog,
            CostSpec::Power { p: 1.5 },
            CostSpec::Power { p: 3.0 },
            CostSpec::Power { p: 4.0 },
        ]
    }

    pub fn label(&self) -> String {
        match self {
            CostSpec::Quadratic => "quadratic".into(),
            CostSpec::SqrtOnePlus => "sqrt-one-plus".into(),
            CostSpec::NegSqrtOneMinus => "neg-sqrt-one-minus".into(),
            CostSpec::SqrtOneMinus => "sqrt-one-minus".into(),
            CostSpec::NegLog => "neg-log".into(),
            CostSpec::Power { p } => format!("power(p={p})"),
        }
    }

    /// Upper bound on `|x − y|` for validity, if any.
    pub fn max_distance(&self) -> Option<f64> {
        match self {
            CostSpec::NegSqrtOneMinus | CostSpec::SqrtOneMinus => Some(1.0 - SINGULAR_MARGIN),
            _ => None,
        }
    }

    /// Lower bound on `|x − y|` for validity, if any.
    pub fn min_distance(&self) -> Option<f64> {
        match self {
            CostSpec::NegLog | CostSpec::Power { .. } => Some(SINGULAR_MARGIN),
            _ => None,
        }
    }

    fn valid_distance_sq(&self, r2: f64) -> bool {
        if !r2.is_finite() {
            return false;
        }
        if let Some(max) = self.max_distance() {
            if r2 >= max * max {
                return false;
            }
        }
        if let Some(min) = self.min_distance() {
            if r2 <= min * min {
                return false;
            }
        }
        true
    }

    /// `[F, F', F'', F''', F'''']` at `s = r²/2`.
    fn profile(&self, s: f64) -> [f64; 5] {
        match *self {
            CostSpec::Quadratic => [s, 1.0, 0.0, 0.0, 0.0],
            CostSpec::SqrtOnePlus => {
                let q = 1.0 + 2.0 * s;
                let r = q.sqrt();
                [r, 1.0 / r, -1.0 / (q * r), 3.0 / (q * q * r), -15.0 / (q * q * q * r)]
            }
            CostSpec::NegSqrtOneMinus => {
                let q = 1.0 - 2.0 * s;
                let r = q.sqrt();
                [-r, 1.0 / r, 1.0 / (q * r), 3.0 / (q * q * r), 15.0 / (q * q * q * r)]
            }
            CostSpec::SqrtOneMinus => {
                let q = 1.0 - 2.0 * s;
                let r = q.sqrt();
                [r, -1.0 / r, -1.0 / (q * r), -3.0 / (q * q * r), -15.0 / (q * q * q * r)]
            }
            CostSpec::NegLog => [
                -0.5 * (2.0 * s).ln(),
                -0.5 / s,
                0.5 / (s * s),
                -1.0 / (s * s * s),
                3.0 / (s * s * s * s),
            ],
            CostSpec::Power { p } => {
                let a = 0.5 * p;
                let base = (2.0f64).powf(a);
                let mut out = [0.0; 5];
                let mut coeff = base;
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot = coeff * s.powf(a - k as f64);
                    coeff *= a - k as f64;
                }
                out
            }
        }
    }
}

/// A radial catalog cost in a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialCost {
    dim: usize,
    spec: CostSpec,
}

impl RadialCost {
    pub fn new(dim: usize, spec: CostSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("cost dimension must be positive".into()));
        }
        if let CostSpec::Power { p } = spec {
            if !(p > 1.0) || (p - 2.0).abs() < 1e-12 || !p.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "power cost needs p > 1 and p != 2, got {p}"
                )));
            }
        }
        Ok(Self { dim, spec })
    }

    pub fn spec(&self) -> CostSpec {
        self.spec
    }
}

impl Cost for RadialCost {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self) -> String {
        self.spec.label()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let s = 0.5 * dist_sq(x, y);
        self.spec.profile(s)[0]
    }

    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        self.spec.valid_distance_sq(dist_sq(x, y))
    }

    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<DerivativeBundle> {
        if order > 4 {
            return Err(Error::UnsupportedOrder(order));
        }
        let n = self.dim;
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let s = 0.5 * d.iter().map(|v| v * v).sum::<f64>();
        let [f0, f1, f2, f3, f4] = self.spec.profile(s);
        let mut out = DerivativeBundle::zeros(n, order, f0);
        if order == 0 {
            return Ok(out);
        }
        let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };

        for i in 0..n {
            out.grad_x[i] = f1 * d[i];
            out.grad_y[i] = -f1 * d[i];
        }
        if order == 1 {
            return Ok(out);
        }

        for i in 0..n {
            for j in 0..n {
                let phi = f2 * d[i] * d[j] + f1 * delta(i, j);
                out.hess_xx[(i, j)] = phi;
                out.hess_yy[(i, j)] = phi;
                out.hess_xy[(i, j)] = -phi;
            }
        }
        if order == 2 {
            return Ok(out);
        }

        let phi3 = Tensor3::from_fn(n, |i, j, k| {
            f3 * d[i] * d[j] * d[k] + f2 * (delta(i, j) * d[k] + delta(i, k) * d[j] + delta(j, k) * d[i])
        });
        out.xxy = Tensor3::from_fn(n, |i, j, k| -phi3.get(i, j, k));
        out.xyy = phi3;
        if order == 3 {
            return Ok(out);
        }

        out.xxyy = Tensor4::from_fn(n, |i, j, k, l| {
            f4 * d[i] * d[j] * d[k] * d[l]
                + f3 * (delta(i, j) * d[k] * d[l]
                    + delta(i, k) * d[j] * d[l]
                    + delta(i, l) * d[j] * d[k]
                    + delta(j, k) * d[i] * d[l]
                    + delta(j, l) * d[i] * d[k]
                    + delta(k, l) * d[i] * d[j])
                + f2 * (delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
        });
        Ok(out)
    }

    fn gradient_reachable(&self, _x: &[f64], z: &[f64]) -> bool {
        // |D_x c| = |F'(r²/2)|·r is monotone in r for every catalog family.
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let at = |r: f64| self.spec.profile(0.5 * r * r)[1].abs() * r;
        let below_max = self.spec.max_distance().is_none_or(|r| norm < at(r));
        let above_min = match self.spec.min_distance() {
            Some(r) => {
                let (a, b) = (at(r), at(2.0 * r));
                // neg-log decreases in r, the power costs increase
                if a > b {
                    norm > 0.0 && norm < a
                } else {
                    norm > a
                }
            }
            None => true,
        };
        let bounded = match self.spec {
            CostSpec::SqrtOnePlus => norm < 1.0,
            _ => true,
        };
        norm.is_finite() && below_max && above_min && bounded
    }

    fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<nalgebra::DVector<f64>> {
        let s = 0.5 * dist_sq(x, y);
        let f1 = self.spec.profile(s)[1];
        Ok(nalgebra::DVector::from_iterator(
            self.dim,
            x.iter().zip(y).map(|(a, b)| f1 * (a - b)),
        ))
    }

    fn grad_y(&self, x: &[f64], y: &[f64]) -> Result<nalgebra::DVector<f64>> {
        Ok(-self.grad_x(x, y)?)
    }
}

#[inline]
pub(crate) fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_mixed_hessian_is_minus_identity() {
        let c = RadialCost::new(3, CostSpec::Quadratic).unwrap();
        let d = c.compute_derivatives(&[0.2, 0.5, -1.0], &[3.0, 0.1, 0.0], 4).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d.hess_xy[(i, j)], if i == j { -1.0 } else { 0.0 });
            }
        }
        assert_eq!(d.hess_xy.determinant().abs(), 1.0);
        assert_eq!(d.xxyy.max_abs(), 0.0);
        assert_eq!(d.xxy.max_abs(), 0.0);
    }

    #[test]
    fn validity_margins() {
        let c = RadialCost::new(2, CostSpec::NegSqrtOneMinus).unwrap();
        assert!(c.is_valid(&[0.0, 0.0], &[0.999, 0.0]));
        assert!(!c.is_valid(&[0.0, 0.0], &[1.0 - 1e-7, 0.0]));
        let l = RadialCost::new(2, CostSpec::NegLog).unwrap();
        assert!(!l.is_valid(&[0.3, 0.3], &[0.3, 0.3]));
        assert!(!l.is_valid(&[0.0, 0.0], &[5e-7, 0.0]));
        assert!(l.is_valid(&[0.0, 0.0], &[2e-6, 0.0]));
        let p = RadialCost::new(2, CostSpec::Power { p: 4.0 }).unwrap();
        assert!(!p.is_valid(&[0.1, 0.1], &[0.1, 0.1]));
    }

    #[test]
    fn rejects_bad_power() {
        assert!(RadialCost::new(2, CostSpec::Power { p: 2.0 }).is_err());
        assert!(RadialCost::new(2, CostSpec::Power { p: 1.0 }).is_err());
        assert!(RadialCost::new(2, CostSpec::Power { p: 0.5 }).is_err());
    }

    #[test]
    fn values_match_closed_forms() {
        let x = [0.1, 0.2];
        let y = [0.4, -0.2];
        let r = (0.09f64 + 0.16).sqrt();
        let cases = [
            (CostSpec::Quadratic, 0.5 * r * r),
            (CostSpec::SqrtOnePlus, (1.0 + r * r).sqrt()),
            (CostSpec::NegSqrtOneMinus, -(1.0 - r * r).sqrt()),
            (CostSpec::SqrtOneMinus, (1.0 - r * r).sqrt()),
            (CostSpec::NegLog, -r.ln()),
            (CostSpec::Power { p: 3.0 }, r.powi(3)),
        ];
        for (spec, want) in cases {
            let c = RadialCost::new(2, spec).unwrap();
            let got = c.eval(&x, &y);
            assert!((got - want).abs() < 1e-14, "{spec:?}: {got} vs {want}");
        }
    }

    #[test]
    fn spec_serializes_by_name() {
        let s = serde_json::to_string(&CostSpec::Power { p: 4.0 }).unwrap();
        assert_eq!(s, r#"{"name":"power","p":4.0}"#);
        let q: CostSpec = serde_json::from_str(r#"{"name":"neg-log"}"#).unwrap();
        assert_eq!(q, CostSpec::NegLog);
    }
}
