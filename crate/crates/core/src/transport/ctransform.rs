use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solve::{cost_matrix, Lattice};
use crate::cost::{Cost, Point};
use crate::error::{Error, Result};

/// Ties closer than this are recorded in the argmin set.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CTransform {
    pub values: Vec<f64>,
    /// Minimizing indices on the other side, ascending.
    pub argmins: Vec<Vec<usize>>,
}

/// Both c-transforms between fixed point sets `X` and `Y`.
///
/// Costs are held on a dyadic lattice fixed by `(cost, X, Y)` alone, and
/// the infima are taken in integer arithmetic, so repeated transforms are
/// exact: `u^{ccc} = u^c` bit for bit.
#[derive(Debug, Clone)]
pub struct CTransformer {
    m: usize,
    n: usize,
    c: Vec<i64>,
    lattice: Lattice,
}

impl CTransformer {
    pub fn new<C: Cost + ?Sized>(cost: &C, xs: &[Point], ys: &[Point]) -> Result<Self> {
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::EmptyMeasure("c-transform needs points on both sides".into()));
        }
        let cf = cost_matrix(cost, xs, ys)?;
        let max_abs = cf.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let lattice = Lattice::fit(max_abs, 2f64.powi(46))?;
        Ok(Self {
            m: xs.len(),
            n: ys.len(),
            c: cf.iter().map(|&c| lattice.to_int(c)).collect(),
            lattice,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    fn ints(&self, vals: &[f64], len: usize) -> Result<Vec<i64>> {
        if vals.len() != len {
            return Err(Error::InvalidInput(format!(
                "expected {len} values, got {}",
                vals.len()
            )));
        }
        let lim = 2f64.powi(52) * self.lattice.step();
        vals.iter()
            .map(|&v| {
                if v.is_finite() && v.abs() < lim {
                    Ok(self.lattice.to_int(v))
                } else {
                    Err(Error::ScaleExceeded(format!(
                        "potential value {v} exceeds the lattice range"
                    )))
                }
            })
            .collect()
    }

    fn tie(&self) -> i64 {
        self.lattice.to_int(TIE_TOL)
    }

    /// `u(x_i) = min_j c(x_i, y_j) − v_j`.
    pub fn to_source(&self, v: &[f64]) -> Result<CTransform> {
        let vi = self.ints(v, self.n)?;
        let tie = self.tie();
        let (values, argmins): (Vec<f64>, Vec<Vec<usize>>) = (0..self.m)
            .into_par_iter()
            .map(|i| {
                let row = &self.c[i * self.n..(i + 1) * self.n];
                let best = row.iter().zip(&vi).map(|(c, v)| c - v).min().unwrap();
                let arg = (0..self.n).filter(|&j| row[j] - vi[j] - best <= tie).collect();
                (self.lattice.to_f64(best), arg)
            })
            .unzip();
        Ok(CTransform { values, argmins })
    }

    /// `v(y_j) = min_i c(x_i, y_j) − u_i`.
    pub fn to_target(&self, u: &[f64]) -> Result<CTransform> {
        let ui = self.ints(u, self.m)?;
        let tie = self.tie();
        let (values, argmins): (Vec<f64>, Vec<Vec<usize>>) = (0..self.n)
            .into_par_iter()
            .map(|j| {
                let val = |i: usize| self.c[i * self.n + j] - ui[i];
                let best = (0..self.m).map(val).min().unwrap();
                let arg = (0..self.m).filter(|&i| val(i) - best <= tie).collect();
                (self.lattice.to_f64(best), arg)
            })
            .unzip();
        Ok(CTransform { values, argmins })
    }
}

/// `u(x) = inf_y c(x, y) − v(y)` over the points `ys`, for each of `xs`.
pub fn c_transform<C: Cost + ?Sized>(cost: &C, v: &[f64], ys: &[Point], xs: &[Point]) -> Result<CTransform> {
    CTransformer::new(cost, xs, ys)?.to_source(v)
}

/// `v(y) = inf_x c(x, y) − u(x)` over the points `xs`, for each of `ys`.
pub fn c_transform_target<C: Cost + ?Sized>(cost: &C, u: &[f64], xs: &[Point], ys: &[Point]) -> Result<CTransform> {
    CTransformer::new(cost, xs, ys)?.to_target(u)
}
