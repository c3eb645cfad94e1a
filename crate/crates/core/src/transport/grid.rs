use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::Point;
use crate::error::{Error, Result};

/// Regular grid, last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularGrid {
    pub lo: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl RegularGrid {
    /// Nodes at cell centres of `[lo, hi]` split into `shape` cells.
    pub fn cell_centered(lo: &[f64], hi: &[f64], shape: &[usize]) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != shape.len() || lo.is_empty() {
            return Err(Error::InvalidInput("grid bounds and shape disagree".into()));
        }
        if shape.contains(&0) || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidInput(format!(
                "degenerate grid {lo:?}..{hi:?} × {shape:?}"
            )));
        }
        let spacing: Vec<f64> = (0..lo.len()).map(|a| (hi[a] - lo[a]) / shape[a] as f64).collect();
        Ok(Self {
            lo: lo.iter().zip(&spacing).map(|(l, h)| l + 0.5 * h).collect(),
            spacing,
            shape: shape.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            m[a] = idx % self.shape[a];
            idx /= self.shape[a];
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi_index(idx);
        Point::from_iterator(
            self.dim(),
            (0..self.dim()).map(|a| self.lo[a] + m[a] as f64 * self.spacing[a]),
        )
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Node displaced by `offset` (entries in −1..=1), if inside the grid.
    pub fn offset(&self, idx: usize, offset: &[isize]) -> Option<usize> {
        let mut m = self.multi_index(idx);
        for a in 0..self.dim() {
            let k = m[a] as isize + offset[a];
            if k < 0 || k >= self.shape[a] as isize {
                return None;
            }
            m[a] = k as usize;
        }
        Some(self.flat_index(&m))
    }

    /// The `3^n − 1` surrounding nodes that exist.
    pub fn neighborhood(&self, idx: usize) -> Vec<usize> {
        let n = self.dim();
        let mut out = Vec::new();
        for code in 0..3usize.pow(n as u32) {
            let mut off = vec![0isize; n];
            let mut c = code;
            for o in off.iter_mut() {
                *o = (c % 3) as isize - 1;
                c /= 3;
            }
            if off.iter().all(|&o| o == 0) {
                continue;
            }
            if let Some(k) = self.offset(idx, &off) {
                out.push(k);
            }
        }
        out
    }
}

/// Values on the active nodes of a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: RegularGrid,
    /// One value per grid node; inactive nodes hold NaN.
    pub values: Vec<f64>,
    pub active: Vec<bool>,
}

impl GridFunction {
    pub fn new(grid: RegularGrid, values: Vec<f64>) -> Result<Self> {
        let active = vec![true; grid.len()];
        Self::with_active(grid, values, active)
    }

    pub fn with_active(grid: RegularGrid, values: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || active.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "grid has {} nodes, got {} values and {} flags",
                grid.len(),
                values.len(),
                active.len()
            )));
        }
        Ok(Self { grid, values, active })
    }

    /// Scatter `vals`, given in order of the active nodes, onto the grid.
    pub fn from_active(grid: RegularGrid, active: Vec<bool>, vals: &[f64]) -> Result<Self> {
        let n_active = active.iter().filter(|&&a| a).count();
        if n_active != vals.len() {
            return Err(Error::InvalidInput(format!(
                "{n_active} active nodes but {} values",
                vals.len()
            )));
        }
        let mut it = vals.iter();
        let values = active
            .iter()
            .map(|&a| if a { *it.next().unwrap() } else { f64::NAN })
            .collect();
        Self::with_active(grid, values, active)
    }

    /// Flat node indices of the active nodes, in order.
    pub fn active_nodes(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| self.active[k]).collect()
    }

    fn value_at(&self, idx: usize, off: &[isize]) -> Option<f64> {
        self.grid
            .offset(idx, off)
            .filter(|&k| self.active[k])
            .map(|k| self.values[k])
    }

    /// Every node of the `3^n` neighbourhood exists and is active.
    pub fn is_interior(&self, idx: usize) -> bool {
        let nb = self.grid.neighborhood(idx);
        self.active[idx] && nb.len() == 3usize.pow(self.grid.dim() as u32) - 1 && nb.iter().all(|&k| self.active[k])
    }

    /// Central-difference gradient.
    pub fn gradient(&self, idx: usize) -> Result<DVector<f64>> {
        let n = self.grid.dim();
        let mut g = DVector::zeros(n);
        for a in 0..n {
            let mut e = vec![0isize; n];
            e[a] = 1;
            let p = self.value_at(idx, &e);
            e[a] = -1;
            let m = self.value_at(idx, &e);
            match (p, m) {
                (Some(p), Some(m)) => g[a] = (p - m) / (2.0 * self.grid.spacing[a]),
                _ => return Err(Error::BoundaryNode(idx)),
            }
        }
        Ok(g)
    }

    /// Second differences; in two dimensions this is the 9-point stencil.
    pub fn hessian(&self, idx: usize) -> Result<DMatrix<f64>> {
        if !self.is_interior(idx) {
            return Err(Error::BoundaryNode(idx));
        }
        let n = self.grid.dim();
        let h = &self.grid.spacing;
        let u0 = self.values[idx];
        let at = |off: &[isize]| self.value_at(idx, off).unwrap();
        let mut hm = DMatrix::zeros(n, n);
        for a in 0..n {
            let mut e = vec![0isize; n];
            e[a] = 1;
            let p = at(&e);
            e[a] = -1;
            let m = at(&e);
            hm[(a, a)] = (p - 2.0 * u0 + m) / (h[a] * h[a]);
            for b in (a + 1)..n {
                let mut e = vec![0isize; n];
                let mut corner = |sa: isize, sb: isize| {
                    e[a] = sa;
                    e[b] = sb;
                    at(&e)
                };
                let v = (corner(1, 1) - corner(1, -1) - corner(-1, 1) + corner(-1, -1)) / (4.0 * h[a] * h[b]);
                hm[(a, b)] = v;
                hm[(b, a)] = v;
            }
        }
        Ok(hm)
    }
}
