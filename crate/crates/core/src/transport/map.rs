use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridFunction;
use super::solve::cost_matrix;
use crate::cost::{derivatives, Cost, Point};
use crate::error::{Error, Result};

/// Relative tie tolerance for argmin sets, multiplied by the cost scale.
pub const MAP_TIE_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapValue {
    Single { target: usize },
    Multivalued { targets: Vec<usize> },
}

impl MapValue {
    pub fn single(&self) -> Option<usize> {
        match self {
            MapValue::Single { target } => Some(*target),
            MapValue::Multivalued { .. } => None,
        }
    }

    pub fn targets(&self) -> Vec<usize> {
        match self {
            MapValue::Single { target } => vec![*target],
            MapValue::Multivalued { targets } => targets.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// `max |D u(x) − D_x c(x, T(x))|` over interior single-valued nodes.
    pub max_residual: f64,
    pub spacing: f64,
    /// `max_residual / spacing`.
    pub ratio: f64,
    pub n_nodes: usize,
    pub argmax_node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapExtraction {
    /// One entry per source point.
    pub map: Vec<MapValue>,
    pub tie_tolerance: f64,
    pub n_multivalued: usize,
    pub gradient_check: Option<GradientCheck>,
}

impl MapExtraction {
    pub fn multivalued_sources(&self) -> Vec<usize> {
        (0..self.map.len())
            .filter(|&i| self.map[i].single().is_none())
            .collect()
    }
}

/// Argmin sets of `y ↦ c(x, y) − v(y)`, and, when `u` is a grid function
/// whose active nodes are the points `xs` in order, the gradient identity
/// `D u(x) = D_x c(x, T(x))` at interior nodes.
pub fn extract_map<C: Cost + ?Sized>(
    cost: &C,
    u: Option<&GridFunction>,
    v: &[f64],
    xs: &[Point],
    ys: &[Point],
) -> Result<MapExtraction> {
    if v.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "{} target values for {} targets",
            v.len(),
            ys.len()
        )));
    }
    let n = ys.len();
    let cf = cost_matrix(cost, xs, ys)?;
    let scale = cf.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = MAP_TIE_REL * if scale > 0.0 { scale } else { 1.0 };
    let map: Vec<MapValue> = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let row = &cf[i * n..(i + 1) * n];
            let best = row.iter().zip(v).map(|(c, v)| c - v).fold(f64::INFINITY, f64::min);
            let arg: Vec<usize> = (0..n).filter(|&j| row[j] - v[j] - best <= tol).collect();
            if arg.len() == 1 {
                MapValue::Single { target: arg[0] }
            } else {
                MapValue::Multivalued { targets: arg }
            }
        })
        .collect();
    let n_multivalued = map.iter().filter(|m| m.single().is_none()).count();

    let gradient_check = match u {
        None => None,
        Some(gf) => {
            let nodes = gf.active_nodes();
            if nodes.len() != xs.len() {
                return Err(Error::InvalidInput(format!(
                    "grid has {} active nodes but {} source points",
                    nodes.len(),
                    xs.len()
                )));
            }
            let res: Vec<(usize, f64)> = nodes
                .par_iter()
                .enumerate()
                .filter_map(|(i, &node)| {
                    let t = map[i].single()?;
                    let du = gf.gradient(node).ok()?;
                    Some((i, du, t))
                })
                .map(|(i, du, t)| -> Result<(usize, f64)> {
                    let dc = cost.grad_x(xs[i].as_slice(), ys[t].as_slice())?;
                    Ok((nodes[i], (du - dc).norm()))
                })
                .collect::<Result<_>>()?;
            let (argmax, max) = res.iter().fold(
                (None, 0.0f64),
                |(a, m), &(k, r)| if r > m { (Some(k), r) } else { (a, m) },
            );
            let h = gf.grid.max_spacing();
            Some(GradientCheck {
                max_residual: max,
                spacing: h,
                ratio: max / h,
                n_nodes: res.len(),
                argmax_node: argmax,
            })
        }
    };
    Ok(MapExtraction {
        map,
        tie_tolerance: tol,
        n_multivalued,
        gradient_check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaResidual {
    /// Per grid node; `None` where the node does not qualify.
    pub per_node: Vec<Option<f64>>,
    pub max: f64,
    pub argmax_node: usize,
    pub mean: f64,
    pub n_qualified: usize,
}

/// `|det(D²_x c(x, T x) − D²u(x)) − |det c_{i,j}(x, T x)| f(x) / g(T x)|`
/// at interior nodes whose map value and neighbours' map values are single.
///
/// `map` and `f` are indexed by active node, `g` by target.
pub fn ma_residual<C: Cost + ?Sized>(
    cost: &C,
    u: &GridFunction,
    map: &[MapValue],
    ys: &[Point],
    f: &[f64],
    g: &[f64],
) -> Result<MaResidual> {
    let nodes = u.active_nodes();
    if map.len() != nodes.len() || f.len() != nodes.len() || g.len() != ys.len() {
        return Err(Error::InvalidInput("map, densities and grid disagree in size".into()));
    }
    let mut slot = vec![usize::MAX; u.grid.len()];
    for (i, &k) in nodes.iter().enumerate() {
        slot[k] = i;
    }
    let per_active: Vec<Option<f64>> = nodes
        .par_iter()
        .enumerate()
        .map(|(i, &node)| -> Result<Option<f64>> {
            let Some(t) = map[i].single() else { return Ok(None) };
            if !u.is_interior(node)
                || u.grid
                    .neighborhood(node)
                    .iter()
                    .any(|&k| map[slot[k]].single().is_none())
            {
                return Ok(None);
            }
            let x = u.grid.point(node);
            let d = derivatives(cost, &x, &ys[t], 2)?;
            let hu = u.hessian(node)?;
            let lhs = (&d.hess_xx - hu).determinant();
            let rhs = d.hess_xy.determinant().abs() * f[i] / g[t];
            Ok(Some((lhs - rhs).abs()))
        })
        .collect::<Result<_>>()?;
    let mut per_node = vec![None; u.grid.len()];
    let (mut max, mut argmax, mut sum, mut count) = (0.0f64, usize::MAX, 0.0, 0usize);
    for (i, r) in per_active.iter().enumerate() {
        per_node[nodes[i]] = *r;
        if let Some(r) = *r {
            count += 1;
            sum += r;
            if argmax == usize::MAX || r > max {
                max = r;
                argmax = nodes[i];
            }
        }
    }
    if count == 0 {
        return Err(Error::NoQualifiedNodes);
    }
    Ok(MaResidual {
        per_node,
        max,
        argmax_node: argmax,
        mean: sum / count as f64,
        n_qualified: count,
    })
}
