//! Exact discrete Kantorovich solver.
//!
//! Costs are rounded to a dyadic lattice `2^-k · Z`, weights to integer
//! units summing to `N`, and the resulting integer problem is solved by
//! [`network_simplex`]. Dual potentials are then replaced by the midpoint of
//! the optimal dual set for the computed support (normalized by `u_0 = 0`),
//! which does not depend on the pivoting history.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::measure::DiscreteMeasure;
use super::simplex::network_simplex;
use crate::cost::{check_pair, Cost};
use crate::error::{Error, Result};

/// Coarsest admissible cost resolution.
pub const MAX_RESOLUTION: f64 = 1e-9;

pub const DEFAULT_MAX_POINTS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Cap on points per side.
    pub max_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_points: DEFAULT_MAX_POINTS,
        }
    }
}

/// The dyadic grid `2^-exponent · Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub exponent: i32,
}

impl Lattice {
    /// Finest lattice on which every value of magnitude `max_abs` stays
    /// below `bound` in integer units.
    pub fn fit(max_abs: f64, bound: f64) -> Result<Self> {
        let mut k = 60;
        while k > -60 && max_abs * 2f64.powi(k) > bound {
            k -= 1;
        }
        let l = Self { exponent: k };
        if l.step() > MAX_RESOLUTION {
            return Err(Error::ScaleExceeded(format!(
                "cost magnitude {max_abs:.3e} leaves lattice step {:.3e} > {MAX_RESOLUTION:e}",
                l.step()
            )));
        }
        Ok(l)
    }

    pub fn step(&self) -> f64 {
        2f64.powi(-self.exponent)
    }

    #[inline]
    pub fn to_int(&self, x: f64) -> i64 {
        (x * 2f64.powi(self.exponent)).round() as i64
    }

    #[inline]
    pub fn to_f64(&self, k: i64) -> f64 {
        k as f64 * self.step()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    /// Sorted by `(source, target)`.
    pub entries: Vec<PlanEntry>,
    pub objective: f64,
}

impl TransportPlan {
    pub fn row_sums(&self, m: usize) -> Vec<f64> {
        let mut r = vec![0.0; m];
        for e in &self.entries {
            r[e.source] += e.mass;
        }
        r
    }

    pub fn col_sums(&self, n: usize) -> Vec<f64> {
        let mut r = vec![0.0; n];
        for e in &self.entries {
            r[e.target] += e.mass;
        }
        r
    }

    /// Targets receiving mass from each source.
    pub fn support_by_source(&self, m: usize) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); m];
        for e in &self.entries {
            s[e.source].push(e.target);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["source", "target", "mass"])?;
        for e in &self.entries {
            w.serialize((e.source, e.target, e.mass))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl PotentialPair {
    /// `max (u_i + v_j − c_ij)` over all pairs.
    pub fn max_violation<C: Cost + ?Sized>(&self, cost: &C, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        mu.points
            .par_iter()
            .zip(&self.u)
            .map(|(x, ui)| {
                nu.points
                    .iter()
                    .zip(&self.v)
                    .map(|(y, vj)| ui + vj - cost.eval(x.as_slice(), y.as_slice()))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }

    pub fn dual_objective(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let a: f64 = self.u.iter().zip(&mu.weights).map(|(u, w)| u * w).sum();
        let b: f64 = self.v.iter().zip(&nu.weights).map(|(v, w)| v * w).sum();
        a + b
    }

    pub fn write_csv(&self, path: &Path, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["side", "index", "coords", "potential"])?;
        for (side, pts, vals) in [("source", &mu.points, &self.u), ("target", &nu.points, &self.v)] {
            for (k, (p, val)) in pts.iter().zip(vals.iter()).enumerate() {
                let coords: Vec<String> = p.iter().map(|c| c.to_string()).collect();
                w.write_record([side.to_string(), k.to_string(), coords.join(" "), val.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub n_sources: usize,
    pub n_targets: usize,
    pub n_support: usize,
    pub pivots: usize,
    pub lattice_step: f64,
    pub mass_units: i64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// `max (u_i + v_j − c_ij)` over all pairs.
    pub max_feasibility_violation: f64,
    /// `max |u_i + v_j − c_ij|` over support pairs.
    pub max_slackness_violation: f64,
    pub max_marginal_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub plan: TransportPlan,
    pub potentials: PotentialPair,
    pub summary: SolveSummary,
}

/// Row-major `m × n` cost matrix, checking validity of every pair.
pub fn cost_matrix<C: Cost + ?Sized>(
    cost: &C,
    xs: &[crate::cost::Point],
    ys: &[crate::cost::Point],
) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|x| {
            ys.iter()
                .map(|y| {
                    check_pair(cost, x.as_slice(), y.as_slice())?;
                    let c = cost.eval(x.as_slice(), y.as_slice());
                    if c.is_finite() {
                        Ok(c)
                    } else {
                        Err(Error::OutOfValidityDomain(format!(
                            "non-finite cost at x={x:?}, y={y:?}"
                        )))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Integer units proportional to `w` summing exactly to `total`, by largest
/// remainders. Every unit count stays positive.
fn integer_units(w: &[f64], total: i64) -> Vec<i64> {
    let s: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|x| x / s * total as f64).collect();
    let mut units: Vec<i64> = exact.iter().map(|x| (x.floor() as i64).max(1)).collect();
    let mut diff = total - units.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    if diff > 0 {
        order.sort_by(|&a, &b| {
            let fa = exact[a] - units[a] as f64;
            let fb = exact[b] - units[b] as f64;
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut k = 0;
        while diff > 0 {
            units[order[k % order.len()]] += 1;
            diff -= 1;
            k += 1;
        }
    } else if diff < 0 {
        order.sort_by(|&a, &b| {
            let fa = exact[a] - units[a] as f64;
            let fb = exact[b] - units[b] as f64;
            fa.total_cmp(&fb).then(a.cmp(&b))
        });
        let mut k = 0;
        while diff < 0 {
            let i = order[k % order.len()];
            if units[i] > 1 {
                units[i] -= 1;
                diff += 1;
            }
            k += 1;
        }
    }
    units
}

/// Midpoint of the optimal dual set for a fixed support.
///
/// With `v_j = C_ij − u_i` on the support, feasibility reads
/// `u_k − u_i ≤ w(i→k) = min_{j ∈ supp(i)} (C_kj − C_ij)`. With `u_0 = 0`
/// the extreme solutions are `u_k = d(0→k)` and `u_k = −d(k→0)` for
/// shortest-path distances `d`; both are computed by dense Dijkstra on
/// weights reduced by the feasible simplex duals `us`.
fn canonical_duals(m: usize, n: usize, cost: &[i64], supp: &[Vec<usize>], us: &[i64]) -> (Vec<i64>, Vec<i64>) {
    let c = |i: usize, j: usize| cost[i * n + j];
    let dijkstra = |forward: bool| -> Vec<i64> {
        let mut dist = vec![i64::MAX; m];
        let mut done = vec![false; m];
        dist[0] = 0;
        for _ in 0..m {
            let mut i = usize::MAX;
            for k in 0..m {
                if !done[k] && dist[k] != i64::MAX && (i == usize::MAX || dist[k] < dist[i]) {
                    i = k;
                }
            }
            if i == usize::MAX {
                break;
            }
            done[i] = true;
            for k in 0..m {
                if done[k] {
                    continue;
                }
                let w = if forward {
                    // edge i → k
                    supp[i].iter().map(|&j| c(k, j) - c(i, j)).min().unwrap() - us[k] + us[i]
                } else {
                    // edge k → i, walked backwards
                    supp[k].iter().map(|&j| c(i, j) - c(k, j)).min().unwrap() - us[i] + us[k]
                };
                debug_assert!(w >= 0, "reduced weight {w} < 0");
                let d = dist[i] + w;
                if d < dist[k] {
                    dist[k] = d;
                }
            }
        }
        dist
    };
    let fwd = dijkstra(true);
    let bwd = dijkstra(false);
    let mut u: Vec<i64> = (0..m)
        .map(|k| {
            let hi = fwd[k] + us[k] - us[0];
            let lo = -(bwd[k] + us[0] - us[k]);
            (hi + lo).div_euclid(2)
        })
        .collect();
    // c-transform polish: exact feasibility on the lattice
    let v: Vec<i64> = (0..n).map(|j| (0..m).map(|i| c(i, j) - u[i]).min().unwrap()).collect();
    for (i, ui) in u.iter_mut().enumerate() {
        *ui = (0..n).map(|j| c(i, j) - v[j]).min().unwrap();
    }
    let shift = u[0];
    (
        u.into_iter().map(|x| x - shift).collect(),
        v.into_iter().map(|x| x + shift).collect(),
    )
}

pub fn solve_discrete<C: Cost + ?Sized>(
    cost: &C,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<(TransportPlan, PotentialPair)> {
    let s = solve_discrete_with(cost, mu, nu, &SolverOptions::default())?;
    Ok((s.plan, s.potentials))
}

pub fn solve_discrete_with<C: Cost + ?Sized>(
    cost: &C,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: &SolverOptions,
) -> Result<Solution> {
    let (m, n) = (mu.len(), nu.len());
    if m == 0 || n == 0 {
        return Err(Error::EmptyMeasure("solver needs points on both sides".into()));
    }
    if m > opts.max_points || n > opts.max_points {
        return Err(Error::ScaleExceeded(format!(
            "{m} × {n} exceeds the cap of {} points per side",
            opts.max_points
        )));
    }
    let cf = cost_matrix(cost, &mu.points, &nu.points)?;
    let max_abs = cf.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let bound = (2f64.powi(58) / (m + n + 1) as f64).min(2f64.powi(50));
    let lat = Lattice::fit(max_abs, bound)?;
    let ci: Vec<i64> = cf.iter().map(|&c| lat.to_int(c)).collect();

    let l = (m as u64 / gcd(m as u64, n as u64)) * n as u64;
    let cap = 1u64 << 50;
    let total = if l <= cap { (l * (cap / l)) as i64 } else { cap as i64 };
    let supply = integer_units(&mu.weights, total);
    let demand = integer_units(&nu.weights, total);

    let out = network_simplex(m, n, &ci, &supply, &demand);
    let mut supp = vec![Vec::new(); m];
    for &(i, j, _) in &out.flows {
        supp[i].push(j);
    }
    let (ui, vi) = canonical_duals(m, n, &ci, &supp, &out.u);

    let entries: Vec<PlanEntry> = out
        .flows
        .iter()
        .map(|&(i, j, f)| PlanEntry {
            source: i,
            target: j,
            mass: f as f64 / total as f64,
        })
        .collect();
    let objective: f64 = entries.iter().map(|e| e.mass * cf[e.source * n + e.target]).sum();
    let plan = TransportPlan { entries, objective };
    let potentials = PotentialPair {
        u: ui.iter().map(|&x| lat.to_f64(x)).collect(),
        v: vi.iter().map(|&x| lat.to_f64(x)).collect(),
    };

    let dual = potentials.dual_objective(mu, nu);
    let feas = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| potentials.u[i] + potentials.v[j] - cf[i * n + j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let slack = plan
        .entries
        .iter()
        .map(|e| (potentials.u[e.source] + potentials.v[e.target] - cf[e.source * n + e.target]).abs())
        .fold(0.0, f64::max);
    let rows = plan.row_sums(m);
    let cols = plan.col_sums(n);
    let marg = rows
        .iter()
        .zip(&mu.weights)
        .chain(cols.iter().zip(&nu.weights))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let summary = SolveSummary {
        n_sources: m,
        n_targets: n,
        n_support: plan.entries.len(),
        pivots: out.pivots,
        lattice_step: lat.step(),
        mass_units: total,
        primal_objective: plan.objective,
        dual_objective: dual,
        duality_gap: (plan.objective - dual).abs(),
        max_feasibility_violation: feas,
        max_slackness_violation: slack,
        max_marginal_error: marg,
    };
    Ok(Solution {
        plan,
        potentials,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, Point, RadialCost};
    use nalgebra::dvector;

    fn quad(n: usize) -> RadialCost {
        RadialCost::new(n, CostSpec::Quadratic).unwrap()
    }

    #[test]
    fn identity_when_measures_coincide() {
        let pts: Vec<Point> = (0..5).map(|k| dvector![k as f64 * 0.3, (k * k) as f64 * 0.1]).collect();
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let s = solve_discrete_with(&quad(2), &mu, &mu, &SolverOptions::default()).unwrap();
        assert_eq!(s.plan.entries.len(), 5);
        assert!(s.plan.entries.iter().all(|e| e.source == e.target));
        assert_eq!(s.plan.objective, 0.0);
        assert!(s.potentials.u.iter().chain(&s.potentials.v).all(|&p| p == 0.0));
    }

    #[test]
    fn two_points_on_a_line() {
        let pts = vec![dvector![0.0], dvector![1.0]];
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let (plan, pot) = solve_discrete(&quad(1), &mu, &mu).unwrap();
        let pairs: Vec<(usize, usize)> = plan.entries.iter().map(|e| (e.source, e.target)).collect();
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(pot.u[0], 0.0);
    }

    #[test]
    fn integer_units_are_exact_for_uniform_weights() {
        for n in [1, 3, 7, 48, 2304] {
            let w = vec![1.0 / n as f64; n];
            let u = integer_units(&w, (n as i64) << 20);
            assert!(u.iter().all(|&x| x == 1 << 20), "n = {n}");
        }
        let u = integer_units(&[0.2, 0.3, 0.5], 1000);
        assert_eq!(u, vec![200, 300, 500]);
    }

    #[test]
    fn lattice_respects_resolution() {
        let l = Lattice::fit(1.0, 2f64.powi(40)).unwrap();
        assert_eq!(l.exponent, 40);
        assert!(Lattice::fit(1e6, 2f64.powi(40)).is_err());
    }

    #[test]
    fn scale_cap() {
        let pts: Vec<Point> = (0..4).map(|k| dvector![k as f64]).collect();
        let mu = DiscreteMeasure::uniform(pts).unwrap();
        let r = solve_discrete_with(&quad(1), &mu, &mu, &SolverOptions { max_points: 3 });
        assert!(matches!(r, Err(Error::ScaleExceeded(_))));
    }

    #[test]
    fn invalid_pair() {
        let c = RadialCost::new(1, CostSpec::NegLog).unwrap();
        let mu = DiscreteMeasure::uniform(vec![dvector![0.0], dvector![1.0]]).unwrap();
        assert!(matches!(
            solve_discrete(&c, &mu, &mu),
            Err(Error::OutOfValidityDomain(_))
        ));
    }
}
