//! Interpolation of c-supports along a c-segment and the ordering of the
//! level sets `{h_t = h_0}`.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::convexity::tangent_basis;
use super::domain::sphere_directions;
use super::frame::LocalFrame;
use super::segment::{c_segment, segment_point, CSegment};
use crate::cost::{solve_y_from_gradient, Cost, Point};
use crate::error::{Error, Result};
use crate::mtw::FramePair;

/// A c-support `h(x) = c(x, y) + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSupport {
    pub y: Point,
    pub offset: f64,
}

impl CSupport {
    pub fn eval<C: Cost + ?Sized>(&self, cost: &C, x: &[f64]) -> f64 {
        cost.eval(x, self.y.as_slice()) + self.offset
    }
}

/// Ring radii `{1e-2, 3e-2, 1e-1}·scale`.
pub fn default_radii(scale: f64) -> Vec<f64> {
    vec![1e-2 * scale, 3e-2 * scale, 1e-1 * scale]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusMargin {
    pub radius: f64,
    pub min_margin: f64,
    /// `min_margin / radius²`
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportMarginReport {
    /// `min h_t(x) − min(h₀(x), h₁(x))` over interior `t` and ring points.
    pub min_margin: f64,
    pub argmin_t: f64,
    pub argmin_x: Vec<f64>,
    pub per_radius: Vec<RadiusMargin>,
    /// Margin at `x₀` for `t ∈ {0, 1}`; zero by construction.
    pub endpoint_margin: f64,
    /// `|p₁ − p₀|`
    pub delta: f64,
    /// Largest `d²/dt² ξᵀ c_xx(x₀, y_t) ξ` over sampled `t` and unit
    /// `ξ ⊥ p₁ − p₀`, by central differences in `t`.
    pub second_derivative_max: f64,
    pub n_points: usize,
    pub n_skipped: usize,
}

/// `h_t(x) − h_t(x₀)` for the support through `y_t`.
fn h<C: Cost + ?Sized>(cost: &C, x: &[f64], x0: &[f64], y: &[f64]) -> f64 {
    cost.eval(x, y) - cost.eval(x0, y)
}

/// Check `h_t(x) > min(h₀(x), h₁(x))` on rings around `x₀`, where all
/// `h_t` are normalized to agree at `x₀`.
pub fn support_interpolation_check<C: Cost + ?Sized>(
    cost: &C,
    x0: &Point,
    y0: &Point,
    y1: &Point,
    radii: &[f64],
    m_t: usize,
    m_dir: usize,
) -> Result<SupportMarginReport> {
    if m_t < 2 || m_dir == 0 || radii.is_empty() {
        return Err(Error::InvalidInput(
            "need m_t ≥ 2, m_dir ≥ 1 and at least one radius".into(),
        ));
    }
    let seg = c_segment(cost, x0, y0, y1, m_t)?;
    let interior: Vec<(f64, &Point)> = seg.samples[1..m_t].iter().map(|s| (s.t, &s.y)).collect();
    let dirs = ring_directions(&(seg.p1() - seg.p0()), m_dir);
    let x0s = x0.as_slice();

    struct Hit {
        margin: f64,
        t: f64,
        x: Vec<f64>,
        radius: usize,
    }
    let ring: Vec<(usize, Vec<f64>)> = radii
        .iter()
        .enumerate()
        .flat_map(|(ri, r)| {
            dirs.iter()
                .map(move |d| (ri, x0s.iter().zip(d).map(|(a, b)| a + r * b).collect::<Vec<f64>>()))
        })
        .collect();
    let evals: Vec<Option<Vec<Hit>>> = ring
        .par_iter()
        .map(|(ri, x)| {
            let ok = |y: &Point| cost.is_valid(x, y.as_slice());
            if !ok(y0) || !ok(y1) || !interior.iter().all(|(_, y)| ok(y)) {
                return None;
            }
            let floor = h(cost, x, x0s, y0.as_slice()).min(h(cost, x, x0s, y1.as_slice()));
            Some(
                interior
                    .iter()
                    .map(|(t, y)| Hit {
                        margin: h(cost, x, x0s, y.as_slice()) - floor,
                        t: *t,
                        x: x.clone(),
                        radius: *ri,
                    })
                    .collect(),
            )
        })
        .collect();
    let n_skipped = evals.iter().filter(|e| e.is_none()).count();
    let mut per_radius: Vec<RadiusMargin> = radii
        .iter()
        .map(|&radius| RadiusMargin {
            radius,
            min_margin: f64::INFINITY,
            normalized: f64::INFINITY,
        })
        .collect();
    let mut best: Option<&Hit> = None;
    for hit in evals.iter().flatten().flatten() {
        let pr = &mut per_radius[hit.radius];
        if hit.margin < pr.min_margin {
            pr.min_margin = hit.margin;
            pr.normalized = hit.margin / (pr.radius * pr.radius);
        }
        if best.is_none_or(|b| hit.margin < b.margin) {
            best = Some(hit);
        }
    }
    let best = best.ok_or_else(|| Error::OutOfValidityDomain("no ring point is valid with the segment".into()))?;

    let endpoint_margin = {
        let f = |y: &Point| h(cost, x0s, x0s, y.as_slice());
        let floor = f(y0).min(f(y1));
        (f(y0) - floor).abs().max((f(y1) - floor).abs())
    };

    let (second_derivative_max, delta) = second_t_derivative(cost, &seg, m_dir)?;
    Ok(SupportMarginReport {
        min_margin: best.margin,
        argmin_t: best.t,
        argmin_x: best.x.clone(),
        per_radius,
        endpoint_margin,
        delta,
        second_derivative_max,
        n_points: ring.len() - n_skipped,
        n_skipped,
    })
}

/// Unit directions around `x₀`, expressed in a frame whose last axis is
/// `normal`, so that the tangent directions `⊥ normal` are hit exactly.
fn ring_directions(normal: &DVector<f64>, m_dir: usize) -> Vec<Vec<f64>> {
    let n = normal.len();
    if normal.norm() == 0.0 {
        return sphere_directions(n, m_dir);
    }
    let mut cols: Vec<DVector<f64>> = tangent_basis(normal).column_iter().map(|c| c.into_owned()).collect();
    cols.push(normal.normalize());
    let q = nalgebra::DMatrix::from_columns(&cols);
    let mut local = sphere_directions(n, m_dir);
    if n == 3 {
        // the tangent circle
        local.extend(
            sphere_directions(2, m_dir.div_ceil(2).max(4))
                .into_iter()
                .map(|d| vec![d[0], d[1], 0.0]),
        );
    }
    local
        .into_iter()
        .map(|d| (&q * DVector::from_vec(d)).as_slice().to_vec())
        .collect()
}

/// Largest central-difference `d²/dt² ξᵀ c_xx(x₀, y_t) ξ` along the segment.
fn second_t_derivative<C: Cost + ?Sized>(cost: &C, seg: &CSegment, m_dir: usize) -> Result<(f64, f64)> {
    let n = cost.dim();
    let (p0, p1) = (seg.p0().clone(), seg.p1().clone());
    let dp = &p1 - &p0;
    let delta = dp.norm();
    if delta == 0.0 {
        return Ok((0.0, 0.0));
    }
    let basis = tangent_basis(&dp);
    let xis: Vec<DVector<f64>> = if n == 2 {
        vec![basis.column(0).into_owned()]
    } else {
        sphere_directions(n - 1, m_dir.max(2))
            .into_iter()
            .map(|w| &basis * DVector::from_vec(w))
            .collect()
    };
    let x0 = &seg.anchor;
    let tau = 1e-3;
    let mut worst = f64::NEG_INFINITY;
    let m = seg.samples.len() - 1;
    for s in &seg.samples[1..m] {
        let at = |t: f64| segment_point(cost, x0, &p0, &p1, t, &s.y);
        let ys = [
            at(s.t + tau)?,
            s.y.clone(),
            at(s.t - tau)?,
            at(s.t + 0.5 * tau)?,
            at(s.t - 0.5 * tau)?,
        ];
        let hs: Vec<_> = ys
            .iter()
            .map(|y| {
                cost.compute_derivatives(x0.as_slice(), y.as_slice(), 2)
                    .map(|d| d.hess_xx)
            })
            .collect::<Result<_>>()?;
        for xi in &xis {
            let g: Vec<f64> = hs.iter().map(|hm| (hm * xi).dot(xi)).collect();
            let coarse = (g[0] - 2.0 * g[1] + g[2]) / (tau * tau);
            let fine = (g[3] - 2.0 * g[1] + g[4]) / (0.25 * tau * tau);
            worst = worst.max((4.0 * fine - coarse) / 3.0);
        }
    }
    Ok((worst, delta))
}

/// Endpoints `y₀, y₁` of a c-segment through `y` in the direction `η`:
/// `D_x c(x, y_{0,1}) = z_c ∓ (δ/2) η`, where `z_c` minimizes
/// `ξᵀ c_xx(x, y(x, ·)) ξ` on `z + [−10δ, 10δ] η`. Where the tensor is negative
/// this places the c-segment so that its interior dips below both ends.
pub fn violation_witness<C: Cost + ?Sized>(
    cost: &C,
    x: &Point,
    y: &Point,
    frame: &FramePair,
    delta: f64,
) -> Result<(Point, Point)> {
    let z = cost.grad_x(x.as_slice(), y.as_slice())?;
    let solve = |s: f64| -> Result<Point> { solve_y_from_gradient(cost, x, &(&z + &frame.eta * s), y) };
    let g = |s: f64| -> Result<f64> {
        let yy = solve(s)?;
        let d = cost.compute_derivatives(x.as_slice(), yy.as_slice(), 2)?;
        Ok((&d.hess_xx * &frame.xi).dot(&frame.xi))
    };
    // golden-section search on a window shrunk until the gradient image
    // contains it
    let mut w = 10.0 * delta;
    while w > delta
        && [-w, w]
            .iter()
            .any(|s| !cost.gradient_reachable(x.as_slice(), (&z + &frame.eta * (s * 1.5)).as_slice()))
    {
        w *= 0.5;
    }
    let (mut a, mut b) = (-w, w);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    for _ in 0..60 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d)?;
        }
    }
    let center = 0.5 * (a + b);
    Ok((solve(center - 0.5 * delta)?, solve(center + 0.5 * delta)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetProbe {
    pub ts: Vec<f64>,
    /// Tangential coordinates `x'` of the probe points.
    pub xprime: Vec<Vec<f64>>,
    /// `graphs[k][s] = η_{t_k}(x'_s)`
    pub graphs: Vec<Vec<f64>>,
    /// Largest `|h_t − h_0|` at the reconstructed graph points.
    pub max_residual: f64,
}

impl LevelSetProbe {
    /// Rows `(t, x'…, η_t)`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (k, t) in self.ts.iter().enumerate() {
            for (s, xp) in self.xprime.iter().enumerate() {
                let mut row = vec![*t];
                row.extend(xp);
                row.push(self.graphs[k][s]);
                out.push(row);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub probe: LevelSetProbe,
    /// `min (η_{t_{k+1}} − η_{t_k})(x')` over consecutive `t` and `x' ≠ 0`.
    pub min_gap: f64,
    /// The same minimum restricted to `|x'| = probe_radius`.
    pub min_gap_at_rim: f64,
    /// `min_gap ≥ −tol`
    pub ordering_holds: bool,
    pub tolerance: f64,
}

pub const LEVEL_SET_TOL: f64 = 1e-8;

/// Reconstruct the graphs `x_n = η_t(x')` of `N_t = {h_t = h_0}` near `x₀`
/// in the frame whose last axis is `p₁ − p₀`, for `t = k/m_t`, `k = 1..m_t`,
/// and measure their ordering.
pub fn level_set_monotonicity<C: Cost + ?Sized>(
    cost: &C,
    x0: &Point,
    y0: &Point,
    y1: &Point,
    m_t: usize,
    probe_radius: f64,
) -> Result<LevelSetReport> {
    let ts: Vec<f64> = (1..=m_t.max(1)).map(|k| k as f64 / m_t.max(1) as f64).collect();
    level_set_probe(cost, x0, y0, y1, &ts, probe_radius, 8)
}

/// Level-set reconstruction at given `t` values with `k_r` radial steps.
pub fn level_set_probe<C: Cost + ?Sized>(
    cost: &C,
    x0: &Point,
    y0: &Point,
    y1: &Point,
    ts: &[f64],
    probe_radius: f64,
    k_r: usize,
) -> Result<LevelSetReport> {
    let n = cost.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidInput("level sets are reconstructed for n = 2, 3".into()));
    }
    if !(probe_radius > 0.0) || ts.is_empty() || ts.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::InvalidInput("need probe_radius > 0 and t in (0, 1]".into()));
    }
    let p0 = cost.grad_x(x0.as_slice(), y0.as_slice())?;
    let p1 = cost.grad_x(x0.as_slice(), y1.as_slice())?;
    let frame = LocalFrame::new(cost, x0, y0, &(&p1 - &p0))?;
    let mut yts = Vec::with_capacity(ts.len());
    let mut prev = y0.clone();
    for &t in ts {
        let y = if t == 1.0 {
            y1.clone()
        } else {
            segment_point(cost, x0, &p0, &p1, t, &prev)?
        };
        prev = y.clone();
        yts.push(y);
    }

    // Probe points x' on the disc of radius probe_radius, including the rim.
    let mut xprime: Vec<Vec<f64>> = Vec::new();
    if n == 2 {
        for k in -(k_r as i64)..=(k_r as i64) {
            xprime.push(vec![probe_radius * k as f64 / k_r as f64]);
        }
    } else {
        xprime.push(vec![0.0, 0.0]);
        for j in 1..=k_r {
            let r = probe_radius * j as f64 / k_r as f64;
            for d in sphere_directions(2, 8) {
                xprime.push(vec![r * d[0], r * d[1]]);
            }
        }
    }

    let x0s = x0.as_slice();
    let f = |xp: &[f64], s: f64, yt: &Point| -> Result<f64> {
        let mut xh = xp.to_vec();
        xh.push(s);
        let x = frame.x_from_local(&DVector::from_vec(xh));
        if !cost.is_valid(x.as_slice(), yt.as_slice()) || !cost.is_valid(x.as_slice(), y0.as_slice()) {
            return Err(Error::OutOfValidityDomain(format!("probe point {:?}", x.as_slice())));
        }
        Ok(h(cost, x.as_slice(), x0s, yt.as_slice()) - h(cost, x.as_slice(), x0s, y0.as_slice()))
    };

    let half = probe_radius;
    let results: Vec<Result<(Vec<f64>, f64)>> = yts
        .par_iter()
        .map(|yt| {
            let mut row = Vec::with_capacity(xprime.len());
            let mut res = 0.0f64;
            for xp in &xprime {
                let (mut a, mut b) = (-half, half);
                let (mut fa, fb) = (f(xp, a, yt)?, f(xp, b, yt)?);
                if fa == 0.0 {
                    row.push(a);
                    continue;
                }
                if fa.signum() == fb.signum() {
                    return Err(Error::RootBracketFailure(xp.clone()));
                }
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    let fm = f(xp, m, yt)?;
                    if fm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if fm.signum() == fa.signum() {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                let root = 0.5 * (a + b);
                res = res.max(f(xp, root, yt)?.abs());
                row.push(root);
            }
            Ok((row, res))
        })
        .collect();
    let mut graphs = Vec::with_capacity(ts.len());
    let mut max_residual = 0.0f64;
    for r in results {
        let (row, res) = r?;
        graphs.push(row);
        max_residual = max_residual.max(res);
    }

    let norm = |xp: &[f64]| xp.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut min_gap = f64::INFINITY;
    let mut min_gap_at_rim = f64::INFINITY;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    for w in order.windows(2) {
        for (s, xp) in xprime.iter().enumerate() {
            let r = norm(xp);
            if r == 0.0 {
                continue;
            }
            let gap = graphs[w[1]][s] - graphs[w[0]][s];
            min_gap = min_gap.min(gap);
            if (r - probe_radius).abs() <= 1e-12 * probe_radius {
                min_gap_at_rim = min_gap_at_rim.min(gap);
            }
        }
    }
    if ts.len() < 2 {
        min_gap = 0.0;
        min_gap_at_rim = 0.0;
    }
    Ok(LevelSetReport {
        probe: LevelSetProbe {
            ts: ts.to_vec(),
            xprime,
            graphs,
            max_residual,
        },
        min_gap,
        min_gap_at_rim,
        ordering_holds: min_gap >= -LEVEL_SET_TOL,
        tolerance: LEVEL_SET_TOL,
    })
}
