//! Superdifferentials of grid potentials, c-superdifferentials, c-normal
//! maps, contact sets of the dual potential, and the two-resolution
//! verdicts on C¹ regularity of `u` and strict c-concavity of `v`.
//!
//! Contact sets are probed at two kinds of c-supports of `v`: the ones
//! through source nodes, `h*(y) = c(x_i, y) − u_i`, and the ones through
//! the point on the segment between adjacent nodes where the argmin of
//! `c(x, ·) − v` changes. The latter are where a flat piece of `v` shows
//! up on discrete data.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{check_pair, solve_y_from_gradient, Cost, Point};
use crate::error::{Error, Result};
use crate::transport::{GridFunction, MapValue};

/// Slack allowed in the global support test of the c-normal map.
pub const NORMAL_MAP_TOL: f64 = 1e-9;

/// Contact tolerance: twice the dual feasibility tolerance.
pub const CONTACT_TOL: f64 = 2e-9;

/// Required shrink factor of the gradient-jump modulus per halving of `h`.
pub const CONTRACTION_MIN: f64 = 1.5;

/// Contact diameters up to this many target spacings count as strict.
pub const DIAMETER_FACTOR: f64 = 3.0;

/// Jump moduli below this fraction of the gradient scale are roundoff.
pub const JUMP_FLOOR_REL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperdifferentialSample {
    pub node: usize,
    pub base: Vec<f64>,
    /// Per-axis range of the one-sided difference quotients.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Vertices of the gradient box spanned by the adjacent cells.
    pub vertices: Vec<Vec<f64>>,
    pub dimension: usize,
    pub diameter: f64,
    pub singleton: bool,
    pub tolerance: f64,
    /// `max_a (D⁺_a u − D⁻_a u) / h_a`, the largest axial second difference.
    pub max_second_difference: f64,
}

/// `2 h · L` with `L` the largest central-difference gradient of `u`.
pub fn jump_tolerance(u: &GridFunction) -> f64 {
    let l = (0..u.grid.len())
        .into_par_iter()
        .filter(|&k| u.active[k])
        .filter_map(|k| u.gradient(k).ok().map(|g| g.norm()))
        .reduce(|| 0.0, f64::max);
    2.0 * u.grid.max_spacing() * l
}

pub fn superdifferential(u: &GridFunction, node: usize) -> Result<SuperdifferentialSample> {
    superdifferential_with(u, node, jump_tolerance(u))
}

/// The box of one-sided difference gradients from the `2^n` cells around
/// `node`.
pub fn superdifferential_with(u: &GridFunction, node: usize, tolerance: f64) -> Result<SuperdifferentialSample> {
    if node >= u.grid.len() || !u.is_interior(node) {
        return Err(Error::BoundaryNode(node));
    }
    let n = u.grid.dim();
    let u0 = u.values[node];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut second = f64::NEG_INFINITY;
    for a in 0..n {
        let h = u.grid.spacing[a];
        let mut e = vec![0isize; n];
        e[a] = 1;
        let up = u.values[u.grid.offset(node, &e).unwrap()];
        e[a] = -1;
        let dn = u.values[u.grid.offset(node, &e).unwrap()];
        let dp = (up - u0) / h;
        let dm = (u0 - dn) / h;
        lower[a] = dp.min(dm);
        upper[a] = dp.max(dm);
        second = second.max((dp - dm) / h);
    }
    let width = DVector::from_iterator(n, (0..n).map(|a| upper[a] - lower[a]));
    let diameter = width.norm();
    let singleton = diameter <= tolerance;
    let vertices = if singleton {
        vec![(0..n).map(|a| 0.5 * (lower[a] + upper[a])).collect()]
    } else {
        let mut vs: Vec<Vec<f64>> = vec![Vec::new()];
        for a in 0..n {
            let choices: Vec<f64> = if lower[a] == upper[a] {
                vec![lower[a]]
            } else {
                vec![lower[a], upper[a]]
            };
            vs = vs
                .into_iter()
                .flat_map(|v| {
                    choices.iter().map(move |&c| {
                        let mut w = v.clone();
                        w.push(c);
                        w
                    })
                })
                .collect();
        }
        vs
    };
    let dimension = width.iter().filter(|&&w| w > tolerance).count();
    Ok(SuperdifferentialSample {
        node,
        base: u.grid.point(node).as_slice().to_vec(),
        lower,
        upper,
        vertices,
        dimension,
        diameter,
        singleton,
        tolerance,
        max_second_difference: second,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexImage {
    pub gradient: Vec<f64>,
    pub y: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSuperdifferential {
    pub base: Vec<f64>,
    pub images: Vec<VertexImage>,
}

impl CSuperdifferential {
    pub fn points(&self) -> Vec<Point> {
        self.images
            .iter()
            .filter_map(|v| v.y.as_ref().map(|y| Point::from_column_slice(y)))
            .collect()
    }
}

/// Images of the superdifferential's vertices under `p ↦ y` with
/// `D_x c(x₀, y) = p`. Failed solves are kept, per vertex.
pub fn c_superdifferential<C: Cost + ?Sized>(
    cost: &C,
    sample: &SuperdifferentialSample,
    y_init: &Point,
) -> CSuperdifferential {
    let x0 = Point::from_column_slice(&sample.base);
    let images = sample
        .vertices
        .iter()
        .map(|p| {
            let z = DVector::from_column_slice(p);
            match solve_y_from_gradient(cost, &x0, &z, y_init) {
                Ok(y) => VertexImage {
                    gradient: p.clone(),
                    y: Some(y.as_slice().to_vec()),
                    error: None,
                },
                Err(e) => VertexImage {
                    gradient: p.clone(),
                    y: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    CSuperdifferential {
        base: sample.base.clone(),
        images,
    }
}

/// Source indices sorted by distance to `xs[x0]`.
fn by_distance(xs: &[Point], x0: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| {
        (&xs[a] - &xs[x0])
            .norm_squared()
            .total_cmp(&(&xs[b] - &xs[x0]).norm_squared())
            .then(a.cmp(&b))
    });
    order
}

/// Largest `u(x) − [c(x, y) − c(x₀, y) + u(x₀)]` over the sources, stopping
/// early once it exceeds `stop`.
fn support_gap<C: Cost + ?Sized>(
    cost: &C,
    u: &[f64],
    xs: &[Point],
    order: &[usize],
    x0: usize,
    y: &[f64],
    stop: f64,
) -> f64 {
    let base = cost.eval(xs[x0].as_slice(), y) - u[x0];
    let mut worst = f64::NEG_INFINITY;
    for &k in order {
        let g = u[k] - (cost.eval(xs[k].as_slice(), y) - base);
        if g > worst {
            worst = g;
            if worst > stop {
                break;
            }
        }
    }
    worst
}

/// Targets `y` whose cost profile `c(·, y) − c(x₀, y) + u(x₀)` lies above
/// `u` on every source point, up to [`NORMAL_MAP_TOL`].
pub fn c_normal_map<C: Cost + ?Sized>(
    cost: &C,
    u: &[f64],
    xs: &[Point],
    x0: usize,
    ys: &[Point],
) -> Result<Vec<usize>> {
    if u.len() != xs.len() || x0 >= xs.len() {
        return Err(Error::InvalidInput("potential and source points disagree".into()));
    }
    for y in ys {
        for x in xs {
            check_pair(cost, x.as_slice(), y.as_slice())?;
        }
    }
    let order = by_distance(xs, x0);
    Ok((0..ys.len())
        .into_par_iter()
        .filter(|&j| support_gap(cost, u, xs, &order, x0, ys[j].as_slice(), NORMAL_MAP_TOL) <= NORMAL_MAP_TOL)
        .collect())
}

/// A c-support of the dual potential, `h*(y) = c(x₀, y) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSupport {
    pub x0: Vec<f64>,
    pub offset: f64,
}

impl DualSupport {
    pub fn eval<C: Cost + ?Sized>(&self, cost: &C, y: &[f64]) -> f64 {
        cost.eval(&self.x0, y) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSet {
    pub support: DualSupport,
    pub members: Vec<usize>,
    /// Member pairs within `radius`.
    pub edges: Vec<(usize, usize)>,
    pub n_components: usize,
    pub diameter: f64,
    pub tolerance: f64,
    pub radius: f64,
}

/// Largest nearest-neighbour distance among `pts`.
pub fn max_nn_spacing(pts: &[Point]) -> f64 {
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| (&pts[i] - &pts[j]).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .reduce(|| 0.0, f64::max)
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Targets where `h*` meets `v` within `tol`, and their components in the
/// `radius`-neighbourhood graph.
pub fn contact_set<C: Cost + ?Sized>(
    cost: &C,
    v: &[f64],
    ys: &[Point],
    support: &DualSupport,
    radius: f64,
    tol: f64,
) -> Result<ContactSet> {
    if v.len() != ys.len() {
        return Err(Error::InvalidInput("values and targets disagree".into()));
    }
    let mut members = Vec::new();
    let mut lowest = f64::INFINITY;
    for (j, y) in ys.iter().enumerate() {
        check_pair(cost, &support.x0, y.as_slice())?;
        let gap = support.eval(cost, y.as_slice()) - v[j];
        lowest = lowest.min(gap);
        if gap <= tol {
            members.push(j);
        }
    }
    if lowest < -NORMAL_MAP_TOL {
        return Err(Error::NotASupport(-lowest));
    }
    Ok(contact_from_members(ys, support.clone(), members, radius, tol))
}

fn contact_from_members(ys: &[Point], support: DualSupport, members: Vec<usize>, radius: f64, tol: f64) -> ContactSet {
    let k = members.len();
    let mut parent: Vec<usize> = (0..k).collect();
    let mut edges = Vec::new();
    let mut diameter = 0.0f64;
    for a in 0..k {
        for b in (a + 1)..k {
            let d = (&ys[members[a]] - &ys[members[b]]).norm();
            diameter = diameter.max(d);
            if d <= radius {
                edges.push((members[a], members[b]));
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let n_components = (0..k).filter(|&a| find(&mut parent, a) == a).count();
    ContactSet {
        support,
        members,
        edges,
        n_components,
        diameter,
        tolerance: tol,
        radius,
    }
}

/// Everything the diagnostics need from one solved resolution. The active
/// nodes of `u` are the source points, in order.
#[derive(Debug, Clone)]
pub struct SolvedGrid {
    pub label: String,
    pub u: GridFunction,
    pub source_points: Vec<Point>,
    pub target_points: Vec<Point>,
    pub v: Vec<f64>,
    pub target_spacing: f64,
    /// Argmin sets of `c(x_i, ·) − v`, one per source.
    pub map: Vec<MapValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityOptions {
    pub contact_tol: f64,
    pub contraction_min: f64,
    pub diameter_factor: f64,
    /// Nodes used for the inclusion and local-versus-global tests.
    pub tested_nodes: usize,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self {
            contact_tol: CONTACT_TOL,
            contraction_min: CONTRACTION_MIN,
            diameter_factor: DIAMETER_FACTOR,
            tested_nodes: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSummary {
    pub x0: Vec<f64>,
    pub members: Vec<usize>,
    pub n_components: usize,
    pub diameter: f64,
    pub diameter_in_spacings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostic {
    pub node: usize,
    pub coords: Vec<f64>,
    pub jump: Option<f64>,
    pub multivalued: bool,
    pub contact_diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionDiagnostics {
    pub spacing: f64,
    pub target_spacing: f64,
    pub n_sources: usize,
    pub n_interior: usize,
    /// Largest superdifferential diameter over interior nodes.
    pub c1_modulus: f64,
    pub c1_argmax: Vec<f64>,
    pub mean_jump: f64,
    pub jump_tolerance: f64,
    pub gradient_scale: f64,
    pub multivalued_fraction: f64,
    pub n_supports: usize,
    pub contact_radius: f64,
    pub max_contact_diameter: f64,
    pub max_contact_diameter_in_spacings: f64,
    pub max_components: usize,
    pub n_disconnected: usize,
    pub widest_contact: Option<ContactSummary>,
    pub n_tested_nodes: usize,
    pub inclusion_failures: usize,
    pub local_global_violations: usize,
    /// Margin by which a global support gap must exceed the stencil gap.
    pub local_global_tolerance: f64,
    #[serde(skip)]
    pub nodes: Vec<NodeDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub coarse: ResolutionDiagnostics,
    pub fine: ResolutionDiagnostics,
    /// `c1_modulus(coarse) / c1_modulus(fine)`.
    pub contraction: f64,
    pub below_noise_floor: bool,
    pub u_c1: bool,
    pub v_strict: bool,
    /// Whether the two verdicts agree, as expected under the hypotheses.
    pub verdicts_agree: bool,
    pub options: RegularityOptions,
}

/// Point on `[xa, xb]` where `ta` stops being a minimizer of
/// `c(x, ·) − v` over `cands`, with `u` there.
fn cell_boundary<C: Cost + ?Sized>(
    cost: &C,
    v: &[f64],
    ys: &[Point],
    xa: &Point,
    xb: &Point,
    ta: usize,
    cands: &[usize],
) -> Option<Point> {
    let at = |s: f64| xa + (xb - xa) * s;
    let still = |s: f64| {
        let x = at(s);
        let own = cost.eval(x.as_slice(), ys[ta].as_slice()) - v[ta];
        let best = cands
            .iter()
            .map(|&j| cost.eval(x.as_slice(), ys[j].as_slice()) - v[j])
            .fold(f64::INFINITY, f64::min);
        own - best <= 1e-13 * own.abs().max(1.0)
    };
    if still(1.0) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if still(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(at(lo))
}

fn summary(c: &ContactSet, spacing: f64) -> ContactSummary {
    ContactSummary {
        x0: c.support.x0.clone(),
        members: c.members.clone(),
        n_components: c.n_components,
        diameter: c.diameter,
        diameter_in_spacings: c.diameter / spacing,
    }
}

/// Contact sets, jumps and node tests for one resolution.
pub fn diagnose_resolution<C: Cost + ?Sized>(
    cost: &C,
    s: &SolvedGrid,
    opts: &RegularityOptions,
) -> Result<ResolutionDiagnostics> {
    let u = &s.u;
    let nodes = u.active_nodes();
    let (xs, ys) = (&s.source_points, &s.target_points);
    if nodes.len() != xs.len() || s.map.len() != xs.len() || s.v.len() != ys.len() {
        return Err(Error::InvalidInput("solved grid fields disagree in size".into()));
    }
    let uvals: Vec<f64> = nodes.iter().map(|&k| u.values[k]).collect();
    let mut slot = vec![usize::MAX; u.grid.len()];
    for (i, &k) in nodes.iter().enumerate() {
        slot[k] = i;
    }
    let interior: Vec<bool> = nodes.iter().map(|&k| u.is_interior(k)).collect();
    let n_interior = interior.iter().filter(|&&b| b).count();
    if n_interior == 0 {
        return Err(Error::NoQualifiedNodes);
    }

    // Gradient jumps.
    let tol = jump_tolerance(u);
    let gradient_scale = tol / (2.0 * u.grid.max_spacing());
    let samples: Vec<Option<SuperdifferentialSample>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            if interior[i] {
                superdifferential_with(u, nodes[i], tol).ok()
            } else {
                None
            }
        })
        .collect();
    let (mut c1, mut c1_at, mut jump_sum, mut second_max) = (0.0f64, 0usize, 0.0, 0.0f64);
    for (i, smp) in samples.iter().enumerate() {
        if let Some(smp) = smp {
            jump_sum += smp.diameter;
            second_max = second_max.max(smp.max_second_difference.abs());
            if smp.diameter > c1 {
                c1 = smp.diameter;
                c1_at = i;
            }
        }
    }

    // Contact sets at node supports and at cell-boundary supports.
    let radius = 2.0 * max_nn_spacing(ys);
    let tol_c = opts.contact_tol;
    let n = u.grid.dim();
    let per_node: Vec<Vec<ContactSet>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<ContactSet>> {
            if !interior[i] {
                return Ok(Vec::new());
            }
            let x = &xs[i];
            let vals: Vec<f64> = ys
                .iter()
                .zip(&s.v)
                .map(|(y, vj)| cost.eval(x.as_slice(), y.as_slice()) - vj)
                .collect();
            let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let own: Vec<usize> = (0..ys.len()).filter(|&j| vals[j] - best <= tol_c).collect();
            let mut out = vec![contact_from_members(
                ys,
                DualSupport {
                    x0: x.as_slice().to_vec(),
                    offset: -best,
                },
                own.clone(),
                radius,
                tol_c,
            )];
            let ta = own[0];
            let g = ys
                .iter()
                .map(|y| cost.grad_x(x.as_slice(), y.as_slice()).map(|d| d.norm()))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            for a in 0..n {
                let mut e = vec![0isize; n];
                e[a] = 1;
                let Some(nb) = u.grid.offset(nodes[i], &e) else {
                    continue;
                };
                let b = slot[nb];
                if b == usize::MAX || !interior[b] || s.map[b].targets().contains(&ta) {
                    continue;
                }
                let reach = 3.0 * g * (&xs[b] - x).norm() + tol_c;
                let cands: Vec<usize> = (0..ys.len()).filter(|&j| vals[j] - best <= reach).collect();
                let Some(xstar) = cell_boundary(cost, &s.v, ys, x, &xs[b], ta, &cands) else {
                    continue;
                };
                let ustar = ys
                    .iter()
                    .zip(&s.v)
                    .map(|(y, vj)| cost.eval(xstar.as_slice(), y.as_slice()) - vj)
                    .fold(f64::INFINITY, f64::min);
                let sup = DualSupport {
                    x0: xstar.as_slice().to_vec(),
                    offset: -ustar,
                };
                out.push(contact_set(cost, &s.v, ys, &sup, radius, tol_c)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let ht = s.target_spacing;
    let mut n_supports = 0;
    let mut widest: Option<&ContactSet> = None;
    let (mut max_comp, mut n_disc) = (0usize, 0usize);
    for c in per_node.iter().flatten() {
        n_supports += 1;
        max_comp = max_comp.max(c.n_components);
        if c.n_components > 1 {
            n_disc += 1;
        }
        if widest.is_none_or(|w| c.diameter > w.diameter) {
            widest = Some(c);
        }
    }

    // Inclusion and local-versus-global tests on a deterministic node subset.
    let mut tested: Vec<usize> = (0..nodes.len()).filter(|&i| interior[i]).collect();
    tested.sort_by(|&a, &b| {
        let da = samples[a].as_ref().map_or(0.0, |s| s.diameter);
        let db = samples[b].as_ref().map_or(0.0, |s| s.diameter);
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let half = opts.tested_nodes / 2;
    let mut pick: Vec<usize> = tested.iter().take(half).copied().collect();
    let stride = (tested.len() / (opts.tested_nodes - half).max(1)).max(1);
    let mut strided: Vec<usize> = tested.clone();
    strided.sort_unstable();
    for &i in strided.iter().step_by(stride) {
        if pick.len() >= opts.tested_nodes {
            break;
        }
        if !pick.contains(&i) {
            pick.push(i);
        }
    }
    pick.sort_unstable();
    let h = u.grid.max_spacing();
    let lg_tol = NORMAL_MAP_TOL + second_max * h * h;
    let checks: Vec<(bool, bool)> = pick
        .par_iter()
        .map(|&i| -> Result<(bool, bool)> {
            let smp = samples[i].as_ref().unwrap();
            let tu = c_normal_map(cost, &uvals, xs, i, ys)?;
            let x0 = xs[i].as_slice();
            // D_x c(x₀, y) must lie in the gradient box, widened by the
            // one-sided difference error of c(·, y) and the support slack.
            let mut inclusion_ok = true;
            for &j in &tu {
                let y = ys[j].as_slice();
                let p = cost.grad_x(x0, y)?;
                let c0 = cost.eval(x0, y);
                for a in 0..n {
                    let ha = u.grid.spacing[a];
                    let mut xp = x0.to_vec();
                    xp[a] += ha;
                    let mut xm = x0.to_vec();
                    xm[a] -= ha;
                    let dp = (cost.eval(&xp, y) - c0) / ha;
                    let dm = (c0 - cost.eval(&xm, y)) / ha;
                    let slack = (dp - p[a]).abs().max((dm - p[a]).abs()) + 2.0 * NORMAL_MAP_TOL / ha + 1e-12;
                    if p[a] < smp.lower[a] - slack || p[a] > smp.upper[a] + slack {
                        inclusion_ok = false;
                    }
                }
            }
            let t = s.map[i].targets()[0];
            let csd = c_superdifferential(cost, smp, &ys[t]);
            let order = by_distance(xs, i);
            // A vertex image counts when its support fails farther out by
            // more than it already fails on the stencil.
            let stencil: Vec<usize> = std::iter::once(nodes[i])
                .chain(u.grid.neighborhood(nodes[i]))
                .map(|k| slot[k])
                .collect();
            let violation = csd.points().iter().any(|y| {
                if !(y.iter().all(|v| v.is_finite()) && xs.iter().all(|x| cost.is_valid(x.as_slice(), y.as_slice()))) {
                    return false;
                }
                let local = support_gap(cost, &uvals, xs, &stencil, i, y.as_slice(), f64::INFINITY);
                support_gap(cost, &uvals, xs, &order, i, y.as_slice(), local + lg_tol) > local + lg_tol
            });
            Ok((inclusion_ok, violation))
        })
        .collect::<Result<_>>()?;

    let node_rows: Vec<NodeDiagnostic> = (0..nodes.len())
        .map(|i| NodeDiagnostic {
            node: nodes[i],
            coords: xs[i].as_slice().to_vec(),
            jump: samples[i].as_ref().map(|s| s.diameter),
            multivalued: s.map[i].single().is_none(),
            contact_diameter: per_node[i].iter().map(|c| c.diameter).reduce(f64::max),
        })
        .collect();
    let max_d = widest.map_or(0.0, |w| w.diameter);
    Ok(ResolutionDiagnostics {
        spacing: h,
        target_spacing: ht,
        n_sources: nodes.len(),
        n_interior,
        c1_modulus: c1,
        c1_argmax: xs[c1_at].as_slice().to_vec(),
        mean_jump: jump_sum / n_interior as f64,
        jump_tolerance: tol,
        gradient_scale,
        multivalued_fraction: s.map.iter().filter(|m| m.single().is_none()).count() as f64 / nodes.len() as f64,
        n_supports,
        contact_radius: radius,
        max_contact_diameter: max_d,
        max_contact_diameter_in_spacings: max_d / ht,
        max_components: max_comp,
        n_disconnected: n_disc,
        widest_contact: widest.map(|w| summary(w, ht)),
        n_tested_nodes: pick.len(),
        inclusion_failures: checks.iter().filter(|c| !c.0).count(),
        local_global_violations: checks.iter().filter(|c| c.1).count(),
        local_global_tolerance: lg_tol,
        nodes: node_rows,
    })
}

/// Verdicts from a scenario solved at spacings `h` and `h/2`.
pub fn regularity_report<C: Cost + ?Sized>(
    cost: &C,
    coarse: &SolvedGrid,
    fine: &SolvedGrid,
    opts: &RegularityOptions,
) -> Result<RegularityReport> {
    if coarse.label != fine.label {
        return Err(Error::MismatchedScenarios(format!(
            "'{}' vs '{}'",
            coarse.label, fine.label
        )));
    }
    if coarse.u.grid.dim() != fine.u.grid.dim() || !(fine.u.grid.max_spacing() < coarse.u.grid.max_spacing()) {
        return Err(Error::MismatchedScenarios(
            "the fine grid must refine the coarse one".into(),
        ));
    }
    let dc = diagnose_resolution(cost, coarse, opts)?;
    let df = diagnose_resolution(cost, fine, opts)?;
    let contraction = dc.c1_modulus / df.c1_modulus;
    let floor = JUMP_FLOOR_REL * dc.gradient_scale.max(df.gradient_scale).max(f64::MIN_POSITIVE);
    let below = dc.c1_modulus <= floor && df.c1_modulus <= floor;
    let u_c1 = below || contraction >= opts.contraction_min;
    let v_strict = [&dc, &df]
        .iter()
        .all(|d| d.max_contact_diameter <= opts.diameter_factor * d.target_spacing);
    Ok(RegularityReport {
        coarse: dc,
        fine: df,
        contraction,
        below_noise_floor: below,
        u_c1,
        v_strict,
        verdicts_agree: u_c1 == v_strict,
        options: *opts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostSpec, RadialCost};
    use crate::transport::RegularGrid;
    use nalgebra::dvector;

    fn grid_fn(k: usize, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        let g = RegularGrid::cell_centered(&[-1.0, -1.0], &[1.0, 1.0], &[k, k]).unwrap();
        let vals = g.points().iter().map(|p| f(p[0], p[1])).collect();
        GridFunction::new(g, vals).unwrap()
    }

    #[test]
    fn affine_potential_has_its_slope() {
        let u = grid_fn(8, |x, y| 3.0 * x - 2.0 * y + 1.0);
        let s = superdifferential(&u, u.grid.flat_index(&[3, 4])).unwrap();
        assert!(s.singleton);
        assert_eq!(s.vertices, vec![vec![3.0, -2.0]]);
        assert!(matches!(superdifferential(&u, 0), Err(Error::BoundaryNode(0))));
    }

    #[test]
    fn concave_kink_spans_both_slopes() {
        // odd count puts a node line on x = 0
        let u = grid_fn(9, |x, _| -x.abs());
        let s = superdifferential(&u, u.grid.flat_index(&[4, 4])).unwrap();
        assert!(!s.singleton);
        assert_eq!(s.dimension, 1);
        assert!((s.lower[0] + 1.0).abs() < 1e-12 && (s.upper[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn images_of_a_gradient_segment() {
        let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
        let u = grid_fn(9, |x, _| -x.abs());
        let s = superdifferential(&u, u.grid.flat_index(&[4, 4])).unwrap();
        let img = c_superdifferential(&c, &s, &dvector![0.0, 0.0]);
        let pts = img.points();
        assert_eq!(pts.len(), 2);
        // D_x ½|x − y|² = x − y, so y = x₀ − p
        for (p, y) in s.vertices.iter().zip(&pts) {
            assert!((y[0] + p[0]).abs() < 1e-9 && (y[1] + p[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn flat_and_strict_contact_sets() {
        let c = RadialCost::new(1, CostSpec::Quadratic).unwrap();
        let ys: Vec<Point> = (-5..=5).map(|k| dvector![k as f64 * 0.1]).collect();
        // v = c(0, y) − y² is strictly below the support c(0, ·) away from 0
        let strict: Vec<f64> = ys.iter().map(|y| 0.5 * y[0] * y[0] - y[0] * y[0]).collect();
        let sup = DualSupport {
            x0: vec![0.0],
            offset: 0.0,
        };
        let cs = contact_set(&c, &strict, &ys, &sup, 0.2, CONTACT_TOL).unwrap();
        assert_eq!(cs.members, vec![5]);
        // flat on three samples
        let flat: Vec<f64> = ys
            .iter()
            .enumerate()
            .map(|(j, y)| {
                if (4..=6).contains(&j) {
                    0.5 * y[0] * y[0]
                } else {
                    0.5 * y[0] * y[0] - 0.1
                }
            })
            .collect();
        let cs = contact_set(&c, &flat, &ys, &sup, 0.2, CONTACT_TOL).unwrap();
        assert_eq!(cs.members, vec![4, 5, 6]);
        assert_eq!(cs.n_components, 1);
        let above: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        assert!(matches!(
            contact_set(&c, &above, &ys, &sup, 0.2, CONTACT_TOL),
            Err(Error::NotASupport(_))
        ));
    }
}
