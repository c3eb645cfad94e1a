//! The cross-curvature (MTW) tensor in its derivative form and in its
//! `z`-parametrized form, and classification of a cost over a domain pair.

use std::cmp::Ordering;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{
    check_pair, derivatives, invert_mixed, solve_y_from_gradient_with, Cost, NewtonOptions, Point, Swapped,
};
use crate::error::{Error, Result};
use crate::geometry::{sphere_directions, Domain};

/// Default classification band half-width.
pub const DEFAULT_TOL_POS: f64 = 1e-8;

/// Default relative step of the `z`-form second difference.
pub const DEFAULT_Z_STEP: f64 = 1e-3;

/// Orthogonal unit vectors `(ξ, η)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    pub xi: DVector<f64>,
    pub eta: DVector<f64>,
}

impl FramePair {
    pub fn new(xi: DVector<f64>, eta: DVector<f64>) -> Result<Self> {
        if xi.len() != eta.len()
            || (xi.norm() - 1.0).abs() > 1e-12
            || (eta.norm() - 1.0).abs() > 1e-12
            || xi.dot(&eta).abs() > 1e-12
        {
            return Err(Error::InvalidInput(format!(
                "frame must be orthonormal: xi={:?}, eta={:?}",
                xi.as_slice(),
                eta.as_slice()
            )));
        }
        Ok(Self { xi, eta })
    }

    /// Gram–Schmidt: normalize `xi`, then project it out of `eta`.
    pub fn orthonormalize(xi: DVector<f64>, eta: DVector<f64>) -> Result<Self> {
        let xn = xi.norm();
        if !(xn > 0.0) {
            return Err(Error::InvalidInput("xi must be nonzero".into()));
        }
        let xi = xi / xn;
        let eta = &eta - &xi * xi.dot(&eta);
        let en = eta.norm();
        if !(en > 1e-12) {
            return Err(Error::InvalidInput("eta is parallel to xi".into()));
        }
        Self::new(xi, eta / en)
    }

    /// 2-D frame `ξ = (cos θ, sin θ)`, `η = (−sin θ, cos θ)`.
    pub fn planar(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            xi: DVector::from_vec(vec![c, s]),
            eta: DVector::from_vec(vec![-s, c]),
        }
    }
}

/// Value of the tensor contraction together with its two parts:
/// `value = cubic − quartic`, where `cubic` carries the product of
/// third derivatives and `quartic` the fourth derivative.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MtwTerms {
    pub value: f64,
    pub cubic: f64,
    pub quartic: f64,
}

impl MtwTerms {
    /// Magnitude scale of the contraction, for relative comparisons.
    pub fn scale(&self) -> f64 {
        self.cubic.abs() + self.quartic.abs()
    }
}

/// `Σ (c^{p,q} c_{ij,p} c_{q,rs} − c_{ij,rs}) c^{r,k} c^{s,l} ξ_i ξ_j η_k η_l`
/// for an orthonormal frame.
pub fn mtw_tensor<C: Cost + ?Sized>(cost: &C, x: &Point, y: &Point, frame: &FramePair) -> Result<f64> {
    Ok(mtw_terms(cost, x, y, &frame.xi, &frame.eta)?.value)
}

/// The same contraction for arbitrary vectors `ξ`, `η`.
pub fn mtw_terms<C: Cost + ?Sized>(
    cost: &C,
    x: &Point,
    y: &Point,
    xi: &DVector<f64>,
    eta: &DVector<f64>,
) -> Result<MtwTerms> {
    let n = cost.dim();
    if xi.len() != n || eta.len() != n {
        return Err(Error::InvalidInput("frame dimension does not match cost".into()));
    }
    let d = derivatives(cost, x, y, 4)?;
    let inv = invert_mixed(&d.hess_xy).map_err(|e| with_pair(e, x, y))?;
    // ζ_r = c^{r,k} η_k
    let zeta = &inv * eta;
    // b_p = c_{ij,p} ξ_i ξ_j, e_q = c_{q,rs} ζ_r ζ_s
    let mut b = DVector::zeros(n);
    let mut e = DVector::zeros(n);
    let mut quartic = 0.0;
    for p in 0..n {
        for i in 0..n {
            for j in 0..n {
                b[p] += d.xxy.get(i, j, p) * xi[i] * xi[j];
                e[p] += d.xyy.get(p, i, j) * zeta[i] * zeta[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let w = xi[i] * xi[j];
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                for s in 0..n {
                    quartic += d.xxyy.get(i, j, r, s) * w * zeta[r] * zeta[s];
                }
            }
        }
    }
    let cubic = b.dot(&(&inv * &e));
    Ok(MtwTerms {
        value: cubic - quartic,
        cubic,
        quartic,
    })
}

fn with_pair(e: Error, x: &Point, y: &Point) -> Error {
    match e {
        Error::A2Violation { det, context } => Error::A2Violation {
            det,
            context: format!("{context} at x={:?}, y={:?}", x.as_slice(), y.as_slice()),
        },
        other => other,
    }
}

/// Result of the `z`-form estimate with its step-halving consistency gap.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZFormEstimate {
    /// Richardson-extrapolated second difference.
    pub value: f64,
    /// `|D(h/2) − D(h)|`, the raw change under step halving.
    pub halving_gap: f64,
    /// Absolute step used in `z`.
    pub step: f64,
}

/// `∂²_{ηη} [ξᵀ c_xx(x, y(x, z)) ξ]` at `z = D_x c(x, y)`, which equals minus
/// the tensor value. `h` is relative: the step is `h · max(|z|, 1)`.
pub fn mtw_tensor_z_form<C: Cost + ?Sized>(cost: &C, x: &Point, y: &Point, frame: &FramePair, h: f64) -> Result<f64> {
    Ok(mtw_z_form_estimate(cost, x, y, frame, h)?.value)
}

pub fn mtw_z_form_estimate<C: Cost + ?Sized>(
    cost: &C,
    x: &Point,
    y: &Point,
    frame: &FramePair,
    h: f64,
) -> Result<ZFormEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    check_pair(cost, x.as_slice(), y.as_slice())?;
    let z0 = cost.grad_x(x.as_slice(), y.as_slice())?;
    let step = h * z0.norm().max(1.0);
    let offsets = [step, -step, 0.5 * step, -0.5 * step];
    for s in offsets {
        let z = &z0 + &frame.eta * s;
        if !cost.gradient_reachable(x.as_slice(), z.as_slice()) {
            return Err(Error::OutOfValidityDomain(format!(
                "z-stencil node {:?} is outside the gradient image of {} at x={:?}",
                z.as_slice(),
                cost.label(),
                x.as_slice()
            )));
        }
    }
    let g = |yy: &Point| -> Result<f64> {
        let d = cost.compute_derivatives(x.as_slice(), yy.as_slice(), 2)?;
        Ok((&d.hess_xx * &frame.xi).dot(&frame.xi))
    };
    let g0 = g(y)?;
    let mut vals = [0.0; 4];
    for (slot, s) in vals.iter_mut().zip(offsets) {
        let z = &z0 + &frame.eta * s;
        let opts = NewtonOptions {
            tolerance: 1e-13 * z.norm().max(1.0),
            ..NewtonOptions::default()
        };
        let yy = solve_y_from_gradient_with(cost, x, &z, y, opts)?;
        *slot = g(&yy)?;
    }
    let coarse = (vals[0] - 2.0 * g0 + vals[1]) / (step * step);
    let fine = (vals[2] - 2.0 * g0 + vals[3]) / (0.25 * step * step);
    Ok(ZFormEstimate {
        value: (4.0 * fine - coarse) / 3.0,
        halving_gap: (fine - coarse).abs(),
        step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    A3,
    A3w,
    #[serde(rename = "VIOLATED")]
    Violated,
}

impl Classification {
    pub fn from_inf(inf: f64, tol_pos: f64) -> Self {
        if inf >= tol_pos {
            Self::A3
        } else if inf >= -tol_pos {
            Self::A3w
        } else {
            Self::Violated
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::A3 => "A3",
            Self::A3w => "A3w",
            Self::Violated => "VIOLATED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Argmin {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Minimum over frames at one sampled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMinimum {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationSummary {
    pub inf_value: f64,
    pub c0_estimate: f64,
    pub classification: Classification,
    pub argmin: Argmin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtwReport {
    pub cost: String,
    pub inf_value: f64,
    pub argmin: Argmin,
    pub c0_estimate: f64,
    pub classification: Classification,
    /// The infimum before local refinement.
    pub grid_inf_value: f64,
    pub argmin_on_boundary: bool,
    pub n_pairs_evaluated: usize,
    pub n_pairs_skipped: usize,
    pub n_frames: usize,
    pub tol_pos: f64,
    /// The same search with the roles of `x` and `y` exchanged.
    pub swapped: Option<OrientationSummary>,
    pub pair_minima: Vec<PairMinimum>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOptions {
    pub n_pairs: usize,
    pub n_frames: usize,
    pub tol_pos: f64,
    pub refine_iterations: usize,
    pub check_swapped: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            n_pairs: 1000,
            n_frames: 32,
            tol_pos: DEFAULT_TOL_POS,
            refine_iterations: 200,
            check_swapped: true,
        }
    }
}

/// A grid of orthonormal frames in dimension `n ≥ 2`.
///
/// In 2-D the frames are rotations by `θ_k = kπ/m`; in 3-D `ξ` runs over
/// hemisphere directions and `η` over angles in `ξ^⊥`.
pub fn frame_grid(n: usize, n_frames: usize) -> Result<Vec<FramePair>> {
    if n < 2 {
        return Err(Error::InvalidInput(
            "orthogonal frames need dimension at least 2".into(),
        ));
    }
    let m = n_frames.max(1);
    if n == 2 {
        return Ok((0..m)
            .map(|k| FramePair::planar(std::f64::consts::PI * k as f64 / m as f64))
            .collect());
    }
    if n == 3 {
        let n_angles = ((m as f64).sqrt().floor() as usize).clamp(1, 8);
        let n_dirs = m.div_ceil(n_angles);
        let dirs: Vec<Vec<f64>> = sphere_directions(3, 2 * n_dirs)
            .into_iter()
            .filter(|d| d[2] > 0.0)
            .collect();
        let mut out = Vec::new();
        for d in dirs.iter().take(n_dirs) {
            for k in 0..n_angles {
                let alpha = std::f64::consts::PI * k as f64 / n_angles as f64;
                out.push(frame_from_angles_3d(d, alpha));
            }
        }
        out.truncate(m);
        return Ok(out);
    }
    // Higher dimensions: deterministic pseudo-random frames.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if let Ok(f) = FramePair::orthonormalize(a, b) {
            out.push(f);
        }
    }
    Ok(out)
}

fn frame_from_angles_3d(dir: &[f64], alpha: f64) -> FramePair {
    let xi = DVector::from_vec(dir.to_vec()).normalize();
    let helper = if xi[0].abs() < 0.9 {
        DVector::from_vec(vec![1.0, 0.0, 0.0])
    } else {
        DVector::from_vec(vec![0.0, 1.0, 0.0])
    };
    let e1 = (&helper - &xi * xi.dot(&helper)).normalize();
    let e2 = xi.cross(&e1);
    let eta = e1 * alpha.cos() + e2 * alpha.sin();
    FramePair { xi, eta }
}

/// Frame parameters used by the local descent.
fn frame_params(frame: &FramePair) -> Vec<f64> {
    match frame.xi.len() {
        2 => vec![frame.xi[1].atan2(frame.xi[0])],
        3 => {
            let polar = frame.xi[2].clamp(-1.0, 1.0).acos();
            let azimuth = frame.xi[1].atan2(frame.xi[0]);
            let base = frame_from_angles_3d(frame.xi.as_slice(), 0.0);
            let e2 = frame.xi.cross(&base.eta);
            let alpha = frame.eta.dot(&e2).atan2(frame.eta.dot(&base.eta));
            vec![polar, azimuth, alpha]
        }
        _ => vec![],
    }
}

fn frame_from_params(n: usize, p: &[f64], fallback: &FramePair) -> FramePair {
    match n {
        2 => FramePair::planar(p[0]),
        3 => {
            let (sp, cp) = p[0].sin_cos();
            let (sa, ca) = p[1].sin_cos();
            frame_from_angles_3d(&[sp * ca, sp * sa, cp], p[2])
        }
        _ => fallback.clone(),
    }
}

/// Evenly spread pairs from the product of two sample lists.
fn select_pairs(ns: usize, nt: usize, n_pairs: usize) -> Vec<(usize, usize)> {
    let total = ns * nt;
    if n_pairs >= total {
        return (0..ns).flat_map(|i| (0..nt).map(move |j| (i, j))).collect();
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    (0..n_pairs)
        .map(|k| {
            let i = k * ns / n_pairs;
            let j = (((k as f64 * golden).fract()) * nt as f64) as usize;
            (i, j.min(nt - 1))
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Candidate {
    value: f64,
    pair: usize,
    frame: usize,
}

fn better(a: Candidate, b: Candidate) -> Candidate {
    match a.value.partial_cmp(&b.value) {
        Some(Ordering::Less) => a,
        Some(Ordering::Greater) => b,
        _ => {
            if (a.pair, a.frame) <= (b.pair, b.frame) {
                a
            } else {
                b
            }
        }
    }
}

/// Estimate the infimum of the tensor over sampled pairs and frames and
/// classify the cost.
pub fn classify_condition<C: Cost + ?Sized>(
    cost: &C,
    source: &Domain,
    target: &Domain,
    n_pairs: usize,
    n_frames: usize,
) -> Result<MtwReport> {
    classify_condition_with(
        cost,
        source,
        target,
        &ClassifyOptions {
            n_pairs,
            n_frames,
            ..ClassifyOptions::default()
        },
    )
}

pub fn classify_condition_with<C: Cost + ?Sized>(
    cost: &C,
    source: &Domain,
    target: &Domain,
    opts: &ClassifyOptions,
) -> Result<MtwReport> {
    let primary = search(cost, source, target, opts)?;
    let swapped = if opts.check_swapped {
        let sw = Swapped(CostRef(cost));
        let s = search(&sw, target, source, opts)?;
        Some(OrientationSummary {
            inf_value: s.inf_value,
            c0_estimate: s.inf_value.max(0.0),
            classification: Classification::from_inf(s.inf_value, opts.tol_pos),
            argmin: s.argmin,
        })
    } else {
        None
    };
    Ok(MtwReport {
        cost: cost.label(),
        inf_value: primary.inf_value,
        c0_estimate: primary.inf_value.max(0.0),
        classification: Classification::from_inf(primary.inf_value, opts.tol_pos),
        argmin: primary.argmin,
        grid_inf_value: primary.grid_inf,
        argmin_on_boundary: primary.on_boundary,
        n_pairs_evaluated: primary.evaluated,
        n_pairs_skipped: primary.skipped,
        n_frames: primary.n_frames,
        tol_pos: opts.tol_pos,
        swapped,
        pair_minima: primary.pair_minima,
    })
}

/// Borrowed cost usable where an owned `Cost` is needed.
#[derive(Debug)]
pub(crate) struct CostRef<'a, C: ?Sized>(pub(crate) &'a C);

impl<C: Cost + ?Sized> Cost for CostRef<'_, C> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn label(&self) -> String {
        self.0.label()
    }
    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.0.eval(x, y)
    }
    fn is_valid(&self, x: &[f64], y: &[f64]) -> bool {
        self.0.is_valid(x, y)
    }
    fn compute_derivatives(&self, x: &[f64], y: &[f64], order: usize) -> Result<crate::cost::DerivativeBundle> {
        self.0.compute_derivatives(x, y, order)
    }
    fn gradient_reachable(&self, x: &[f64], z: &[f64]) -> bool {
        self.0.gradient_reachable(x, z)
    }
}

struct SearchResult {
    inf_value: f64,
    grid_inf: f64,
    argmin: Argmin,
    on_boundary: bool,
    evaluated: usize,
    skipped: usize,
    n_frames: usize,
    pair_minima: Vec<PairMinimum>,
}

fn search<C: Cost + ?Sized>(
    cost: &C,
    source: &Domain,
    target: &Domain,
    opts: &ClassifyOptions,
) -> Result<SearchResult> {
    let n = cost.dim();
    if source.dim != n || target.dim != n {
        return Err(Error::InvalidInput("domain dimension does not match cost".into()));
    }
    let xs = source.all_samples();
    let ys = target.all_samples();
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::InvalidInput("classification needs nonempty domains".into()));
    }
    let frames = frame_grid(n, opts.n_frames)?;
    let pairs = select_pairs(xs.len(), ys.len(), opts.n_pairs.max(1));

    // Per pair: minimum over frames, or None when the pair is invalid.
    let per_pair: Vec<Option<(f64, usize)>> = pairs
        .par_iter()
        .map(|&(i, j)| -> Result<Option<(f64, usize)>> {
            let (x, y) = (&xs[i], &ys[j]);
            if !cost.is_valid(x.as_slice(), y.as_slice()) {
                return Ok(None);
            }
            let mut best: Option<(f64, usize)> = None;
            for (f, fr) in frames.iter().enumerate() {
                let v = mtw_tensor(cost, x, y, fr)?;
                if best.is_none_or(|(b, _)| v < b) {
                    best = Some((v, f));
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;

    let skipped = per_pair.iter().filter(|p| p.is_none()).count();
    let best = per_pair
        .iter()
        .enumerate()
        .filter_map(|(k, p)| p.map(|(value, frame)| Candidate { value, pair: k, frame }))
        .reduce(better)
        .ok_or_else(|| Error::OutOfValidityDomain("no valid sample pair in the domain product".into()))?;

    let pair_minima = pairs
        .iter()
        .zip(&per_pair)
        .filter_map(|(&(i, j), p)| {
            p.map(|(value, _)| PairMinimum {
                x: xs[i].as_slice().to_vec(),
                y: ys[j].as_slice().to_vec(),
                value,
            })
        })
        .collect();

    let (i, j) = pairs[best.pair];
    let (x, y, frame, value) = refine(
        cost,
        source,
        target,
        xs[i].clone(),
        ys[j].clone(),
        frames[best.frame].clone(),
        best.value,
        opts.refine_iterations,
    )?;
    let on_boundary = near_boundary(source, &x) || near_boundary(target, &y);
    Ok(SearchResult {
        inf_value: value,
        grid_inf: best.value,
        argmin: Argmin {
            x: x.as_slice().to_vec(),
            y: y.as_slice().to_vec(),
            xi: frame.xi.as_slice().to_vec(),
            eta: frame.eta.as_slice().to_vec(),
        },
        on_boundary,
        evaluated: pairs.len() - skipped,
        skipped,
        n_frames: frames.len(),
        pair_minima,
    })
}

fn near_boundary(d: &Domain, x: &Point) -> bool {
    let eps = 1e-9 * d.diameter().max(1e-300);
    (0..x.len()).any(|a| {
        [-eps, eps].iter().any(|s| {
            let mut p = x.clone();
            p[a] += s;
            !d.contains(p.as_slice())
        })
    })
}

/// Coordinate descent over `(x, y, frame angles)` kept inside both domains.
#[allow(clippy::too_many_arguments)]
fn refine<C: Cost + ?Sized>(
    cost: &C,
    source: &Domain,
    target: &Domain,
    mut x: Point,
    mut y: Point,
    mut frame: FramePair,
    mut value: f64,
    iterations: usize,
) -> Result<(Point, Point, FramePair, f64)> {
    let n = x.len();
    let mut angles = frame_params(&frame);
    let mut step_x = 0.05 * source.diameter().max(1e-12);
    let mut step_y = 0.05 * target.diameter().max(1e-12);
    let mut step_a = 0.1;
    let min_step = 1e-7;
    for _ in 0..iterations {
        let mut improved = false;
        for coord in 0..(2 * n + angles.len()) {
            for sign in [-1.0, 1.0] {
                let (mut xt, mut yt, mut at) = (x.clone(), y.clone(), angles.clone());
                if coord < n {
                    xt[coord] += sign * step_x;
                    if !source.contains(xt.as_slice()) {
                        continue;
                    }
                } else if coord < 2 * n {
                    yt[coord - n] += sign * step_y;
                    if !target.contains(yt.as_slice()) {
                        continue;
                    }
                } else {
                    at[coord - 2 * n] += sign * step_a;
                }
                if !cost.is_valid(xt.as_slice(), yt.as_slice()) {
                    continue;
                }
                let ft = frame_from_params(n, &at, &frame);
                let v = match mtw_tensor(cost, &xt, &yt, &ft) {
                    Ok(v) => v,
                    Err(Error::A2Violation { .. }) => continue,
                    Err(e) => return Err(e),
                };
                if v < value {
                    value = v;
                    x = xt;
                    y = yt;
                    angles = at;
                    frame = ft;
                    improved = true;
                }
            }
        }
        if !improved {
            step_x *= 0.5;
            step_y *= 0.5;
            step_a *= 0.5;
            if step_a < min_step {
                break;
            }
        }
    }
    Ok((x, y, frame, value))
}
