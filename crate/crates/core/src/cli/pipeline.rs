//! Stage runners. Each stage returns a serializable record; `run_scenario`
//! strings them together and collects wall-clock times separately so that
//! the report itself is reproducible.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{discretize, Discretized, Scenario};
use crate::cost::{fd_validate, Cost, Point, Swapped};
use crate::error::{Error, Result};
use crate::geometry::{c_segment, domain_c_convexity, Domain, DomainConvexity};
use crate::mtw::{classify_condition_with, Classification, ClassifyOptions, CostRef, MtwReport, DEFAULT_TOL_POS};
use crate::regularity::{regularity_report, RegularityOptions, RegularityReport, SolvedGrid};
use crate::transport::{
    extract_map, normalize_and_validate, DiscreteMeasure, GridFunction, MapValue, MeasureSummary, Solution,
    SolveSummary, SolverOptions,
};

pub const STAGES: [&str; 6] = [
    "cost-check",
    "mtw-classify",
    "c-segment",
    "domain-check",
    "solve",
    "diagnose",
];

/// Resolution of the point sets used by the geometric stages.
const GEOMETRY_RESOLUTION: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCheck {
    pub cost: String,
    pub n_pairs: usize,
    pub n_invalid_pairs: usize,
    /// Largest finite-difference discrepancy over the checked pairs.
    pub max_fd_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCheck {
    pub anchor: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub max_residual: f64,
    /// Fraction of segment samples inside the target shape.
    pub inside_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCheck {
    /// Target c-convex with respect to the source points.
    pub target: DomainConvexity,
    /// Source c*-convex with respect to the target points.
    pub source: DomainConvexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRecord {
    pub cells_per_axis: usize,
    pub source: MeasureSummary,
    pub target: MeasureSummary,
    pub solve: SolveSummary,
    pub n_multivalued: usize,
    pub gradient_residual_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub max_duality_gap: f64,
    pub max_feasibility_violation: f64,
    pub inclusion_failures: usize,
    /// Contact sets with more than one component where connectedness is
    /// expected (A3 cost, c-convex target).
    pub disconnected_contacts: usize,
    pub connectedness_expected: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunReport {
    pub scenario: String,
    pub cost: String,
    pub seed: u64,
    pub stages: Vec<String>,
    pub cost_check: Option<CostCheck>,
    pub mtw: Option<MtwReport>,
    pub c_segment: Option<SegmentCheck>,
    pub domain_check: Option<DomainCheck>,
    pub solve: Option<Vec<ResolutionRecord>>,
    pub regularity: Option<RegularityReport>,
    pub invariants: Option<Invariants>,
}

impl RunReport {
    pub fn violations(&self) -> &[String] {
        self.invariants.as_ref().map_or(&[], |i| &i.violations)
    }
}

/// One solved resolution with everything the outputs need.
#[derive(Debug, Clone)]
pub struct SolvedResolution {
    pub cells: usize,
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub solution: Solution,
    pub grid: SolvedGrid,
    pub record: ResolutionRecord,
}

/// Artifacts needed for CSV output beyond the JSON report.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub resolutions: Vec<SolvedResolution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
    pub total_seconds: f64,
}

fn shape_domain(s: &Scenario, source: bool) -> Result<Domain> {
    let spec = if source { &s.source } else { &s.target };
    match &spec.domain {
        Some(d) => d.sample(GEOMETRY_RESOLUTION),
        None => Err(Error::MissingStage(format!(
            "{} is a point file; geometric stages need a shape",
            if source { "source" } else { "target" }
        ))),
    }
}

fn subsample(pts: &[Point], max: usize) -> Vec<Point> {
    let stride = pts.len().div_ceil(max).max(1);
    pts.iter().step_by(stride).cloned().collect()
}

pub fn cost_check<C: Cost + ?Sized>(cost: &C, s: &Scenario) -> Result<CostCheck> {
    let xs = subsample(&shape_domain(s, true)?.interior_samples, 24);
    let ys = subsample(&shape_domain(s, false)?.interior_samples, 24);
    let mut invalid = 0;
    let mut worst = 0.0f64;
    let mut n = 0;
    for x in &xs {
        for y in &ys {
            if !cost.is_valid(x.as_slice(), y.as_slice()) {
                invalid += 1;
                continue;
            }
            let d = fd_validate(cost, x, y, 1e-3)?;
            worst = worst.max(d.max());
            n += 1;
        }
    }
    Ok(CostCheck {
        cost: cost.label(),
        n_pairs: n,
        n_invalid_pairs: invalid,
        max_fd_discrepancy: worst,
    })
}

pub fn mtw_classify<C: Cost + ?Sized>(cost: &C, s: &Scenario) -> Result<MtwReport> {
    let opts = ClassifyOptions {
        n_pairs: s.classify.n_pairs,
        n_frames: s.classify.n_frames,
        tol_pos: s.tolerance("tol_pos", DEFAULT_TOL_POS),
        ..ClassifyOptions::default()
    };
    classify_condition_with(cost, &shape_domain(s, true)?, &shape_domain(s, false)?, &opts)
}

/// c-segment between two far-apart target points, seen from the source centre.
pub fn segment_check<C: Cost + ?Sized>(cost: &C, s: &Scenario) -> Result<SegmentCheck> {
    let src = shape_domain(s, true)?;
    let tgt = shape_domain(s, false)?;
    let n = src.dim;
    let centroid = |pts: &[Point]| pts.iter().fold(DVector::zeros(n), |a, p| a + p) / pts.len() as f64;
    let anchor = centroid(&src.interior_samples);
    let yc = centroid(&tgt.interior_samples);
    let far = |from: &Point| {
        tgt.interior_samples
            .iter()
            .max_by(|a, b| (*a - from).norm().total_cmp(&(*b - from).norm()))
            .unwrap()
            .clone()
    };
    let y0 = far(&yc);
    let y1 = far(&y0);
    let seg = c_segment(cost, &anchor, &y0, &y1, 32)?;
    let shape = s.target.domain.as_ref().unwrap();
    let inside = seg.samples.iter().filter(|p| shape.contains(p.y.as_slice())).count();
    Ok(SegmentCheck {
        anchor: anchor.as_slice().to_vec(),
        y0: y0.as_slice().to_vec(),
        y1: y1.as_slice().to_vec(),
        max_residual: seg.max_residual(cost)?,
        inside_fraction: inside as f64 / seg.samples.len() as f64,
    })
}

pub fn domain_check<C: Cost + ?Sized>(cost: &C, s: &Scenario) -> Result<DomainCheck> {
    let src = shape_domain(s, true)?;
    let tgt = shape_domain(s, false)?;
    let xs = subsample(&src.all_samples(), 48);
    let ys = subsample(&tgt.all_samples(), 48);
    Ok(DomainCheck {
        target: domain_c_convexity(&Swapped(CostRef(cost)), &tgt, &xs)?,
        source: domain_c_convexity(cost, &src, &ys)?,
    })
}

pub fn solve_resolution<C: Cost + ?Sized>(cost: &C, s: &Scenario, cells: usize) -> Result<SolvedResolution> {
    let src: Discretized = discretize(&s.source, cells, s.seed)?;
    let tgt: Discretized = discretize(&s.target, cells, s.seed.wrapping_add(cells as u64))?;
    let (mu, nu) = normalize_and_validate(&src.cloud, &tgt.cloud, true)?;
    let solution = crate::transport::solve_discrete_with(cost, &mu, &nu, &SolverOptions::default())?;
    let grid = src
        .grid
        .clone()
        .ok_or_else(|| Error::MissingStage("diagnostics need a gridded source".into()))?;
    let u = GridFunction::from_active(grid, src.active.clone(), &solution.potentials.u)?;
    let ext = extract_map(cost, Some(&u), &solution.potentials.v, &mu.points, &nu.points)?;
    let record = ResolutionRecord {
        cells_per_axis: cells,
        source: MeasureSummary::of(&mu, src.cloud.total()),
        target: MeasureSummary::of(&nu, tgt.cloud.total()),
        solve: solution.summary.clone(),
        n_multivalued: ext.n_multivalued,
        gradient_residual_ratio: ext.gradient_check.as_ref().map(|g| g.ratio),
    };
    let grid = SolvedGrid {
        label: s.name.clone(),
        u,
        source_points: mu.points.clone(),
        target_points: nu.points.clone(),
        v: solution.potentials.v.clone(),
        target_spacing: tgt.spacing,
        map: ext.map,
    };
    Ok(SolvedResolution {
        cells,
        mu,
        nu,
        solution,
        grid,
        record,
    })
}

pub fn regularity_options(s: &Scenario) -> RegularityOptions {
    let d = RegularityOptions::default();
    RegularityOptions {
        contact_tol: s.tolerance("contact_tol", d.contact_tol),
        contraction_min: s.tolerance("contraction_min", d.contraction_min),
        diameter_factor: s.tolerance("diameter_factor", d.diameter_factor),
        tested_nodes: s.tolerance("tested_nodes", d.tested_nodes as f64) as usize,
    }
}

fn check_invariants(s: &Scenario, r: &RunReport) -> Invariants {
    let max_gap_tol = s.tolerance("max_gap", 1e-8);
    let feas_tol = s.tolerance("max_feasibility", 1e-9);
    let solves = r.solve.as_deref().unwrap_or(&[]);
    let gap = solves.iter().map(|x| x.solve.duality_gap).fold(0.0, f64::max);
    let feas = solves
        .iter()
        .map(|x| x.solve.max_feasibility_violation)
        .fold(0.0, f64::max);
    let expected = r.mtw.as_ref().is_some_and(|m| m.classification == Classification::A3)
        && r.domain_check.as_ref().is_some_and(|d| d.target.is_c_convex);
    let (incl, disc) = r.regularity.as_ref().map_or((0, 0), |g| {
        (
            g.coarse.inclusion_failures + g.fine.inclusion_failures,
            g.coarse.n_disconnected + g.fine.n_disconnected,
        )
    });
    let mut v = Vec::new();
    if gap > max_gap_tol {
        v.push(format!("duality gap {gap:e} exceeds {max_gap_tol:e}"));
    }
    if feas > feas_tol {
        v.push(format!("dual feasibility violated by {feas:e}"));
    }
    if incl > 0 {
        v.push(format!("{incl} tested nodes with T_u outside the superdifferential"));
    }
    if expected && disc > 0 {
        v.push(format!(
            "{disc} disconnected contact sets in an A3 scenario with c-convex target"
        ));
    }
    Invariants {
        max_duality_gap: gap,
        max_feasibility_violation: feas,
        inclusion_failures: incl,
        disconnected_contacts: disc,
        connectedness_expected: expected,
        violations: v,
    }
}

/// Run all stages, or only `only`. The report is a deterministic function of
/// the scenario.
pub fn run_scenario(s: &Scenario, only: Option<&str>) -> Result<(RunReport, RunArtifacts, Timings)> {
    if let Some(st) = only {
        if !STAGES.contains(&st) {
            return Err(Error::Config {
                field: "--stage".into(),
                message: format!("unknown stage '{st}', expected one of {STAGES:?}"),
            });
        }
    }
    let n = s
        .dim()
        .ok_or_else(|| Error::MissingStage("the source must be a shape".into()))?;
    let cost = crate::cost::build(&s.cost, n)?;
    let want = |st: &str| only.is_none_or(|o| o == st);
    let mut report = RunReport {
        scenario: s.name.clone(),
        cost: cost.label(),
        seed: s.seed,
        ..RunReport::default()
    };
    let mut artifacts = RunArtifacts::default();
    let mut times = Vec::new();
    let start = Instant::now();
    let mut timed = |name: &str, t: Instant| times.push((name.to_string(), t.elapsed().as_secs_f64()));
    let tag = |st: &'static str| {
        move |e: Error| Error::Stage {
            stage: st.into(),
            source: Box::new(e),
        }
    };

    if want("cost-check") {
        let t = Instant::now();
        report.cost_check = Some(cost_check(&cost, s).map_err(tag("cost-check"))?);
        report.stages.push("cost-check".into());
        timed("cost-check", t);
    }
    if want("mtw-classify") {
        let t = Instant::now();
        report.mtw = Some(mtw_classify(&cost, s).map_err(tag("mtw-classify"))?);
        report.stages.push("mtw-classify".into());
        timed("mtw-classify", t);
    }
    if want("c-segment") {
        let t = Instant::now();
        report.c_segment = Some(segment_check(&cost, s).map_err(tag("c-segment"))?);
        report.stages.push("c-segment".into());
        timed("c-segment", t);
    }
    if want("domain-check") {
        let t = Instant::now();
        report.domain_check = Some(domain_check(&cost, s).map_err(tag("domain-check"))?);
        report.stages.push("domain-check".into());
        timed("domain-check", t);
    }
    if want("solve") || want("diagnose") {
        let t = Instant::now();
        for cells in [s.grids.coarse, s.grids.fine] {
            artifacts
                .resolutions
                .push(solve_resolution(&cost, s, cells).map_err(tag("solve"))?);
        }
        report.solve = Some(artifacts.resolutions.iter().map(|r| r.record.clone()).collect());
        report.stages.push("solve".into());
        timed("solve", t);
    }
    if want("diagnose") {
        let t = Instant::now();
        let opts = regularity_options(s);
        let [c, f] = [&artifacts.resolutions[0].grid, &artifacts.resolutions[1].grid];
        report.regularity = Some(regularity_report(&cost, c, f, &opts).map_err(tag("diagnose"))?);
        report.stages.push("diagnose".into());
        timed("diagnose", t);
    }
    report.invariants = Some(check_invariants(s, &report));
    let total = start.elapsed().as_secs_f64();
    Ok((
        report,
        artifacts,
        Timings {
            stages: times,
            total_seconds: total,
        },
    ))
}

/// Per-node `(x, y)` tensor minima from the classification stage.
pub fn mtw_rows(r: &MtwReport) -> Vec<Vec<f64>> {
    r.pair_minima
        .par_iter()
        .map(|p| p.x.iter().chain(&p.y).copied().chain([p.value]).collect())
        .collect()
}

/// Targets of a map value, for arrow plots: the first target, or the mean
/// of a tie set.
pub fn arrow_head(map: &MapValue, ys: &[Point]) -> Point {
    let ts = map.targets();
    ts.iter().fold(DVector::zeros(ys[0].len()), |a, &j| a + &ys[j]) / ts.len() as f64
}
