//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real stdout (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mtwkit::cli::{demo, run_scenario, write_outputs, RunArtifacts, RunReport, DEMOS};
use mtwkit::cost::{Cost, CostSpec, Point, RadialCost};
use mtwkit::geometry::{analytic_c_convexity, default_radii, image_c_convexity, support_interpolation_check, Shape};
use mtwkit::mtw::{classify_condition, mtw_tensor, mtw_tensor_z_form, mtw_terms, Classification, FramePair};
use mtwkit::transport::{solve_discrete_with, CTransformer, DiscreteMeasure, SolverOptions};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: usize, what: &str, pass: bool, detail: String, elapsed: Duration) {
    let line = format!(
        "{} criterion {n:>2} {what}: {detail} [{:.1} s]\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{line}");
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let r = v.norm();
        if r > 0.1 && r <= 1.0 {
            return v / r;
        }
    }
}

fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> FramePair {
    loop {
        if let Ok(f) = FramePair::orthonormalize(unit(rng, n), unit(rng, n)) {
            return f;
        }
    }
}

/// A valid pair at a distance suited to the family.
fn random_pair(rng: &mut ChaCha8Rng, spec: &CostSpec, n: usize) -> (Point, Point) {
    let (lo, hi) = match spec {
        CostSpec::NegSqrtOneMinus | CostSpec::SqrtOneMinus => (0.05, 0.8),
        CostSpec::NegLog | CostSpec::Power { .. } => (0.2, 2.0),
        _ => (0.0, 2.0),
    };
    let x = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let y = &x + unit(rng, n) * rng.random_range(lo..hi);
    (x, y)
}

#[test]
fn criterion_01_tensor_forms_agree() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut n_ok, mut worst, mut skipped) = (0usize, 0.0f64, 0usize);
    let mut worst_at = String::new();
    for spec in CostSpec::catalog() {
        for n in [2, 3] {
            let c = RadialCost::new(n, spec).unwrap();
            let mut k = 0;
            while k < 40 {
                let (x, y) = random_pair(&mut rng, &spec, n);
                let f = random_frame(&mut rng, n);
                let terms = mtw_terms(&c, &x, &y, &f.xi, &f.eta).unwrap();
                let z = match mtw_tensor_z_form(&c, &x, &y, &f, 1e-3) {
                    Ok(z) => z,
                    Err(_) => {
                        skipped += 1;
                        continue;
                    }
                };
                let rel = (terms.value + z).abs() / terms.scale().max(1e-300);
                let rel = if terms.scale() == 0.0 {
                    (terms.value + z).abs()
                } else {
                    rel
                };
                if rel > worst {
                    worst = rel;
                    worst_at = format!("{} n={n}", spec.label());
                }
                n_ok += 1;
                k += 1;
            }
        }
    }
    verdict(
        1,
        "MTW equivalence",
        n_ok >= 500 && worst <= 1e-4 && t.elapsed().as_secs() <= 60,
        format!("{n_ok} samples ({skipped} off the gradient image), worst relative gap {worst:.2e} ({worst_at})"),
        t.elapsed(),
    );
}

#[test]
fn criterion_02_quadratic_degeneracy() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let n = 2 + k % 2;
        let c = RadialCost::new(n, CostSpec::Quadratic).unwrap();
        let (x, y) = random_pair(&mut rng, &CostSpec::Quadratic, n);
        let f = random_frame(&mut rng, n);
        worst = worst.max(mtw_tensor(&c, &x, &y, &f).unwrap().abs());
    }
    let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
    let bx = |lo: f64| Shape::Box {
        lo: vec![lo, lo],
        hi: vec![lo + 1.0, lo + 1.0],
    };
    let r = classify_condition(&c, &bx(0.0).sample(8).unwrap(), &bx(2.0).sample(8).unwrap(), 200, 16).unwrap();
    verdict(
        2,
        "quadratic degeneracy",
        worst <= 1e-10 && r.classification == Classification::A3w && t.elapsed().as_secs() <= 5,
        format!("max |tensor| {worst:.1e} over 1000 samples, class {}", r.classification),
        t.elapsed(),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

fn cloud(rng: &mut ChaCha8Rng, k: usize) -> Vec<Point> {
    (0..k).map(|_| Point::from_fn(2, |_, _| rng.random::<f64>())).collect()
}

#[test]
fn criterion_03_solver_exactness() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let specs = [CostSpec::Quadratic, CostSpec::SqrtOnePlus, CostSpec::Power { p: 1.5 }];
    let mut mismatches = 0;
    for k in 0..200 {
        let n = 1 + k % 6;
        let c = RadialCost::new(2, specs[k % 3]).unwrap();
        let xs = cloud(&mut rng, n);
        let ys: Vec<Point> = cloud(&mut rng, n).into_iter().map(|y| y.add_scalar(0.05)).collect();
        let w = 1.0 / n as f64;
        let oracle = permutations(n)
            .iter()
            .map(|p| {
                (0..n)
                    .map(|i| w * c.eval(xs[i].as_slice(), ys[p[i]].as_slice()))
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        let mu = DiscreteMeasure::uniform(xs).unwrap();
        let nu = DiscreteMeasure::uniform(ys).unwrap();
        let s = solve_discrete_with(&c, &mu, &nu, &SolverOptions::default()).unwrap();
        if s.plan.objective != oracle {
            mismatches += 1;
        }
    }
    let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
    let mut gap = 0.0f64;
    for (m, n) in [(10, 13), (100, 100), (300, 250), (1000, 1000)] {
        let mu = DiscreteMeasure::uniform(cloud(&mut rng, m)).unwrap();
        let nu = DiscreteMeasure::uniform(cloud(&mut rng, n)).unwrap();
        let s = solve_discrete_with(&c, &mu, &nu, &SolverOptions::default()).unwrap();
        gap = gap.max(s.summary.duality_gap);
    }
    verdict(
        3,
        "solver exactness",
        mismatches == 0 && gap <= 1e-8 && t.elapsed().as_secs() <= 120,
        format!(
            "{mismatches}/200 objectives differ from the permutation oracle, max duality gap {gap:.1e} up to 1000×1000"
        ),
        t.elapsed(),
    );
}

#[test]
fn criterion_04_ctransform_algebra() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let c = RadialCost::new(2, CostSpec::SqrtOnePlus).unwrap();
    let mut unequal = 0;
    for _ in 0..100 {
        let xs = cloud(&mut rng, 25);
        let ys = cloud(&mut rng, 30);
        let tr = CTransformer::new(&c, &xs, &ys).unwrap();
        let v: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u1 = tr.to_source(&v).unwrap().values;
        let v2 = tr.to_target(&u1).unwrap().values;
        let u3 = tr.to_source(&v2).unwrap().values;
        if u1 != u3 {
            unequal += 1;
        }
    }
    let mut feas = f64::NEG_INFINITY;
    for (k, spec) in [CostSpec::Quadratic, CostSpec::NegLog, CostSpec::SqrtOneMinus]
        .iter()
        .enumerate()
    {
        let c = RadialCost::new(2, *spec).unwrap();
        let xs = cloud(&mut rng, 60 + 10 * k).into_iter().map(|p| p * 0.5).collect();
        let ys: Vec<Point> = cloud(&mut rng, 50).into_iter().map(|p| p * 0.5).collect();
        let ys = ys.into_iter().map(|y| y.add_scalar(0.1)).collect();
        let s = solve_discrete_with(
            &c,
            &DiscreteMeasure::uniform(xs).unwrap(),
            &DiscreteMeasure::uniform(ys).unwrap(),
            &SolverOptions::default(),
        )
        .unwrap();
        feas = feas.max(s.summary.max_feasibility_violation);
    }
    verdict(
        4,
        "c-transform algebra",
        unequal == 0 && feas <= 1e-9,
        format!("triple ≠ single on {unequal}/100, max u+v−c {feas:.1e}"),
        t.elapsed(),
    );
}

#[test]
fn criterion_05_support_inequality() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let a3 = RadialCost::new(2, CostSpec::SqrtOneMinus).unwrap();
    let quad = RadialCost::new(2, CostSpec::Quadratic).unwrap();
    let (mut a3_min, mut q_min, mut rings) = (f64::INFINITY, f64::INFINITY, 0);
    for _ in 0..60 {
        let x0 = DVector::from_fn(2, |_, _| rng.random_range(-0.1..0.1));
        let y0 = &x0 + unit(&mut rng, 2) * rng.random_range(0.3..0.6);
        let y1 = &x0 + unit(&mut rng, 2) * rng.random_range(0.3..0.6);
        if (&y0 - &y1).norm() < 0.05 {
            continue;
        }
        let r = support_interpolation_check(&a3, &x0, &y0, &y1, &default_radii(0.2), 9, 16).unwrap();
        a3_min = a3_min.min(r.min_margin);
        let r = support_interpolation_check(&quad, &x0, &y0, &y1, &default_radii(0.2), 9, 16).unwrap();
        q_min = q_min.min(r.min_margin);
        rings += 1;
    }
    verdict(
        5,
        "support inequality",
        rings >= 50 && a3_min > 0.0 && q_min >= -1e-9 && t.elapsed().as_secs() <= 60,
        format!("{rings} triples: A3 cost min margin {a3_min:.2e}, quadratic min margin {q_min:.2e}"),
        t.elapsed(),
    );
}

struct DemoRun {
    report: RunReport,
    artifacts: RunArtifacts,
    json: Vec<u8>,
    seconds: f64,
}

fn run_demo(name: &str) -> DemoRun {
    let t = Instant::now();
    let (report, artifacts, timings) = run_scenario(&demo(name).unwrap(), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &report, &artifacts, &timings, None).unwrap();
    let json = std::fs::read(dir.path().join("report.json")).unwrap();
    DemoRun {
        report,
        artifacts,
        json,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn demos() -> &'static Vec<(String, DemoRun)> {
    static RUNS: OnceLock<Vec<(String, DemoRun)>> = OnceLock::new();
    RUNS.get_or_init(|| DEMOS.iter().map(|d| (d.to_string(), run_demo(d))).collect())
}

fn demo_run(name: &str) -> &'static DemoRun {
    &demos().iter().find(|(n, _)| n == name).unwrap().1
}

#[test]
fn criterion_06_a3_scenario() {
    let t = Instant::now();
    let r = demo_run("a3-ball");
    let g = r.report.regularity.as_ref().unwrap();
    let diam = g
        .coarse
        .max_contact_diameter_in_spacings
        .max(g.fine.max_contact_diameter_in_spacings);
    verdict(
        6,
        "a3-ball regularity",
        g.contraction >= 1.5 && diam <= 3.0 && r.seconds <= 600.0,
        format!(
            "jump contraction {:.3} (24² → 48²), widest contact {diam:.2} spacings, demo {:.1} s",
            g.contraction, r.seconds
        ),
        t.elapsed(),
    );
}

#[test]
fn criterion_07_breakdown_scenario() {
    let t = Instant::now();
    let r = demo_run("loeper-break");
    let g = r.report.regularity.as_ref().unwrap();
    let diam = g
        .coarse
        .max_contact_diameter_in_spacings
        .max(g.fine.max_contact_diameter_in_spacings);
    let mv = r
        .report
        .solve
        .as_ref()
        .unwrap()
        .iter()
        .map(|s| s.n_multivalued)
        .collect::<Vec<_>>();
    verdict(
        7,
        "loeper-break breakdown",
        g.contraction < 1.2 && diam > 5.0 && r.seconds <= 600.0,
        format!(
            "jump contraction {:.3}, widest contact {diam:.2} spacings, multivalued nodes {mv:?}, demo {:.1} s",
            g.contraction, r.seconds
        ),
        t.elapsed(),
    );
}

#[test]
fn criterion_08_convexity_formulations_agree() {
    let t = Instant::now();
    let ball = |r: f64| Shape::Ball {
        center: vec![0.0, 0.0],
        radius: r,
    };
    let ellipse = Shape::Ellipse {
        center: vec![0.0, 0.0],
        semi_axes: vec![0.5, 0.25],
    };
    let peanut = |b: f64| Shape::Cassini {
        center: vec![0.0, 0.0],
        a: 0.5,
        b,
    };
    let shapes = [ball(0.5), ellipse, peanut(0.8), peanut(0.55), peanut(0.6)];
    let specs = [
        CostSpec::Quadratic,
        CostSpec::SqrtOnePlus,
        CostSpec::NegLog,
        CostSpec::Power { p: 3.0 },
    ];
    let ys = [[2.0, 0.5], [-1.5, 2.0]];
    let (mut cases, mut disagree, mut convex, mut nonconvex) = (0, Vec::new(), 0, 0);
    for (si, shape) in shapes.iter().enumerate() {
        let dom = shape.sample(24).unwrap();
        for spec in &specs {
            let c = RadialCost::new(2, *spec).unwrap();
            for y in &ys {
                let y = DVector::from_column_slice(y);
                let img = image_c_convexity(&c, &dom, &y).unwrap();
                let an = analytic_c_convexity(&c, &dom, std::slice::from_ref(&y)).unwrap();
                cases += 1;
                if img.is_convex {
                    convex += 1;
                } else {
                    nonconvex += 1;
                }
                if img.is_convex != an.c_convex {
                    disagree.push(format!("shape {si} {} y={:?}", spec.label(), y.as_slice()));
                }
            }
        }
    }
    verdict(
        8,
        "c-convexity formulations",
        cases >= 20 && disagree.is_empty() && convex > 0 && nonconvex > 0 && t.elapsed().as_secs() <= 60,
        format!("{cases} cases ({convex} convex, {nonconvex} not), disagreements {disagree:?}"),
        t.elapsed(),
    );
}

#[test]
fn criterion_09_inclusion_and_connectedness() {
    let t = Instant::now();
    let (mut tested, mut failures, mut comps) = (0, 0, Vec::new());
    for (name, r) in demos() {
        let g = r.report.regularity.as_ref().unwrap();
        for d in [&g.coarse, &g.fine] {
            tested += d.n_tested_nodes;
            failures += d.inclusion_failures;
        }
        if name != "loeper-break" {
            comps.push((name.clone(), g.coarse.max_components.max(g.fine.max_components)));
        }
        assert!(!r.artifacts.resolutions.is_empty());
    }
    verdict(
        9,
        "inclusion and connectedness",
        tested > 0 && failures == 0 && comps.iter().all(|c| c.1 == 1),
        format!("{failures} inclusion failures on {tested} tested nodes; max components {comps:?}"),
        t.elapsed(),
    );
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let mut differing = Vec::new();
    for name in DEMOS {
        if run_demo(name).json != demo_run(name).json {
            differing.push(name);
        }
    }
    verdict(
        10,
        "determinism",
        differing.is_empty(),
        format!("report.json differs for {differing:?} across two runs of each demo"),
        t.elapsed(),
    );
}
