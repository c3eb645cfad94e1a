use mtwkit::cli::pipeline::solve_resolution;
use mtwkit::cli::{demo, Scenario};
use mtwkit::cost::{Cost, CostSpec, Point, RadialCost};
use mtwkit::geometry::c_segment;
use mtwkit::regularity::*;
use mtwkit::transport::{c_transform, GridFunction, RegularGrid};
use mtwkit::Error;
use nalgebra::{dvector, DVector};
use proptest::prelude::*;

fn small(name: &str, coarse: usize, fine: usize) -> Scenario {
    let mut s = demo(name).unwrap();
    s.grids.coarse = coarse;
    s.grids.fine = fine;
    s
}

fn solved(name: &str, cells: usize) -> SolvedGrid {
    let s = small(name, cells, cells + 1);
    let c = mtwkit::cost::build(&s.cost, 2).unwrap();
    solve_resolution(&c, &s, cells).unwrap().grid
}

#[test]
fn translation_potential_is_differentiable_everywhere() {
    let g = solved("quadratic-translate", 12);
    let tol = jump_tolerance(&g.u);
    let mut n = 0;
    for k in g.u.active_nodes() {
        if g.u.is_interior(k) {
            let s = superdifferential_with(&g.u, k, tol).unwrap();
            assert!(s.singleton && s.vertices.len() == 1, "{s:?}");
            // u = −a·x + const, so the slope is −a
            assert!((s.vertices[0][0] + 0.3).abs() < 1e-9 && (s.vertices[0][1] - 0.2).abs() < 1e-9);
            n += 1;
        }
    }
    assert_eq!(n, 100);
}

#[test]
fn two_vertex_images_span_a_c_segment_inside_the_target() {
    let c = RadialCost::new(2, CostSpec::SqrtOneMinus).unwrap();
    let grid = RegularGrid::cell_centered(&[-0.1, -0.1], &[0.1, 0.1], &[9, 9]).unwrap();
    // a concave kink along x₁ = 0 between the supports through two targets
    let (ya, yb) = (dvector![0.4, 0.05], dvector![0.5, -0.05]);
    let vals: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| {
            c.eval(x.as_slice(), ya.as_slice())
                .min(c.eval(x.as_slice(), yb.as_slice()) + 0.0)
        })
        .collect();
    let u = GridFunction::new(grid, vals).unwrap();
    let (k, s) = u
        .active_nodes()
        .into_iter()
        .filter(|&k| u.is_interior(k))
        .map(|k| (k, superdifferential(&u, k).unwrap()))
        .max_by(|a, b| a.1.diameter.total_cmp(&b.1.diameter))
        .unwrap();
    assert!(!s.singleton);
    let img = c_superdifferential(&c, &s, &ya);
    let pts = img.points();
    assert_eq!(pts.len(), s.vertices.len());
    let x0 = u.grid.point(k);
    let target = |y: &Point| (y - dvector![0.45, 0.0]).norm() <= 0.2;
    assert!(pts.iter().all(target));
    for w in pts.windows(2) {
        let seg = c_segment(&c, &x0, &w[0], &w[1], 8).unwrap();
        assert!(seg.samples.iter().all(|p| target(&p.y)));
    }
}

#[test]
fn normal_map_of_a_c_transform_is_never_empty() {
    let c = RadialCost::new(2, CostSpec::SqrtOnePlus).unwrap();
    let xs: Vec<Point> = (0..36)
        .map(|k| dvector![(k % 6) as f64 * 0.2, (k / 6) as f64 * 0.2])
        .collect();
    let ys: Vec<Point> = (0..20)
        .map(|k| dvector![1.5 + (k % 5) as f64 * 0.1, (k / 5) as f64 * 0.3])
        .collect();
    let v: Vec<f64> = (0..20).map(|k| ((k * 7) % 5) as f64 * 0.03).collect();
    let u = c_transform(&c, &v, &ys, &xs).unwrap().values;
    for i in 0..xs.len() {
        assert!(!c_normal_map(&c, &u, &xs, i, &ys).unwrap().is_empty(), "node {i}");
    }
    // a dip at one node leaves it without a support from above
    let mut dipped = u.clone();
    dipped[14] -= 0.05;
    assert!(c_normal_map(&c, &dipped, &xs, 14, &ys).unwrap().is_empty());
}

#[test]
fn supports_from_plan_pairs() {
    let s = small("a3-ball", 12, 16);
    let c = mtwkit::cost::build(&s.cost, 2).unwrap();
    let r = solve_resolution(&c, &s, 12).unwrap();
    let (xs, ys) = (&r.mu.points, &r.nu.points);
    let (u, v) = (&r.solution.potentials.u, &r.solution.potentials.v);
    for e in &r.solution.plan.entries {
        let (x0, y0) = (&xs[e.source], &ys[e.target]);
        // h(x) = c(x, y₀) − v(y₀) lies above u with equality at x₀
        for (i, x) in xs.iter().enumerate() {
            assert!(c.eval(x.as_slice(), y0.as_slice()) - v[e.target] >= u[i] - 1e-8);
        }
        assert!((c.eval(x0.as_slice(), y0.as_slice()) - v[e.target] - u[e.source]).abs() <= 1e-8);
        // and h*(y) = c(x₀, y) − u(x₀) above v
        for (j, y) in ys.iter().enumerate() {
            assert!(c.eval(x0.as_slice(), y.as_slice()) - u[e.source] >= v[j] - 1e-8);
        }
        let sup = DualSupport {
            x0: x0.as_slice().to_vec(),
            offset: -u[e.source],
        };
        let cs = contact_set(&c, v, ys, &sup, 2.0 * max_nn_spacing(ys), CONTACT_TOL).unwrap();
        assert!(cs.members.contains(&e.target));
        assert_eq!(cs.n_components, 1);
    }
}

#[test]
fn kink_node_has_local_but_not_global_supports() {
    let s = small("loeper-break", 16, 24);
    let c = mtwkit::cost::build(&s.cost, 2).unwrap();
    let r = solve_resolution(&c, &s, 16).unwrap();
    let g = &r.grid;
    let nodes = g.u.active_nodes();
    let (i, smp) = (0..nodes.len())
        .filter(|&i| g.u.is_interior(nodes[i]))
        .map(|i| (i, superdifferential(&g.u, nodes[i]).unwrap()))
        .max_by(|a, b| a.1.diameter.total_cmp(&b.1.diameter))
        .unwrap();
    let global = c_normal_map(&c, &r.solution.potentials.u, &g.source_points, i, &g.target_points).unwrap();
    let x0 = &g.source_points[i];
    let h = g.u.grid.spacing[0];
    // targets whose gradient lies in the superdifferential box, widened by
    // the one-sided difference error of c(·, y)
    let local: Vec<usize> = (0..g.target_points.len())
        .filter(|&j| {
            let y = g.target_points[j].as_slice();
            let p = c.grad_x(x0.as_slice(), y).unwrap();
            (0..2).all(|a| {
                let mut xp = x0.clone();
                xp[a] += h;
                let dp = (c.eval(xp.as_slice(), y) - c.eval(x0.as_slice(), y)) / h;
                let slack = 2.0 * (dp - p[a]).abs() + 2.0 * NORMAL_MAP_TOL / h + 1e-12;
                p[a] >= smp.lower[a] - slack && p[a] <= smp.upper[a] + slack
            })
        })
        .collect();
    assert!(global.iter().all(|j| local.contains(j)), "{global:?} vs {local:?}");
    assert!(global.len() < local.len(), "{global:?} vs {local:?}");
}

#[test]
fn report_needs_matching_scenarios() {
    let a = solved("quadratic-translate", 8);
    let mut b = solved("quadratic-translate", 12);
    let c = RadialCost::new(2, CostSpec::Quadratic).unwrap();
    let opts = RegularityOptions::default();
    assert!(matches!(
        regularity_report(&c, &b, &a, &opts),
        Err(Error::MismatchedScenarios(_))
    ));
    b.label = "other".into();
    assert!(matches!(
        regularity_report(&c, &a, &b, &opts),
        Err(Error::MismatchedScenarios(_))
    ));
    b.label = a.label.clone();
    let r1 = regularity_report(&c, &a, &b, &opts).unwrap();
    let r2 = regularity_report(&c, &a, &b, &opts).unwrap();
    assert_eq!(r1, r2);
    assert!(r1.u_c1 && r1.v_strict && r1.verdicts_agree && r1.below_noise_floor);
}

#[test]
fn boundary_nodes_are_rejected() {
    let g = solved("a3-ball", 8);
    let edge = g.u.active_nodes()[0];
    assert!(matches!(superdifferential(&g.u, edge), Err(Error::BoundaryNode(k)) if k == edge));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affine_data_is_a_singleton(a in -3.0..3.0f64, b in -3.0..3.0f64, c0 in -1.0..1.0f64, k in 4usize..9) {
        let grid = RegularGrid::cell_centered(&[0.0, 0.0], &[1.0, 1.0], &[k, k]).unwrap();
        let vals = grid.points().iter().map(|p| a * p[0] + b * p[1] + c0).collect();
        let u = GridFunction::new(grid, vals).unwrap();
        let s = superdifferential(&u, u.grid.flat_index(&[k / 2, k / 2])).unwrap();
        prop_assert!(s.singleton);
        prop_assert!((s.vertices[0][0] - a).abs() < 1e-9 && (s.vertices[0][1] - b).abs() < 1e-9);
    }

    #[test]
    fn contact_members_meet_the_tolerance(vals in proptest::collection::vec(-1.0..0.0f64, 3..30), x0 in -1.0..1.0f64) {
        let c = RadialCost::new(1, CostSpec::Quadratic).unwrap();
        let ys: Vec<Point> = (0..vals.len()).map(|j| DVector::from_element(1, j as f64 * 0.1)).collect();
        // the tightest support of v through x₀
        let offset = (0..ys.len()).map(|j| vals[j] - c.eval(&[x0], ys[j].as_slice())).fold(f64::NEG_INFINITY, f64::max);
        let sup = DualSupport { x0: vec![x0], offset };
        let cs = contact_set(&c, &vals, &ys, &sup, 0.2, CONTACT_TOL).unwrap();
        prop_assert!(!cs.members.is_empty());
        for &j in &cs.members {
            prop_assert!((sup.eval(&c, ys[j].as_slice()) - vals[j]).abs() <= CONTACT_TOL);
        }
        prop_assert!(cs.n_components >= 1 && cs.n_components <= cs.members.len());
        let lower = DualSupport { x0: vec![x0], offset: offset - 0.1 };
        prop_assert!(matches!(contact_set(&c, &vals, &ys, &lower, 0.2, CONTACT_TOL), Err(Error::NotASupport(_))));
    }

    #[test]
    fn normal_map_gradients_lie_in_the_box(v in proptest::collection::vec(0.0..0.3f64, 4..12), k in 8usize..20) {
        let c = RadialCost::new(1, CostSpec::Power { p: 4.0 }).unwrap();
        let grid = RegularGrid::cell_centered(&[0.0], &[1.0], &[k]).unwrap();
        let xs = grid.points();
        let h = grid.spacing[0];
        let ys: Vec<Point> = (0..v.len()).map(|j| DVector::from_element(1, 1.5 + j as f64 / v.len() as f64)).collect();
        let u = c_transform(&c, &v, &ys, &xs).unwrap().values;
        let f = GridFunction::new(grid, u.clone()).unwrap();
        for i in 1..k - 1 {
            let s = superdifferential(&f, i).unwrap();
            for j in c_normal_map(&c, &u, &xs, i, &ys).unwrap() {
                let y = ys[j].as_slice();
                let x0 = xs[i][0];
                let p = c.grad_x(&[x0], y).unwrap()[0];
                let dp = (c.eval(&[x0 + h], y) - c.eval(&[x0], y)) / h;
                let dm = (c.eval(&[x0], y) - c.eval(&[x0 - h], y)) / h;
                let slack = (dp - p).abs().max((dm - p).abs()) + 2.0 * NORMAL_MAP_TOL / h + 1e-12;
                prop_assert!(p >= s.lower[0] - slack && p <= s.upper[0] + slack);
            }
        }
    }
}
