use std::path::{Path, PathBuf};
use std::process::Command;

use mtwkit::cli::{demo, emit_plot_data, run_scenario, PlotKind, Scenario, DEMOS};
use mtwkit::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mtwkit"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small(name: &str) -> Scenario {
    let mut s = demo(name).unwrap();
    s.grids.coarse = 8;
    s.grids.fine = 12;
    s.classify.n_pairs = 40;
    s
}

#[test]
fn shipped_configs_match_the_demos() {
    for d in DEMOS {
        let s = Scenario::load(&configs().join(format!("{d}.json"))).unwrap();
        assert_eq!(s, demo(d).unwrap(), "{d}");
    }
}

#[test]
fn demo_writes_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["demo", "quadratic-translate", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "report.json",
        "timings.json",
        "plan.csv",
        "potentials.csv",
        "diagnostics.csv",
        "map-arrows.csv",
        "gradient-jumps.csv",
        "contact-diameters.csv",
        "mtw-heat.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let arrows = std::fs::read_to_string(dir.path().join("map-arrows.csv")).unwrap();
    let mut lines = arrows.lines();
    assert_eq!(lines.next(), Some("x1,x2,T1,T2"));
    // every arrow is the translation by (0.3, −0.2)
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(
            (v[2] - v[0] - 0.3).abs() < 1e-12 && (v[3] - v[1] + 0.2).abs() < 1e-12,
            "{l}"
        );
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["mtw"]["classification"], "A3w");
    assert_eq!(report["regularity"]["u_c1"], true);
    assert_eq!(report["regularity"]["v_strict"], true);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.json");
    std::fs::write(&cfg, serde_json::to_string(&small("quadratic-translate")).unwrap()).unwrap();
    let run = |extra: &[&str]| {
        bin()
            .arg("solve")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join("o"))
            .args(extra)
            .output()
            .unwrap()
    };
    assert_eq!(run(&[]).status.code(), Some(0));
    // a gap bound below roundoff is an invariant violation
    let out = run(&["--tol-override", "max_gap=1e-300"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duality gap"));
    assert_eq!(run(&["--tol-override", "bogus=1"]).status.code(), Some(1));
    // a plot kind whose stage did not run
    assert_eq!(run(&["--plot", "gradient-jumps"]).status.code(), Some(1));

    std::fs::write(&cfg, "{\n  \"name\": 3\n}").unwrap();
    let out = run(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert_eq!(bin().args(["demo", "nope"]).output().unwrap().status.code(), Some(1));
}

#[test]
fn single_stage_and_missing_plot_data() {
    let (r, a, _) = run_scenario(&small("a3-ball"), Some("mtw-classify")).unwrap();
    assert_eq!(r.stages, vec!["mtw-classify".to_string()]);
    assert!(r.solve.is_none() && r.regularity.is_none());
    let heat = emit_plot_data(&r, &a, PlotKind::MtwHeat).unwrap();
    assert_eq!(heat.header, ["x1", "x2", "y1", "y2", "value"]);
    assert!(!heat.rows.is_empty());
    for k in [PlotKind::MapArrows, PlotKind::GradientJumps, PlotKind::ContactDiameters] {
        assert!(
            matches!(emit_plot_data(&r, &a, k), Err(Error::MissingStage(_))),
            "{k:?}"
        );
    }
    assert!(matches!(
        run_scenario(&small("a3-ball"), Some("bogus")),
        Err(Error::Config { .. })
    ));
}

#[test]
fn seed_moves_jittered_targets_only() {
    let mut s = small("a3-ball");
    s.target.jitter = 0.2;
    let go = |seed: u64| {
        let mut s = s.clone();
        s.seed = seed;
        let (r, _, _) = run_scenario(&s, Some("solve")).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(go(3), go(3));
    assert_ne!(go(3), go(4));
}

#[test]
fn point_file_targets_skip_the_grid_stages() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("t.csv");
    std::fs::write(&pts, "x,y,w\n2.0,0.0,1\n2.0,0.5,1\n2.5,0.25,2\n").unwrap();
    let mut s = small("quadratic-translate");
    s.target.domain = None;
    s.target.points_file = Some(pts);
    s.validate().unwrap();
    let (r, _, _) = run_scenario(&s, Some("solve")).unwrap();
    let rec = &r.solve.unwrap()[1];
    assert_eq!(rec.target.n_points, 3);
    assert!(rec.solve.duality_gap <= 1e-8);
    assert!(matches!(
        run_scenario(&s, Some("domain-check")),
        Err(Error::Stage { .. })
    ));
}
