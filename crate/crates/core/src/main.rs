use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mtwkit::cli::{demo, run_scenario, write_outputs, PlotKind, Scenario, EXIT_ERROR, EXIT_OK, EXIT_VIOLATION};

/// Optimal transport with general costs: MTW classification, c-convexity
/// checks, exact discrete solves and regularity diagnostics.
///
/// Output directory: report.json (deterministic), timings.json, plan.csv,
/// potentials.csv (fine grid; *_coarse.csv for the coarse one),
/// diagnostics.csv (resolution, node, x.., jump, multivalued,
/// contact_diameter) and plot data:
///   map-arrows.csv         x.., T..   (tie sets at their mean)
///   gradient-jumps.csv     x.., jump
///   contact-diameters.csv  x.., diameter, diameter_in_spacings
///   mtw-heat.csv           x.., y.., value (minimum over frames)
///
/// Exit codes: 0 success, 1 error, 2 invariant violation.
#[derive(Parser, Debug)]
#[command(name = "mtwkit", version, verbatim_doc_comment)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Tolerance override KEY=VAL; repeatable.
    #[arg(long = "tol-override", global = true)]
    tol_override: Vec<String>,

    /// Run a single stage.
    #[arg(long, global = true)]
    stage: Option<String>,

    /// Plot tables to write (default: every available kind); repeatable.
    #[arg(long, global = true)]
    plot: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// All stages of --config (or only --stage).
    Run,
    /// Finite-difference check of the cost on sampled pairs.
    CostCheck,
    /// MTW tensor infimum and A3 / A3w / VIOLATED classification.
    MtwClassify,
    /// A c-segment across the target seen from the source centre.
    CSegment,
    /// c-convexity of target and source.
    DomainCheck,
    /// Exact discrete solves at both grid sizes.
    Solve,
    /// Solves plus the two-resolution regularity report.
    Diagnose,
    /// A canned scenario: quadratic-translate, a3-ball or loeper-break.
    Demo { name: String },
}

fn run(cli: &Cli) -> mtwkit::Result<i32> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| mtwkit::Error::InvalidInput(e.to_string()))?;
    }
    let (mut scenario, stage) = match &cli.command {
        Command::Demo { name } => (demo(name)?, cli.stage.clone()),
        cmd => {
            let path = cli.config.as_ref().ok_or_else(|| mtwkit::Error::Config {
                field: "--config".into(),
                message: "required for this subcommand".into(),
            })?;
            let stage = match cmd {
                Command::Run => cli.stage.clone(),
                Command::CostCheck => Some("cost-check".into()),
                Command::MtwClassify => Some("mtw-classify".into()),
                Command::CSegment => Some("c-segment".into()),
                Command::DomainCheck => Some("domain-check".into()),
                Command::Solve => Some("solve".into()),
                Command::Diagnose => Some("diagnose".into()),
                Command::Demo { .. } => unreachable!(),
            };
            (Scenario::load(path)?, stage)
        }
    };
    if let Some(s) = cli.seed {
        scenario.seed = s;
    }
    scenario.apply_overrides(&cli.tol_override)?;
    let plots: Vec<PlotKind> = cli
        .plot
        .iter()
        .map(|p| PlotKind::parse(p))
        .collect::<mtwkit::Result<_>>()?;

    let (report, artifacts, timings) = run_scenario(&scenario, stage.as_deref())?;
    let files = write_outputs(
        &cli.out,
        &report,
        &artifacts,
        &timings,
        (!plots.is_empty()).then_some(&plots[..]),
    )?;
    println!("{}: stages {:?}", report.scenario, report.stages);
    if let Some(m) = &report.mtw {
        println!("  MTW class {} (inf {:.4e})", m.classification, m.inf_value);
    }
    if let Some(g) = &report.regularity {
        println!(
            "  u_C1 {} (contraction {:.3}), v_strict {} (max contact {:.2} spacings)",
            g.u_c1,
            g.contraction,
            g.v_strict,
            g.coarse
                .max_contact_diameter_in_spacings
                .max(g.fine.max_contact_diameter_in_spacings)
        );
    }
    println!("  wrote {} files to {}", files.len(), cli.out.display());
    let v = report.violations();
    for msg in v {
        eprintln!("invariant violated: {msg}");
    }
    Ok(if v.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
