//! Files written to the output directory, and the plot-data tables.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pipeline::{arrow_head, mtw_rows, RunArtifacts, RunReport, SolvedResolution, Timings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    MapArrows,
    GradientJumps,
    ContactDiameters,
    MtwHeat,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        Self::MapArrows,
        Self::GradientJumps,
        Self::ContactDiameters,
        Self::MtwHeat,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::MapArrows => "map-arrows",
            Self::GradientJumps => "gradient-jumps",
            Self::ContactDiameters => "contact-diameters",
            Self::MtwHeat => "mtw-heat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config {
                field: "--plot".into(),
                message: format!("unknown plot kind '{s}'"),
            })
    }
}

/// A header line and numeric rows; NaN is written as an empty field.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn axes(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

fn finest(artifacts: &RunArtifacts) -> Option<&SolvedResolution> {
    artifacts.resolutions.last()
}

/// Plot data for `kind`:
///
/// | kind                | columns                                        |
/// |---------------------|------------------------------------------------|
/// | `map-arrows`        | `x1.. , T1..` (tie sets plotted at their mean)  |
/// | `gradient-jumps`    | `x1.. , jump` at interior nodes                |
/// | `contact-diameters` | `x1.. , diameter, diameter_in_spacings`         |
/// | `mtw-heat`          | `x1.. , y1.. , value` (minimum over frames)     |
///
/// The grid tables use the fine resolution.
pub fn emit_plot_data(report: &RunReport, artifacts: &RunArtifacts, kind: PlotKind) -> Result<Table> {
    let missing = |stage: &str| Error::MissingStage(format!("{stage} (needed for {})", kind.name()));
    match kind {
        PlotKind::MtwHeat => {
            let m = report.mtw.as_ref().ok_or_else(|| missing("mtw-classify"))?;
            let n = m.argmin.x.len();
            let mut header = axes("x", n);
            header.extend(axes("y", n));
            header.push("value".into());
            Ok(Table {
                header,
                rows: mtw_rows(m),
            })
        }
        PlotKind::MapArrows => {
            let r = finest(artifacts).ok_or_else(|| missing("solve"))?;
            let g = &r.grid;
            let n = g.u.grid.dim();
            let mut header = axes("x", n);
            header.extend(axes("T", n));
            let rows = g
                .source_points
                .iter()
                .zip(&g.map)
                .map(|(x, m)| {
                    x.iter()
                        .copied()
                        .chain(arrow_head(m, &g.target_points).iter().copied())
                        .collect()
                })
                .collect();
            Ok(Table { header, rows })
        }
        PlotKind::GradientJumps | PlotKind::ContactDiameters => {
            let reg = report.regularity.as_ref().ok_or_else(|| missing("diagnose"))?;
            let n = reg.fine.c1_argmax.len();
            let ht = reg.fine.target_spacing;
            let mut header = axes("x", n);
            let rows = if kind == PlotKind::GradientJumps {
                header.push("jump".into());
                reg.fine
                    .nodes
                    .iter()
                    .filter_map(|d| d.jump.map(|j| d.coords.iter().copied().chain([j]).collect()))
                    .collect()
            } else {
                header.extend(["diameter".into(), "diameter_in_spacings".into()]);
                reg.fine
                    .nodes
                    .iter()
                    .filter_map(|d| {
                        d.contact_diameter
                            .map(|c| d.coords.iter().copied().chain([c, c / ht]).collect())
                    })
                    .collect()
            };
            Ok(Table { header, rows })
        }
    }
}

fn diagnostics_table(report: &RunReport) -> Option<Table> {
    let reg = report.regularity.as_ref()?;
    let n = reg.fine.c1_argmax.len();
    let mut header = vec!["resolution".to_string(), "node".to_string()];
    header.extend(axes("x", n));
    header.extend(["jump", "multivalued", "contact_diameter"].map(String::from));
    let mut rows = Vec::new();
    for (level, d) in [(0.0, &reg.coarse), (1.0, &reg.fine)] {
        for nd in &d.nodes {
            let mut r = vec![level, nd.node as f64];
            r.extend(&nd.coords);
            r.push(nd.jump.unwrap_or(f64::NAN));
            r.push(if nd.multivalued { 1.0 } else { 0.0 });
            r.push(nd.contact_diameter.unwrap_or(f64::NAN));
            rows.push(r);
        }
    }
    Some(Table { header, rows })
}

/// Write the report, timings, solver CSVs, per-node diagnostics and the
/// requested plot tables (all available ones when `plots` is `None`).
///
/// The per-pair MTW minima go to `mtw-heat.csv` rather than the report.
pub fn write_outputs(
    dir: &Path,
    report: &RunReport,
    artifacts: &RunArtifacts,
    timings: &Timings,
    plots: Option<&[PlotKind]>,
) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut slim = report.clone();
    if let Some(m) = slim.mtw.as_mut() {
        m.pair_minima.clear();
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&slim)? + "\n")?;
    fs::write(dir.join("timings.json"), serde_json::to_string_pretty(timings)? + "\n")?;
    written.extend(["report.json".to_string(), "timings.json".to_string()]);

    let levels = artifacts.resolutions.len();
    for (k, r) in artifacts.resolutions.iter().enumerate() {
        let suffix = if k + 1 == levels {
            String::new()
        } else {
            "_coarse".into()
        };
        let plan = format!("plan{suffix}.csv");
        let pots = format!("potentials{suffix}.csv");
        r.solution.plan.write_csv(&dir.join(&plan))?;
        r.solution.potentials.write_csv(&dir.join(&pots), &r.mu, &r.nu)?;
        written.extend([plan, pots]);
    }
    if let Some(t) = diagnostics_table(report) {
        t.write_csv(&dir.join("diagnostics.csv"))?;
        written.push("diagnostics.csv".into());
    }
    let kinds: Vec<PlotKind> = match plots {
        Some(k) => k.to_vec(),
        None => PlotKind::ALL.to_vec(),
    };
    for kind in kinds {
        match emit_plot_data(report, artifacts, kind) {
            Ok(t) => {
                let f = format!("{}.csv", kind.name());
                t.write_csv(&dir.join(&f))?;
                written.push(f);
            }
            Err(Error::MissingStage(_)) if plots.is_none() => {}
            Err(e) => return Err(e),
        }
    }
    Ok(written)
}
