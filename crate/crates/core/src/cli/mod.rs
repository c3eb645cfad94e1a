//! Scenario configs, canned demos, the stage pipeline and its output files.

pub mod demos;
pub mod output;
pub mod pipeline;
pub mod scenario;

pub use demos::{demo, DEMOS};
pub use output::{emit_plot_data, write_outputs, PlotKind, Table};
pub use pipeline::{run_scenario, RunArtifacts, RunReport, Timings, STAGES};
pub use scenario::{discretize, Bump, DensitySpec, GridSizes, MeasureSpec, Scenario};

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
