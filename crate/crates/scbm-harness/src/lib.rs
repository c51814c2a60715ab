//! Experiment harness around `scbm-core`: scenario files with built-in presets
//! (interfaces, connection power models, workloads and ready-made scenarios),
//! static and perturbed runs across the three bandwidth managers, the
//! brute-force cross-check, and deterministic CSV output.

pub mod error;
pub mod output;
pub mod presets;
pub mod runner;
pub mod scenario;

pub use error::{HarnessError, Result};
pub use output::{emit_csv, fmt_float, read_csv, Table};
pub use presets::PresetLibrary;
pub use runner::{
    run_check, run_dynamic, run_experiment, run_experiment_with, run_oracle, saving_pct, DynamicOutput, Execution,
    ExperimentTable, ResultRow, TraceRow,
};
pub use scenario::{load_scenario, parse_scenario, Manager, RawScenario, RoundMode, Scenario, SweepPoint};

/// Write a perturbed run's trajectory as plot data.
pub fn emit_plotdata(trace: &DynamicOutput, path: &std::path::Path) -> Result<()> {
    emit_csv(&trace.to_table(), path)
}
