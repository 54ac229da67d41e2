//! Built-in scenarios, scenario files and result bundles.

mod builders;
mod compare;
mod config;
mod runner;

pub use builders::{build_battery, build_example1, BatteryParams, ParamError};
pub use compare::{compare_report, grid_configs, BundleRow, CompareError, Comparison, CITED_BATTERY_RMSE, CITED_SQRT_MU, THETA_GRID};
pub use config::{apply_override, Builtin, ComponentConfig, ConfigError, InlineSystem, ScenarioConfig, SimulationConfig, SynthesisConfig, SystemConfig};
pub use runner::{
    create_run_dir, run_batch, run_scenario, RunError, RunMetrics, RunMode, RunOutcome, RunStatus, ScenarioMetrics, StageLog, SynthesisRecord, METRICS_FILE,
    PROBLEM_FILE, SCENARIO_FILE, SUMMARY_FILE, SYNTHESIS_FILE, TRAJECTORY_FILE,
};
