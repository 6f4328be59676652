//! Scenario configuration, closed-loop simulation, metrics and reports.

mod config;
mod metrics;
mod report;
mod sim;

pub use config::{
    BasisConfig, CostSpec, PlantSpec, ReferenceSpec, Scenario, ScenarioConfig, Tolerances,
};
pub use metrics::{emit_csv, write_csv, MetricsRecord};
pub use report::{
    ablation_report, compare_to_oracle, plateau_change, AblationReport, ComparisonReport,
    FinalEstimates, GainResets, GroundTruth, ReportEntry,
};
pub use sim::{demonstrator_control, run_ablation, run_scenario, RunOutput, StackDumps};
