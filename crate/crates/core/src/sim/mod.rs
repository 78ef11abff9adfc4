//! Scenario generation, experiment orchestration and metric computation.

mod metrics;
mod runner;
mod scenario;

pub use metrics::{compute_metrics, EventRecord, RunReport, SlotRow, Summary};
pub use runner::{
    run_experiment, worker_threads, write_manifest, CellResult, ExperimentKind,
    ExperimentReport, ExperimentSpec,
};
pub use scenario::{
    generate_scenario, Blockage, ScenarioConfig, Scatterer, SlotTruth, WorldTrace,
};
