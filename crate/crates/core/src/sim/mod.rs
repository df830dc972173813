//! Experiment orchestration: configuration, scenario setup, the round loop,
//! evaluation metrics, the correlation and benchmark drivers, and file
//! outputs.

mod config;
mod experiments;
mod metrics;
mod output;
mod run;
mod scenario;

pub use config::{
    DataConfig, DataSource, DiffusionConfig, ExperimentConfig, GraphConfig, GraphSource, ModelConfig, Placement,
    PolicyConfig, PolicyKind, RoleConfig, SCHEMA,
};
pub use experiments::{
    benchmark, correlation_experiment, default_policies, topology_name, BenchmarkCell, BenchmarkReport, BenchmarkRun,
    CorrelationNode, CorrelationReport, CorrelationRun, PolicyVariant, DEFAULT_RATIOS, DEFAULT_SWEEP,
    DEFAULT_TOPOLOGIES,
};
pub use metrics::{compute_asr, kendall_tau, mean_std, KendallTau};
pub use output::{write_benchmark, write_correlation, write_csv, write_jsonl, write_run};
pub use run::{run_experiment, run_scenario, MaliciousLog, NodeRound, Role, RoundRecord, RunResult, RunSummary, SelectionLog};
pub use scenario::{adversarial_set, assign_roles, build_graph, build_scenario, load_data, topology_defense, Roles, Scenario};
