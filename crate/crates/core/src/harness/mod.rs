//! Deterministic simulator, synthetic FedAvg task, experiments and
//! benchmarks.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod selftest;
pub mod task;
pub mod transport;

pub use bench::{run_benchmark, BenchCell, BenchOp, BenchOptions, BenchReport, BenchScheme};
pub use config::{ConfigError, ExperimentConfig, ExperimentScheme, TaskSpec};
pub use experiment::{
    run_experiment, run_experiment_with_faults, ExperimentError, ExperimentRun, RoundReport,
};
pub use selftest::{selftest, Check};
pub use task::SyntheticTask;
pub use transport::{simulate_transport, DropRule, SimTransport, Transcript, TranscriptEntry};
