//! Experiment suites built from the other modules: multi-step prediction
//! benchmarks, the sample-size sweep, lifted-LQR cost tables and the
//! initial-condition cost map.
//!
//! Every suite is a pure function of its models, datasets and seeds. Work
//! items may run on several threads (see [`worker_count`]); results are
//! always aggregated in input order, so outputs do not depend on the thread
//! count.

mod control;
mod methods;
mod parallel;
mod prediction;

pub use control::{
    control_benchmark, cost_sweep, costs_csv, ControlOutcome, ControlTask, CostMap, SweepGrid,
};
pub use methods::{train_method, Method, MethodConfig, Oracle, Predictor, TrainedModel};
pub use parallel::{parallel_map, worker_count, THREADS_ENV};
pub use prediction::{
    prediction_benchmark, sample_efficiency, table1_csv, trajectory_errors, EfficiencyPoint,
    MethodErrors, PredictionReport, SeedErrors, StepBudget, ERROR_CAP,
};
