//! Training runs, evaluation, capacity probes and sweeps.

pub mod config;
mod eval;
mod probes;
mod sweeps;
mod train;

pub use config::{DataRegime, EvalConfig, ExperimentConfig, ModelSpec, NamedSpec, Reduction};
pub use eval::{evaluate, predict, Bucket, EvalResult, ThresholdMode};
pub use probes::{
    capacity_probe, falsify_capacity, falsify_predictor, long_chain_candidates, probe_table, CapacityProbe,
    Counterexample, ProbeRow, MIN_BUCKET, RELIABLE_ACC,
};
pub use sweeps::{
    data_lever_sweep, rho_config, rho_sweep, spearman, write_lever_sweep, write_rho_sweep, LeverPoint, RhoPoint,
};
pub use train::{
    content_hash, describe_row, mean_loss, metrics_csv, metrics_header, train, train_with, LayerShares, MetricsRow,
    NamedEval, Summary, TrainOutcome,
};
