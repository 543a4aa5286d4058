//! Environments, configurations, profiles and the experiment runner.

pub mod config;
pub mod runner;
pub mod tables;

pub use config::{ExperimentFile, ExperimentSpec, MixtureSource};
pub use runner::{
    mixture_for, mixture_seed, run_meta, read_results, run_experiment, run_experiment_to_disk, run_one, run_seed,
    sample_mixture, thread_pool, trial_seed, write_results, ExperimentReport, Manifest, OutputPaths,
};
pub use tables::{all_cells, Cell, Environment, MarketConfig, StrategyProfile};
