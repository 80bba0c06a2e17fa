//! Instance generation, experiment runs and the `slope-lab` command line.

pub mod cli;
pub mod config;
pub mod generate;
pub mod run;

pub use config::{ExperimentConfig, ExplicitInstance, OutputPaths, Sweep};
pub use generate::{generate, Family, Generated, InstanceSpec, PerturbationKind};
pub use run::{plan, sweep, write_sweep, RunOptions, Summary, SweepResult};
