//! Command-line surface over the covfuse library: the fusion bound demo,
//! single simulations, and Monte-Carlo experiments with CSV outputs.

use thiserror::Error;

pub mod commands;
pub mod demo;
pub mod output;

pub use commands::{
    cmd_fusion_demo, cmd_montecarlo, cmd_simulate, CommandReport, FusionDemoOpts, MontecarloOpts,
    SimulateOpts,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] covfuse::scenario::ScenarioError),
}
