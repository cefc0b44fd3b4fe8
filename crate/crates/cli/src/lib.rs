//! The `rc3d` command line: each subcommand reads one flat configuration
//! (file plus overrides), echoes it to its output directory and runs.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;

pub use config::{RunConfig, KEYS};
pub use error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GenData,
    Train,
    TrainGan,
    Eval,
    Gradcheck,
    FlowViz,
}

impl Command {
    pub fn execute(self, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
        match self {
            Self::GenData => commands::gen_data(cfg, out),
            Self::Train => commands::train(cfg, out),
            Self::TrainGan => commands::train_gan_cmd(cfg, out),
            Self::Eval => commands::eval(cfg, out),
            Self::Gradcheck => commands::gradcheck(cfg, out),
            Self::FlowViz => commands::flow_viz(cfg, out),
        }
    }
}
