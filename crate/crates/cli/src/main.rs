use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rc3d_cli::{Command, RunConfig, KEYS};

#[derive(Parser)]
#[command(name = "rc3d", version, about = "Spatio-temporal gesture classifiers on synthetic RGB-D video")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the synthetic dataset and its split manifest.
    GenData(ConfigArgs),
    /// Train a classifier.
    Train(ConfigArgs),
    /// Train the depth generator and its critic.
    TrainGan(ConfigArgs),
    /// Evaluate a classifier checkpoint on both splits.
    Eval(ConfigArgs),
    /// Finite-difference check of every op, block and toy network.
    Gradcheck(ConfigArgs),
    /// Write motion images for one clip.
    FlowViz(ConfigArgs),
    /// List the configuration keys.
    Keys,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::GenData(a) => (Command::GenData, a),
        Cmd::Train(a) => (Command::Train, a),
        Cmd::TrainGan(a) => (Command::TrainGan, a),
        Cmd::Eval(a) => (Command::Eval, a),
        Cmd::Gradcheck(a) => (Command::Gradcheck, a),
        Cmd::FlowViz(a) => (Command::FlowViz, a),
        Cmd::Keys => {
            for (k, doc) in KEYS {
                println!("{k:<20} {doc}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let result = RunConfig::load(args.config.as_deref(), &args.set).and_then(|cfg| command.execute(&cfg, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rc3d: error: {}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
