//! `iqt` command-line interface: phantom generation, segmentation, LF
//! simulation, training, enhancement, evaluation, and the one-shot
//! desk-scale reproduction pipeline.
//!
//! Exit codes: 0 success, 1 usage/parameter error, 2 data/format error,
//! 3 numeric/training error.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use iqt::IqtError;

mod commands;
mod provenance;

#[derive(Parser)]
#[command(name = "iqt", version, about = "Low-field MRI enhancement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic brain phantom and its membership maps.
    Phantom(commands::PhantomArgs),
    /// Fit a 3-class Gaussian mixture and write GM/WM/CSF membership maps.
    Segment(commands::SegmentArgs),
    /// Measure per-tissue SNR on one or more volumes.
    EstimateSnr(commands::EstimateSnrArgs),
    /// Simulate a low-field acquisition from a high-field volume.
    Simulate(commands::SimulateArgs),
    /// Train the anisotropic super-resolution network on paired volumes.
    Train(commands::TrainArgs),
    /// Enhance a low-field volume with a trained model.
    Enhance(commands::EnhanceArgs),
    /// Compare enhanced and baseline volumes against a reference.
    Evaluate(commands::EvaluateArgs),
    /// Run the full desk-scale pipeline: phantoms, simulation, training,
    /// enhancement, evaluation.
    ReproDesk(commands::ReproDeskArgs),
}

fn exit_code_for(e: &IqtError) -> u8 {
    match e {
        IqtError::Parameter(_) | IqtError::Geometry(_) | IqtError::Spec(_) => 1,
        IqtError::Format(_)
        | IqtError::Unsupported(_)
        | IqtError::Shape(_)
        | IqtError::Data(_)
        | IqtError::Io(_) => 2,
        IqtError::Numeric(_) | IqtError::Training(_) | IqtError::Collapse { .. } => 3,
        IqtError::SimStep { source, .. } => exit_code_for(source),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    let result = match cli.command {
        Command::Phantom(args) => commands::phantom(args),
        Command::Segment(args) => commands::segment(args),
        Command::EstimateSnr(args) => commands::estimate_snr(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Train(args) => commands::train(args),
        Command::Enhance(args) => commands::enhance(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::ReproDesk(args) => commands::repro_desk(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iqt: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
