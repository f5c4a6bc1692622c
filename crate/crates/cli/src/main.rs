mod data;
mod evaluate;
mod fit;
mod io;
mod model;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use singer_core::ErrorClass;

/// Singing-head motion pipeline: data prep, training, sampling, fitting and scoring.
#[derive(Parser)]
#[command(name = "singer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract log-mel features from a WAV file onto the motion frame grid.
    Features(model::FeaturesArgs),
    /// Cut recordings into fixed-length clips.
    Segment(data::SegmentArgs),
    /// Seeded train/val/test partition.
    Split(data::SplitArgs),
    /// Plan square crops from a landmark track.
    Cropplan(data::CropPlanArgs),
    /// Train the motion model.
    Train(model::TrainArgs),
    /// Sample motion for an audio clip.
    Generate(model::GenerateArgs),
    /// Fit head parameters to 2D landmark tracks.
    Fit(fit::FitArgs),
    /// Score generated motion or rendered frames.
    Evaluate(evaluate::EvaluateArgs),
}

/// Argument combinations that clap cannot express.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<singer_core::Error>() {
            return match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Features(a) => model::features(a),
        Command::Segment(a) => data::segment(a),
        Command::Split(a) => data::split(a),
        Command::Cropplan(a) => data::crop_plan(a),
        Command::Train(a) => model::train(a),
        Command::Generate(a) => model::generate(a),
        Command::Fit(a) => fit::fit(a),
        Command::Evaluate(a) => evaluate::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
