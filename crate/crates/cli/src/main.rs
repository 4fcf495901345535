mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Exit status for an error chain: 2 bad configuration, 3 data problems,
/// 4 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<rcdetect::Error>() {
            return match e {
                rcdetect::Error::Config(_) => 2,
                rcdetect::Error::Data(_)
                | rcdetect::Error::Load { .. }
                | rcdetect::Error::Io { .. }
                | rcdetect::Error::Image { .. }
                | rcdetect::Error::Json { .. }
                | rcdetect::Error::EmptyMask
                | rcdetect::Error::Frame { .. } => 3,
                _ => 4,
            };
        }
        if cause.downcast_ref::<commands::EmptySplit>().is_some() {
            return 3;
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Pretrain(a) => commands::pretrain(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
