mod args;
mod commands;
mod error;
mod io;

use clap::Parser;

use args::{Cli, Command};
use commands::Context;
use error::CliResult;

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Track(a) => commands::track_cmd(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Train(a) => commands::train_cmd(&ctx, a),
        Command::Classify(a) => commands::classify_cmd(&ctx, a),
        Command::Fit(a) => commands::fit_cmd(&ctx, a),
        Command::Pipeline(a) => commands::pipeline_cmd(&ctx, a),
        Command::Evaluate(a) => commands::evaluate_cmd(&ctx, a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
