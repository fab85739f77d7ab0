//! `deepck`: depth scoring, evidence classification and knowledge propagation from the command line.

use std::process::ExitCode;

use clap::Command;

mod commands;
mod config;
mod error;
mod plot;
mod run;

use commands::COMMANDS;
use config::RunConfig;

fn cli() -> Command {
    COMMANDS.iter().fold(
        Command::new("deepck")
            .version(env!("CARGO_PKG_VERSION"))
            .about("Measure commonsense depth, mine deep knowledge and propagate it over a taxonomy")
            .subcommand_required(true)
            .arg_required_else_help(true),
        |cmd, (spec, _)| cmd.subcommand(spec.clap()),
    )
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let (spec, handler) = COMMANDS.iter().find(|(s, _)| s.name == name).expect("every subcommand has a handler");
    let result = RunConfig::resolve(spec, sub).and_then(|config| handler(&config));
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("deepck {name}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
