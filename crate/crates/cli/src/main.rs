use std::process::ExitCode;

use clap::Parser;
use ldx_core::{Error, ErrorClass};

mod cli;
mod commands;
mod report;

use cli::{Cli, Command};

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::RangeOrModel => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Scale => 5,
    }
}

fn run(cli: &Cli) -> ldx_core::Result<()> {
    let model = commands::load_model(&cli.common)?;
    let report = match cli.command {
        Command::Rate => commands::rate(&model, &cli.common)?,
        Command::Expand => commands::expand(&model, &cli.common)?,
        Command::Firstorder => commands::firstorder(&model, &cli.common)?,
        Command::Validate => commands::validate(&model, &cli.common)?,
        Command::Diagnose => commands::diagnose(&model, &cli.common)?,
    };
    report.emit(cli.common.format, cli.common.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ldx: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
