use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use vio_geom_cli::{run, Cli, CommandOutcome, ExitStatus};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            eprint!("{e}");
            let o = CommandOutcome::failure("usage", ExitStatus::Usage, "arguments", &e.kind().to_string());
            print!("{}", o.summary.to_text());
            return ExitCode::from(ExitStatus::Usage.code() as u8);
        }
    };
    let out = run(&cli);
    for n in &out.outcome.notes {
        eprintln!("{n}");
    }
    match &out.payload {
        Some(p) => {
            print!("{p}");
            for line in out.outcome.summary.to_text().lines() {
                println!("# {line}");
            }
        }
        None => print!("{}", out.outcome.summary.to_text()),
    }
    ExitCode::from(out.outcome.status.code() as u8)
}
