use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use sosvec::cli::{run, RunConfig};
use sosvec::Error;

fn emit(config: &RunConfig, text: &str) -> Result<(), Error> {
    match &config.command.common().out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let config = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = run(&config).and_then(|art| {
        emit(&config, &art.text)?;
        art.deferred.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
