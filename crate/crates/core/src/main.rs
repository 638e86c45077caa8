// SPDX-License-Identifier: MIT OR Apache-2.0

use std::process::ExitCode;

use aglb::cli::{run, Cli};
use aglb::Error;
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let paths = match &e {
                Error::Config { paths } => paths.clone(),
                _ => Vec::new(),
            };
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "paths": paths });
            eprintln!("{body}");
            ExitCode::from(if matches!(e, Error::Config { .. } | Error::Argument(_)) { 3 } else { 1 })
        }
    }
}
