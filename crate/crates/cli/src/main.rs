use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use sitgraph_cli::{run, Cli, RunOutput};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: cli: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(RunOutput::Config(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(RunOutput::Done { manifest, summary }) => {
            println!("{}: {summary} (manifest {})", manifest.command, manifest.id);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.one_line());
            ExitCode::FAILURE
        }
    }
}
