use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = qdispatch_cli::Cli::parse();
    match qdispatch_cli::execute(&cli) {
        Ok(dirs) => {
            for d in dirs {
                println!("{}", d.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
