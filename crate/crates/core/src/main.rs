use cgbound::cli::{Cli, RunStatus};
use clap::Parser;

fn main() {
    // clap exits with code 2 on usage/parse errors
    let cli = Cli::parse();
    let code = match cli.run() {
        Ok(RunStatus::Success) => 0,
        Ok(RunStatus::PartialFailure) => 1,
        Err((code, e)) => {
            eprintln!("error: {e}");
            code
        }
    };
    std::process::exit(code);
}
