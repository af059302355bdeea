use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = qiup_cli::Cli::parse();
    match qiup_cli::run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", serde_json::json!({"kind": e.kind(), "message": e.to_string()}));
            ExitCode::from(e.exit_code())
        }
    }
}
