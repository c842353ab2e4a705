use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = zslforge_cli::Cli::parse();
    match zslforge_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("zslforge: error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}
