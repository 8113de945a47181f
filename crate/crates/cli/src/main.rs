use clap::Parser;

use icla_cli::commands::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(err) = commands::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(icla_cli::exit_code(&err));
    }
}
