use clap::Parser;

use bliss_cli::commands::{run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(e) = run(cli, argv) {
        eprintln!("bliss: {e}");
        std::process::exit(e.exit_code());
    }
}
