use clap::Parser;
use lpgrad_cli::cli::Cli;

fn main() {
    std::process::exit(lpgrad_cli::commands::main_with(Cli::parse()));
}
