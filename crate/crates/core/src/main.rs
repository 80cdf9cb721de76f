use clap::Parser;
use occusim::cli;

fn main() {
    let args = cli::Cli::parse();
    if let Err(e) = cli::run(args) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
