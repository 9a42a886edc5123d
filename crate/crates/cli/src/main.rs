use clap::Parser;

fn main() {
    std::process::exit(sofa_cli::app::run(sofa_cli::app::Cli::parse()));
}
