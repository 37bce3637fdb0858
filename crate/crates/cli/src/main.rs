use clap::Parser;

fn main() {
    std::process::exit(gibbsgraph::run(gibbsgraph::Cli::parse()));
}
