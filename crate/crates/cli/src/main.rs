use clap::Parser;

fn main() {
    std::process::exit(pestov_lab::run(pestov_lab::Cli::parse()));
}
