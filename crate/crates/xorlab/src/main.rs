use clap::Parser;

fn main() {
    std::process::exit(xorlab::cli::run(xorlab::cli::Cli::parse()));
}
