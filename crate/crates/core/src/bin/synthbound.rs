use clap::Parser;
use synthbound::cli::{run, RunConfig};

fn main() {
    std::process::exit(run(&RunConfig::parse()));
}
