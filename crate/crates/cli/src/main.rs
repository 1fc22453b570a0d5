use clap::Parser;
use ngmres_cli::app::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
