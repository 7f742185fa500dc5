use clap::Parser;
use umbra::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("UMBRA_LOG", "error")).init();
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}
