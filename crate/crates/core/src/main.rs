use clap::Parser;
use movingdom::cli::{execute, Cli};

fn main() {
    let level = std::env::var("MOVINGDOM_LOG").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    std::process::exit(execute(cli).code());
}
