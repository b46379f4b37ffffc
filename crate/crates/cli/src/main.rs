use std::io::Write;

use agqr::cli::{run, Cli, Command};
use clap::Parser;
use tracing_subscriber::EnvFilter;

fn main() {
    let cli = Cli::parse();
    let default_level = match cli.command {
        Command::Train(_) | Command::Serve(_) => "info",
        _ => "warn",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("AGQR_LOG").unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let result = run(cli, &mut stdin.lock(), &mut stdout.lock());
    if let Err(e) = result {
        let _ = writeln!(std::io::stderr(), "{}", e.to_json_line());
        std::process::exit(e.exit_code());
    }
}
