//! `espressivo`: the whole score-to-audio pipeline behind one executable.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
//! Every failure prints exactly one `error: <kind>: <message>` line on
//! stderr first, so callers can parse outcomes without scraping.

mod commands;
mod failure;

use clap::Parser;

use crate::failure::Failure;

#[derive(Parser)]
#[command(
    name = "espressivo",
    version,
    about = "Expressive score-to-audio synthesis: dataset alignment, model training, \
             mel synthesis, and Griffin-Lim inversion"
)]
struct Cli {
    #[command(subcommand)]
    command: commands::Command,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here as non-error "errors".
            if !err.use_stderr() {
                let _ = err.print();
                std::process::exit(0);
            }
            let raw = err.to_string();
            let first = raw.lines().next().unwrap_or("invalid invocation");
            let message = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", Failure::Usage(message.to_string()).report_line());
            eprintln!("run `espressivo --help` for usage");
            std::process::exit(1);
        }
    };
    if let Err(failure) = commands::run(cli.command) {
        eprintln!("{}", failure.report_line());
        std::process::exit(failure.exit_code());
    }
}
