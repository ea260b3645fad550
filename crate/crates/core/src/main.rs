use clap::Parser;
use qv_core::cli::{run, Cli};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    if let Err(e) = run(cli, &args) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
