use clap::Parser;
use pairsim_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pairsim: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
