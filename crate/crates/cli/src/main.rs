use clap::Parser;
use execution_game_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.diagnostic());
        std::process::exit(e.exit_code());
    }
}
