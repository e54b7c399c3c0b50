use clap::Parser;
use qwalk_cli::config::{resolve_cli, Cli};
use qwalk_cli::run::run;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes; everything else is a
            // configuration error (exit 2, clap's own convention).
            e.exit();
        }
    };
    let code = match resolve_cli(cli).and_then(|config| run(&config)) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            for file in &outcome.files {
                eprintln!("wrote {}", file.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
