use clap::Parser;
use rdgeo_cli::args::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage errors are input errors; help and version are not errors
            let _ = e.print();
            std::process::exit(if e.use_stderr() { rdgeo_cli::EXIT_ERROR } else { 0 });
        }
    };
    let result = rdgeo_cli::run(&cli);
    match &result {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
        }
        Err(e) => eprintln!("error: {e:#}"),
    }
    std::process::exit(rdgeo_cli::exit_code(&result));
}
