use std::process::ExitCode;

use clap::Parser;
use ordcost::args::Cli;
use ordcost::io::write_json;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let exec = ordcost::execute(cli, argv);

    let mut code = exec.exit_code();
    if let Some(path) = &exec.output.report {
        if let Err(e) = write_json(path, &exec.report) {
            eprintln!("error: could not write report: {e}");
            code = 1;
        }
    }
    if exec.output.json {
        match serde_json::to_string_pretty(&exec.report) {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("error: {e}");
                code = 1;
            }
        }
    } else {
        print!("{}", exec.summary);
    }
    if let Some(e) = &exec.report.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(code as u8)
}
