use std::process::ExitCode;

use clap::Parser;
use survey_design::io::{self, config, Cli};

const USAGE: u8 = 1;
const INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = config::config_from_cli(cli, std::env::var(config::OUTDIR_ENV).ok())
        .and_then(|c| io::run(&c));
    match result {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for file in &summary.files {
                eprintln!("wrote {}", file.display());
            }
            if summary.infeasible.is_empty() {
                ExitCode::SUCCESS
            } else {
                for reason in &summary.infeasible {
                    eprintln!("infeasible: {reason}");
                }
                ExitCode::from(INFEASIBLE)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_infeasible() { INFEASIBLE } else { USAGE })
        }
    }
}
