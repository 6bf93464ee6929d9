mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::Output;

fn run(cli: &Cli) -> Result<()> {
    if let Some(k) = cli.global.threads {
        anyhow::ensure!(k > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring the thread pool")?;
    }
    let out = match &cli.command {
        Command::Evaluate(a) => commands::evaluate_cmd(a, &cli.global)?,
        Command::Optimize(a) => commands::optimize_cmd(a, &cli.global)?,
        Command::Bandwidth(a) => commands::bandwidth_cmd(a, &cli.global)?,
        Command::Simulate(a) => commands::simulate_cmd(a, &cli.global)?,
        Command::Replicate(a) => commands::replicate_cmd(a, &cli.global)?,
    };
    let bytes = match out {
        Output::Json(v) => {
            let mut b = serde_json::to_vec_pretty(&v)?;
            b.push(b'\n');
            b
        }
        Output::Csv(b) => b,
    };
    match &cli.global.output {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(&bytes).context("writing to stdout")?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_else(|_| format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
