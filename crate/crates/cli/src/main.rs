//! `netzero`: run scenarios, sensitivity sweeps and figure tables from the command line.
//!
//! Exit status is 0 on success, 2 when a cap cannot be met and 1 for any other error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use netzero_core::report::{emit_figure_data, run_scenario, run_sweep, RunBundle, SweepSpec};
use netzero_core::Error;

#[derive(Parser)]
#[command(name = "netzero", version, about = "Two-region net-zero pathway model with carbon removal")]
struct Cli {
    /// Default output root when `--out` is omitted.
    #[arg(long, env = "NETZERO_OUT_DIR", global = true, default_value = "out")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its tables.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a base scenario and its one-at-a-time variants, writing `tornado.csv`.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
    /// Build plot-ready figure tables from finished run directories.
    Figures {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_out(root: &Path, file: &Path) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    root.join(stem)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, out } => {
            let out = out.unwrap_or_else(|| default_out(&cli.out_root, &scenario));
            let report = run_scenario(&scenario, &out)?;
            let s = &report.summary;
            println!(
                "{}: {} 2060 DAC {:.3} Gt, price ${:.1}/t, removals {:.3} Gt; 2100 anomaly {:.3} K -> {}",
                report.scenario,
                s.focus_region,
                s.dac_2060,
                s.carbon_price_2060,
                s.negative_emissions_2060,
                s.anomaly_2100,
                out.display()
            );
        }
        Command::Sweep { spec, out, workers } => {
            let out = out.unwrap_or_else(|| default_out(&cli.out_root, &spec));
            let sweep = SweepSpec::load(&spec)?;
            let outcome = run_sweep(&sweep, &out, workers)?;
            println!("base {} = {:.4}", outcome.metric.name(), outcome.base_value);
            for row in &outcome.rows {
                println!("{:<28} {:>10.4} {:>+8.1}%", row.variant, row.value, row.percent_change);
            }
            for (name, message) in &outcome.failures {
                eprintln!("variant `{name}` failed: {message}");
            }
            println!("tornado table -> {}", out.join("tornado.csv").display());
        }
        Command::Figures { runs, out } => {
            let out = out.unwrap_or_else(|| cli.out_root.join("figures"));
            let bundles = runs
                .iter()
                .map(|dir| RunBundle::load(dir).with_context(|| format!("reading run directory {}", dir.display())))
                .collect::<Result<Vec<_>>>()?;
            for path in emit_figure_data(&bundles, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

/// Joins the error chain, dropping causes that a wrapper already printed inline.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_infeasibility() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
