use std::path::PathBuf;
use std::process::ExitCode;

use birdsim_cli::sweep::cmd_sweep;
use birdsim_cli::{cmd_feasibility, cmd_run, feasibility_report, parse_feasibility, summary_line, Failure};
use birdsim_core::output::OutputFormat;
use clap::Parser;
use log::LevelFilter;

/// Discrete-event UAV offloading simulator.
///
/// With --feasibility, reports whether an uplink bitrate is sustainable in a
/// band. With --sweep, runs a parameter sweep. Otherwise runs one scenario.
#[derive(Debug, Parser)]
#[command(name = "birdsim", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH", required_unless_present = "feasibility")]
    scenario: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", required_unless_present = "feasibility")]
    out: Option<PathBuf>,
    /// Which tables to write; the trace is always written.
    #[arg(long, value_name = "FORMAT", default_value = "both", value_parser = ["csv", "summary", "both"])]
    format: String,
    /// Sweep specification (TOML).
    #[arg(long, value_name = "SPECFILE", conflicts_with_all = ["seed", "feasibility"])]
    sweep: Option<PathBuf>,
    /// Uplink feasibility check, e.g. "25,high".
    #[arg(long, value_name = "BITRATE,BAND")]
    feasibility: Option<String>,
    /// Required headroom in Mbps for --feasibility.
    #[arg(long, value_name = "MBPS", default_value_t = 0.0, requires = "feasibility")]
    margin: f64,
}

fn log_level() -> LevelFilter {
    match std::env::var("BIRDSIM_LOG").as_deref() {
        Ok("info") => LevelFilter::Info,
        Ok("trace") => LevelFilter::Trace,
        _ => LevelFilter::Off,
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(arg) = &cli.feasibility {
        let (rate, band) = parse_feasibility(arg)?;
        println!("{}", feasibility_report(&cmd_feasibility(rate, band, cli.margin)));
        return Ok(());
    }
    let scenario = cli.scenario.expect("required by clap");
    let out = cli.out.expect("required by clap");
    if let Some(spec) = &cli.sweep {
        let (rows, agg) = cmd_sweep(&scenario, spec, &out)?;
        println!("sweep: {} runs, {} aggregate rows written to {}", rows.len(), agg.len(), out.display());
        return Ok(());
    }
    let format: OutputFormat = cli.format.parse().expect("restricted by clap");
    let summary = cmd_run(&scenario, cli.seed, &out, format)?;
    println!("{}", summary_line(&summary));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log_level()).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
