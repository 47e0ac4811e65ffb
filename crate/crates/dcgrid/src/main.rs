//! Command-line front end: network reduction, stability classification,
//! time-domain simulation, and parameter sweeps over JSON scenario files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use dcgrid::report;
use dcgrid::scenario::{self, MethodChoice};
use dcgrid::sim;
use dcgrid::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dcgrid",
    version,
    about = "Droop-controlled DC microgrid analysis: reduction, stability, simulation, sweeps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eliminate load nodes and print the reduced conductance matrix
    Reduce(IoArgs),
    /// Classify the cooperative closed loop and predict its steady state
    Stability(IoArgs),
    /// Integrate the staged experiment and summarize the terminal state
    Simulate {
        #[command(flatten)]
        io: IoArgs,
        /// Also write the full trajectory as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Override the scenario's integrator
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
    },
    /// Classify the loop across one uniformly applied parameter
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        /// Which parameter to sweep: alpha, beta, r, or tau
        #[arg(long)]
        param: String,
        /// Comma-separated parameter values
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
}

#[derive(Args)]
struct IoArgs {
    /// Scenario JSON file
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Rk4,
}

impl From<MethodArg> for MethodChoice {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Exact => MethodChoice::Exact,
            MethodArg::Rk4 => MethodChoice::Rk4,
        }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Reduce(io) => {
            let ls = scenario::load_scenario(&read_input(&io.input)?)?;
            let rep = report::reduce_report(&ls);
            write_output(io.out.as_deref(), &report::render_json(&rep))
        }
        Cmd::Stability(io) => {
            let ls = scenario::load_scenario(&read_input(&io.input)?)?;
            let rep = report::stability_report(&ls)?;
            write_output(io.out.as_deref(), &report::render_json(&rep))
        }
        Cmd::Simulate { io, csv, method } => {
            let ls = scenario::load_scenario(&read_input(&io.input)?)?;
            let sim_s = ls.to_sim_scenario(method.map(Into::into))?;
            let traj = sim::run_scenario(&sim_s)?;
            let summary = report::simulate_summary(&ls, &traj, sim_s.method)?;
            write_output(io.out.as_deref(), &report::render_json(&summary))?;
            if let Some(csv_path) = csv {
                write_output(Some(&csv_path), &sim::to_csv(&traj))?;
            }
            Ok(())
        }
        Cmd::Sweep { io, param, values } => {
            let ls = scenario::load_scenario(&read_input(&io.input)?)?;
            let param: report::SweepParam = param.parse()?;
            let csv = report::sweep_csv(&ls, param, &values)?;
            write_output(io.out.as_deref(), &csv)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e {
            Error::InvalidInput(_) => 2,
            Error::NumericFailure(_) => 3,
        };
        std::process::exit(code);
    }
}
