mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "loom",
    version,
    about = "Cycle and footprint models for bit-serial CNN accelerators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-layer cycles, speedups and traffic for each engine.
    Simulate(SimulateArgs),
    /// Weight and activation bits read per layer, with savings over 16 bits.
    Footprint(SimulateArgs),
    /// Speedup over the baseline across peak compute budgets.
    Sweep(SimulateArgs),
    /// Static versus runtime-trimmed activation precisions.
    Dynamic(SimulateArgs),
    /// Show the built-in networks.
    ListNetworks(ListArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DynamicMode {
    Off,
    Synthetic,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct CommonOutput {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Built-in names or network files, comma separated; `all` selects every
    /// built-in network.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    networks: Vec<String>,
    /// Engines among dpnn, loom, stripes, dstripes.
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<String>>,
    /// Activation bits per cycle on the bit-serial grid.
    #[arg(long, default_value_t = 1)]
    bits: u8,
    /// Precision profile: 100 or 99.
    #[arg(long, default_value = "100")]
    tier: String,
    /// Peak 16b MACs per cycle of the baseline; a list for `sweep`.
    #[arg(long = "peak-macs", value_delimiter = ',')]
    peak_macs: Option<Vec<u64>>,
    #[arg(long, value_enum, default_value_t = DynamicMode::Off)]
    dynamic: DynamicMode,
    /// Seed for synthetic activations.
    #[arg(long)]
    seed: Option<u64>,
    /// Synthetic distribution: uniform, half-range or clipped-normal[:sigma].
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Directory of recorded activations (`<dir>/<network>/<layer>.lpk`).
    #[arg(long)]
    activations: Option<std::path::PathBuf>,
    #[command(flatten)]
    output: CommonOutput,
}

#[derive(Debug, Args)]
struct ListArgs {
    #[command(flatten)]
    output: CommonOutput,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => {
            commands::simulate(&config::resolve(args, config::Mode::Simulate)?)
        }
        Command::Footprint(args) => {
            commands::footprint(&config::resolve(args, config::Mode::Footprint)?)
        }
        Command::Sweep(args) => commands::sweep(&config::resolve(args, config::Mode::Sweep)?),
        Command::Dynamic(args) => commands::dynamic(&config::resolve(args, config::Mode::Dynamic)?),
        Command::ListNetworks(args) => commands::list_networks(&args.output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
