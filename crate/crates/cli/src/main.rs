//! `phasegate`: spectra, entanglement, gate design and gate simulation for
//! two capacitively coupled phase qubits.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasegate_core::RampShape;

#[derive(Parser, Debug)]
#[command(name = "phasegate", version, about = "Coupled phase-qubit spectra and gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Energy levels E0..E5 along a detuning sweep, plus avoided crossings.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Entanglement entropy of levels 1, 3, 4, 5 along a detuning sweep.
    Entangle {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Design, simulate and score a gate.
    Gate {
        #[arg(value_enum)]
        kind: GateArg,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        schedule: ScheduleArgs,
        /// Time step in 1/w0.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Emit a gate schedule from the static spectrum, without dynamics.
    Design {
        #[arg(value_enum)]
        kind: GateArg,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        schedule: ScheduleArgs,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GateArg {
    /// Controlled-phase gate at the 4-5 crossing.
    U1,
    /// Swaplike gate at the symmetric point.
    U2,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metastable level count (retunes J0 for a physical config).
    #[arg(long)]
    pub ns: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Reference bias current J0 / I_c.
    #[arg(long)]
    pub j0: Option<f64>,
    /// Grid points per axis (power of two).
    #[arg(long, default_value_t = 128)]
    pub grid: usize,
    /// Plasma frequency used for physical units when the config has none.
    #[arg(long)]
    pub plasma_ghz: Option<f64>,
    /// Repeat at doubled grid (spectra) or halved dt (gates) and report the change.
    #[arg(long)]
    pub check_convergence: bool,
    #[arg(long, default_value = "phasegate-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[arg(long, default_value_t = -0.12, allow_negative_numbers = true)]
    pub eps_start: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub eps_stop: f64,
    #[arg(long, default_value_t = 0.002)]
    pub eps_step: f64,
    /// Explicit detunings, replacing the start/stop/step grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eps: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScheduleArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub eps_a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eps_b: Option<f64>,
    /// Ramp time in 1/w0.
    #[arg(long)]
    pub tau_r: Option<f64>,
    /// Interaction time in 1/w0.
    #[arg(long)]
    pub tau_i: Option<f64>,
    #[arg(long, value_enum)]
    pub ramp: Option<RampArg>,
    /// Oscillation count of the swaplike plateau.
    #[arg(long, default_value_t = 2)]
    pub k: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RampArg {
    Linear,
    RaisedCosine,
}

impl From<RampArg> for RampShape {
    fn from(r: RampArg) -> Self {
        match r {
            RampArg::Linear => RampShape::Linear,
            RampArg::RaisedCosine => RampShape::RaisedCosine,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Spectrum { common, sweep } => commands::spectrum(&common, &sweep),
        Command::Entangle { common, sweep } => commands::entangle(&common, &sweep),
        Command::Gate {
            kind,
            common,
            schedule,
            dt,
        } => commands::gate(kind, &common, &schedule, dt),
        Command::Design { kind, common, schedule } => commands::design(kind, &common, &schedule),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
