//! Batch front end for the `qmeas` library.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

use config::{parse_four, parse_vector, Command, ExperimentConfig, Format, Rule};

pub const EXIT_OK: u8 = 0;
pub const EXIT_SELFTEST: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad input, unknown command or unwritable output.
    Config(String),
    /// Size guards, failed convergence and failed self-consistency checks.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qmeas::Error> for CliError {
    fn from(e: qmeas::Error) -> Self {
        use qmeas::Error as E;
        match e {
            E::DimensionMismatch { .. }
            | E::NotHermitian { .. }
            | E::TraceNotUnit { .. }
            | E::NotPositive { .. }
            | E::InvalidSubsystem(_)
            | E::InvalidParameter(_)
            | E::InvalidPointer(_)
            | E::UndefinedBranch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qmeas", version, about = "Dephasing, registration and measurement-interpretation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Transverse signal of the tested spin against its Gaussian envelope.
    Truncate(Flags),
    /// Recurrence peaks and their damping by coupling spread.
    Recur(Flags),
    /// k-spin correlations taking over the transverse signal.
    Cascade(Flags),
    /// Mean-field magnetization, barrier field and pointer limit.
    Register(Flags),
    /// Final joint state of spin and toy pointer, with its subensembles.
    Finalstate(Flags),
    /// Born weights and a seeded ensemble of runs.
    Born(Flags),
    /// Lüders, von Neumann or unread reduction of the tested spin.
    Reduce(Flags),
    /// Two incompatible pure-state decompositions of a qubit state.
    Ambiguity(Flags),
    /// Dimension of the dispersionless observables of a state.
    Dispersionless(Flags),
    /// CHSH value of a two-spin state.
    Chsh(Flags),
    /// Whether a correlator table admits a joint distribution.
    Feasible(Flags),
    /// Analytic dephasing results against brute-force evolution.
    OracleCheck(Flags),
    /// Undecaying off-diagonal block next to the decaying observables.
    AppcReport(Flags),
}

impl Sub {
    fn split(self) -> (Command, Flags) {
        match self {
            Sub::Truncate(f) => (Command::Truncate, f),
            Sub::Recur(f) => (Command::Recur, f),
            Sub::Cascade(f) => (Command::Cascade, f),
            Sub::Register(f) => (Command::Register, f),
            Sub::Finalstate(f) => (Command::Finalstate, f),
            Sub::Born(f) => (Command::Born, f),
            Sub::Reduce(f) => (Command::Reduce, f),
            Sub::Ambiguity(f) => (Command::Ambiguity, f),
            Sub::Dispersionless(f) => (Command::Dispersionless, f),
            Sub::Chsh(f) => (Command::Chsh, f),
            Sub::Feasible(f) => (Command::Feasible, f),
            Sub::OracleCheck(f) => (Command::OracleCheck, f),
            Sub::AppcReport(f) => (Command::AppcReport, f),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Flags {
    /// TOML config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run the exactly known cases for this command and exit.
    #[arg(long)]
    pub selftest: bool,

    /// Number of magnet spins.
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Mean coupling.
    #[arg(long)]
    pub g: Option<f64>,
    /// RMS coupling spread relative to g.
    #[arg(long)]
    pub delta_g_rel: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Magnet exchange coupling.
    #[arg(long = "J")]
    pub j: Option<f64>,
    /// Temperature.
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Bloch vector: `+x`, `-z`, ... or `a,b,c`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
    pub r0: Option<[f64; 3]>,

    /// Grid end in units of τ.
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub nu_max: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Decreasing source scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,

    /// `singlet`, `product` or `werner:<p>`.
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long)]
    pub runs: Option<u64>,
    #[arg(long, value_enum)]
    pub rule: Option<Rule>,
    /// Direction of the tested spin component.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
    pub axis: Option<[f64; 3]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
    pub dir1: Option<[f64; 3]>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
    pub dir2: Option<[f64; 3]>,
    /// Eigenvalues of a diagonal state, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub spectrum: Option<Vec<f64>>,
    /// `E_zu,E_zv,E_xu,E_xv`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_four)]
    pub correlators: Option<[f64; 4]>,
    /// `<z>,<x>,<u>,<v>`.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_four)]
    pub marginals: Option<[f64; 4]>,
    /// External field of the mean-field equation.
    #[arg(long, allow_hyphen_values = true)]
    pub field: Option<f64>,
    #[arg(long)]
    pub oracle_tol: Option<f64>,
    #[arg(long)]
    pub window_tol: Option<f64>,
}

impl Flags {
    fn to_config(&self, command: Command) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(command);
        c.model.n = self.n;
        c.model.g = self.g;
        c.model.delta_g_rel = self.delta_g_rel;
        c.model.seed = self.seed;
        c.model.j = self.j;
        c.model.t = self.t;
        c.model.r0 = self.r0;
        c.grid.t_max = self.t_max;
        c.grid.points = self.points;
        c.grid.nu_max = self.nu_max;
        c.grid.k_max = self.k_max;
        c.grid.scales.clone_from(&self.scales);
        c.output.path.clone_from(&self.out);
        c.output.format = self.format;
        c.tolerance.oracle = self.oracle_tol;
        c.tolerance.window = self.window_tol;
        c.inputs.state.clone_from(&self.state);
        c.inputs.runs = self.runs;
        c.inputs.rule = self.rule;
        c.inputs.axis = self.axis;
        c.inputs.dir1 = self.dir1;
        c.inputs.dir2 = self.dir2;
        c.inputs.spectrum.clone_from(&self.spectrum);
        c.inputs.correlators = self.correlators;
        c.inputs.marginals = self.marginals;
        c.inputs.field = self.field;
        c
    }
}

/// Config file (if any) overridden by flags.
pub fn resolve(sub: Sub) -> Result<(ExperimentConfig, bool), CliError> {
    let (command, flags) = sub.split();
    let from_flags = flags.to_config(command);
    let config = match &flags.config {
        Some(path) => {
            let file = ExperimentConfig::load(path)?;
            if file.command != command {
                return Err(CliError::Config(format!(
                    "config is for {}, invoked as {}",
                    file.command.name(),
                    command.name()
                )));
            }
            file.override_with(&from_flags)
        }
        None => from_flags,
    };
    Ok((config, flags.selftest))
}

/// Sizes the global thread pool from `QMEAS_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("QMEAS_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("QMEAS_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

/// Parses, runs and writes; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("qmeas: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    let (config, selftest) = resolve(cli.command)?;
    if selftest {
        return Ok(if selftest::run(config.command) { EXIT_OK } else { EXIT_SELFTEST });
    }
    let result = commands::execute(&config)?;
    result.output.write(config.resolved_format(), config.output.path.as_deref())?;
    if result.passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("qmeas: {} check failed", config.command.name());
        Ok(EXIT_NUMERICAL)
    }
}
