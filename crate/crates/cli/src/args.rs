//! Argument parsing and dispatch behind the `sipns` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::{run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "sipns",
    version,
    about = "Simulate and analyse the SIPNS word-of-mouth marketing model"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate the model and write the sampled trajectory with running profit
    Simulate(CommonArgs),
    /// Closed-form interior equilibrium and its residual
    Equilibrium(CommonArgs),
    /// One-parameter sweep of steady state and profit, with trend verdicts
    Sweep(CommonArgs),
    /// Campaign profit J(T), plus the gamma_P threshold search if configured
    Profit(CommonArgs),
    /// Maximize profit over the configured control box
    Optimize(CommonArgs),
    /// Derivative of profit with respect to every rate
    Sensitivity(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration; omitted blocks take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parent directory for the run directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory suffix (default: unix time in seconds)
    #[arg(long)]
    label: Option<String>,
    /// Print the resolved configuration and exit without running
    #[arg(long)]
    dump_config: bool,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 on success, 1 for usage and config errors, 2 for numerical
/// failures.
pub fn entry<I, T>(args: I, stdout: &mut impl Write, stderr: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let (sink, code): (&mut dyn Write, i32) = if err.use_stderr() {
                (stderr, 1)
            } else {
                (stdout, 0)
            };
            let _ = write!(sink, "{}", err.render());
            return code;
        }
    };
    let (command, args) = match cli.command {
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Equilibrium(a) => (Command::Equilibrium, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Profit(a) => (Command::Profit, a),
        Sub::Optimize(a) => (Command::Optimize, a),
        Sub::Sensitivity(a) => (Command::Sensitivity, a),
    };
    match execute(command, &args, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "sipns {command}: {err}");
            err.exit_code()
        }
    }
}

fn execute(command: Command, args: &CommonArgs, stdout: &mut impl Write) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let io_err = |source| CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    };
    if args.dump_config {
        return write!(stdout, "{}", config.to_json()).map_err(io_err);
    }
    let outcome = run(command, &config, &args.out, args.label.as_deref())?;
    for line in &outcome.report {
        writeln!(stdout, "{line}").map_err(io_err)?;
    }
    writeln!(stdout, "wrote {}", outcome.dir.display()).map_err(io_err)
}
