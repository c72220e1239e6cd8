use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinlock_cli::config::{parse_config, ExperimentKind};
use spinlock_cli::error::{CliError, EXIT_VALIDATION};
use spinlock_cli::{execute, presets};

/// Simulations of a dissipative qubit synchronized to a classical drive.
#[derive(Parser)]
#[command(name = "spinlock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment.
    #[command(flatten)]
    Run(RunCommand),
    /// List the built-in presets.
    Presets,
}

#[derive(Subcommand)]
enum RunCommand {
    /// Free relaxation to the limit cycle.
    Relax(RunArgs),
    /// Relaxation followed by the driven stage, with Q and S snapshots.
    Sync(RunArgs),
    /// Husimi Q-function on a grid.
    Qgrid(RunArgs),
    /// S-function profile and fit.
    Sprofile(RunArgs),
    /// Max S over detuning and drive strength.
    Tongue(RunArgs),
    /// Max S against detuning at fixed drive strength.
    Bandwidth(RunArgs),
    /// Deformation and Max S against drive strength.
    Deform(RunArgs),
    /// m_z traces from the limit cycle under several drive strengths.
    Forced(RunArgs),
    /// Full eight-level model against the effective qubit.
    Eightlevel(RunArgs),
    /// Lab-frame simulation and spectra.
    Labframe(RunArgs),
    /// Simulated rate calibration.
    Ratefit(RunArgs),
    /// Tomography error against shot count.
    Tomography(RunArgs),
}

impl RunCommand {
    fn split(self) -> (ExperimentKind, RunArgs) {
        use ExperimentKind as K;
        match self {
            RunCommand::Relax(a) => (K::Relax, a),
            RunCommand::Sync(a) => (K::Sync, a),
            RunCommand::Qgrid(a) => (K::Qgrid, a),
            RunCommand::Sprofile(a) => (K::Sprofile, a),
            RunCommand::Tongue(a) => (K::Tongue, a),
            RunCommand::Bandwidth(a) => (K::Bandwidth, a),
            RunCommand::Deform(a) => (K::Deform, a),
            RunCommand::Forced(a) => (K::Forced, a),
            RunCommand::Eightlevel(a) => (K::Eightlevel, a),
            RunCommand::Labframe(a) => (K::Labframe, a),
            RunCommand::Ratefit(a) => (K::Ratefit, a),
            RunCommand::Tomography(a) => (K::Tomography, a),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see `spinlock presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, env = "SPINLOCK_WORKERS")]
    workers: Option<usize>,
    /// Random seed; overrides the configured one.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<PathBuf, CliError> {
    let config = match (&args.config, &args.preset) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(name)) => presets::preset(name)?,
        (None, None) => return Err(CliError::validation("config", "give --config or --preset")),
    };
    let workers = args.workers.unwrap_or_else(spinlock_cli::default_workers);
    execute(config, Some(kind), args.out.as_deref(), workers, args.seed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_VALIDATION as u8 } else { 0 });
        }
    };
    match cli.command {
        Command::Presets => {
            for p in &presets::PRESETS {
                let kind = presets::preset(p.name).ok().and_then(|c| c.experiment).map(|k| k.name()).unwrap_or("?");
                println!("{}\t{kind}\t{}", p.name, p.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Run(cmd) => {
            let (kind, args) = cmd.split();
            match run(kind, args) {
                Ok(dir) => {
                    println!("{}", dir.join(spinlock_cli::REPORT_FILE).display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
