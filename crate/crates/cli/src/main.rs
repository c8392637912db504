//! `cultaccess <subcommand> --config <path> [--out <dir>] [--threads N]`
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 internal invariant.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cultaccess::pipeline::{execute, resolve_out_dir, validate_config, Command, Stage};
use cultaccess::Error;

#[derive(Parser)]
#[command(name = "cultaccess", version, about = "Cultural infrastructure accessibility and equity pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the city grid, clip it to the boundary and assign tracts.
    Grid(Opts),
    /// Score every grid point by distance decay to each asset category.
    Cias(Opts),
    /// Aggregate to tracts, join sources, compute SCAS and bins.
    Scas(Opts),
    /// Tract-level Pearson correlation matrix.
    Correlate(Opts),
    /// Train and evaluate the income models.
    Train(Opts),
    /// Shapley attributions for the configured model.
    Explain(Opts),
    /// All stages in order.
    Run(Opts),
}

#[derive(Args)]
struct Opts {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Grid(o) => (Command::Stage(Stage::Grid), o),
        Cmd::Cias(o) => (Command::Stage(Stage::Cias), o),
        Cmd::Scas(o) => (Command::Stage(Stage::Scas), o),
        Cmd::Correlate(o) => (Command::Stage(Stage::Correlate), o),
        Cmd::Train(o) => (Command::Stage(Stage::Train), o),
        Cmd::Explain(o) => (Command::Stage(Stage::Explain), o),
        Cmd::Run(o) => (Command::Run, o),
    };
    match run(command, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command, opts: &Opts) -> Result<(), Error> {
    if let Some(n) = opts.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    let cfg = validate_config(&opts.config)?;
    let out = resolve_out_dir(&cfg, opts.out.as_deref());
    let manifest = execute(&cfg, &out, command)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} finished; outputs in {}", command.name(), out.display());
    Ok(())
}
