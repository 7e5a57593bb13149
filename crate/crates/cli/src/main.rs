mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EstimateArgs, GanArgs, GenDataArgs, SelfcheckArgs, TstArgs};
use config::{merge, resolve_seed, FileConfig, Globals};

#[derive(Parser, Debug)]
#[command(name = "repjsd", version, about = "Representation Jensen-Shannon divergence estimation and testing")]
struct Cli {
    /// Base seed of every random stream; falls back to REPJSD_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: repjsd-out/<command>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: logical cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON options file or a manifest from an earlier run; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an embedding and estimate the divergence between two sample sets.
    Estimate(EstimateArgs),
    /// Permutation two-sample tests and power studies.
    Tst(TstArgs),
    /// Write a synthetic sample pair as CSV.
    GenData(GenDataArgs),
    /// Train the toy generator on the 8-Gaussians mixture.
    GanToy(GanArgs),
    /// Run the numerical invariant suite.
    Selfcheck(SelfcheckArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Tst(_) => "tst",
            Command::GenData(_) => "gen-data",
            Command::GanToy(_) => "gan-toy",
            Command::Selfcheck(_) => "selfcheck",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(repjsd::Error),
}

impl From<repjsd::Error> for CliError {
    fn from(e: repjsd::Error) -> Self {
        use repjsd::Error as E;
        match e {
            E::InvalidConfig(m) => CliError::Usage(m),
            e @ (E::TargetOutOfRange { .. } | E::Parse { .. } | E::RaggedRows { .. }) => CliError::Usage(e.to_string()),
            e => CliError::Run(e),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(e.into())
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let name = cli.command.name();
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(c) = &file.command {
        if c != name {
            return Err(CliError::Usage(format!("config was written by '{c}', not '{name}'")));
        }
    }
    let globals = Globals {
        seed: resolve_seed(cli.seed, file.seed)?,
        out: cli.out.unwrap_or_else(|| PathBuf::from("repjsd-out").join(name)),
        threads: cli.threads,
    };
    if let Some(t) = globals.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let opts = &file.options;
    match cli.command {
        Command::Estimate(a) => commands::cmd_estimate(merge(&a, opts)?, &globals).map(|_| true),
        Command::Tst(a) => commands::cmd_tst(merge(&a, opts)?, &globals).map(|_| true),
        Command::GenData(a) => commands::cmd_gen_data(merge(&a, opts)?, &globals).map(|_| true),
        Command::GanToy(a) => commands::cmd_gan_toy(merge(&a, opts)?, &globals).map(|_| true),
        Command::Selfcheck(a) => commands::cmd_selfcheck(merge(&a, opts)?, &globals),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
