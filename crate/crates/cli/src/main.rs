mod args;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, ConfigFile, Format, Overlay};
use output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] qpite::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "computation",
            CliError::Io(_) => "io",
            CliError::Csv(_) => "csv",
            CliError::Json(_) => "json",
            CliError::Pool(_) => "thread_pool",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn load_config(path: &std::path::Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.common.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let common = cli.common.overlay(file.common());
    let seed = common.seed.unwrap_or(1);
    let out = Output::new(&common.out.unwrap_or_else(|| PathBuf::from("results")), common.format.unwrap_or(Format::Csv))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(CliError::Config("workers must be positive".into()));
        }
        pool = pool.num_threads(w);
    }
    pool.build()?.install(|| match cli.command {
        Command::GammaSweep(a) => experiments::gamma_sweep(a.overlay(file.gamma_sweep), &out),
        Command::IteEnergy(a) => experiments::ite_energy(a.overlay(file.ite_energy), seed, &out),
        Command::Tpq(a) => experiments::tpq(a.overlay(file.tpq), seed, &out),
        Command::Oracle(a) => experiments::oracle(a.overlay(file.oracle), seed, &out),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(if matches!(e, CliError::Config(_)) { 2 } else { 1 })
        }
    }
}
