//! Command-line and JSON-file configuration. Every field is optional so that a
//! config file can supply values the flags leave unset.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer};

#[derive(Parser, Debug)]
#[command(name = "qpite", version, about = "Quasiprobabilistic imaginary-time evolution experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// QPD cost γ(β) of a two-qubit ITE map over the EBL and Takagi bases.
    GammaSweep(GammaSweepArgs),
    /// Sampled energy after repeated ITE steps, against the dense oracle.
    IteEnergy(IteEnergyArgs),
    /// Thermal expectation values from random TPQ states.
    Tpq(TpqArgs),
    /// Sampled versus dense comparison for a small instance.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Default, Clone)]
pub struct CommonArgs {
    /// Master RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file with default values; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaSweepArgs {
    /// `heis2q`, `heis2q-shifted`, or a path to a two-qubit Hamiltonian JSON file.
    #[arg(long)]
    pub hamiltonian: Option<String>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub betas: Option<String>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IteEnergyArgs {
    #[arg(long)]
    pub hamiltonian: Option<String>,
    /// Number of ITE steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// β per step.
    #[arg(long)]
    pub beta_step: Option<f64>,
    /// QPD samples per step count, comma-separated; the last value repeats.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub schedule: Option<String>,
    /// Shots per trial, or `exact`.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub shots: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// `ebl`, `ebl-product`, `takagi`, or `noisy:<p>`.
    #[arg(long)]
    pub basis: Option<String>,
    /// Identity shift before decomposing: `auto`, `none`, or a number.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub shift: Option<String>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpqArgs {
    /// Qubit counts, comma-separated.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub n: Option<String>,
    /// Exponent β of `e^{−βH}` applied to each Clifford state.
    #[arg(long)]
    pub ite_exponent: Option<f64>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub paulis: Option<usize>,
    /// `exact` or `simulated`.
    #[arg(long)]
    pub mode: Option<String>,
    /// QPD samples per qubit count (simulated mode), comma-separated; the last value repeats.
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub samples: Option<String>,
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub shots: Option<String>,
    #[arg(long)]
    pub trotter_r: Option<usize>,
}

#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleArgs {
    /// `ite-energy` or `z-ite`.
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub beta_step: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(deserialize_with = "lenient")]
    pub shots: Option<String>,
    #[arg(long)]
    pub basis: Option<String>,
}

/// Fills unset fields of `self` from `file`.
pub trait Overlay {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! overlay {
    ($t:ty { $($f:ident),* }) => {
        impl Overlay for $t {
            fn overlay(self, file: Self) -> Self {
                Self { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

overlay!(CommonArgs { seed, workers, out, config, format });
overlay!(GammaSweepArgs { hamiltonian, betas });
overlay!(IteEnergyArgs { hamiltonian, steps, beta_step, schedule, shots, reps, basis, shift });
overlay!(TpqArgs { n, ite_exponent, states, paulis, mode, samples, shots, trotter_r });
overlay!(OracleArgs { experiment, steps, beta_step, samples, shots, basis });

/// Layout of a config file: common keys at top level, subcommand keys in a section.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub gamma_sweep: GammaSweepArgs,
    pub ite_energy: IteEnergyArgs,
    pub tpq: TpqArgs,
    pub oracle: OracleArgs,
}

impl ConfigFile {
    pub fn common(&self) -> CommonArgs {
        CommonArgs { seed: self.seed, workers: self.workers, out: self.out.clone(), config: None, format: self.format }
    }
}

/// Accepts a string, a number, or an array of either (joined with commas).
fn lenient<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    fn text(v: &serde_json::Value) -> Option<String> {
        match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }
    let v = serde_json::Value::deserialize(d)?;
    let out = match &v {
        serde_json::Value::Null => None,
        serde_json::Value::Array(items) => Some(
            items
                .iter()
                .map(|i| text(i).ok_or_else(|| serde::de::Error::custom("expected strings or numbers")))
                .collect::<Result<Vec<_>, _>>()?
                .join(","),
        ),
        other => Some(text(other).ok_or_else(|| serde::de::Error::custom("expected a string or number"))?),
    };
    Ok(out)
}
