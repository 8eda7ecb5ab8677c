//! Command-line front end for the `wavejam` library.
//!
//! The binary drives the full experiment pipeline through seven verbs, each
//! reading and writing artifacts in a shared output directory:
//!
//! 1. `mesh` — triangulate the domain and check the time step against the
//!    stability bound.
//! 2. `precompute` — one adjoint sweep per receiver yields Green operators
//!    for both source locations, plus the band-limiting projector.
//! 3. `gendata` — synthesize labelled spectrogram datasets with measurement
//!    noise.
//! 4. `train` — fit the detector and freeze its weights.
//! 5. `attack` — run projected ascent against every validation example.
//! 6. `evaluate` — report per-split accuracy and attack impact.
//! 7. `bench` — time the precomputed objective/gradient against naive PDE
//!    solves.
//!
//! Every artifact is stamped with a hash of the full configuration, so mixing
//! outputs from different configs or seeds in one directory fails loudly
//! rather than silently.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod artifacts;
pub mod cmd;
pub mod config;
pub mod error;

pub use artifacts::OutDir;
pub use config::{Config, Profile};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "wavejam", version, about = "Adversarial interference against wave-field detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Optional `key = value` configuration file layered over the profile.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory that holds all pipeline artifacts.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,

    /// Root randomness seed; overrides the profile and config file.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Baseline parameter set to start from.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the triangulated mesh and validate the time step.
    Mesh,
    /// Precompute Green operators and the frequency-band projector.
    Precompute,
    /// Generate the train/test/val spectrogram datasets.
    Gendata,
    /// Train the detector on the generated dataset.
    Train,
    /// Attack every validation example with projected ascent.
    Attack,
    /// Evaluate the trained detector, including attack impact if present.
    Evaluate,
    /// Benchmark precomputed evaluation against naive PDE solves.
    Bench,
}

/// Resolve the configuration and dispatch to the requested verb.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::profile(cli.profile);
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let out = OutDir::new(cli.out);
    match cli.command {
        Command::Mesh => cmd::mesh::run(&cfg, &out),
        Command::Precompute => cmd::precompute::run(&cfg, &out),
        Command::Gendata => cmd::gendata::run(&cfg, &out),
        Command::Train => cmd::train::run(&cfg, &out),
        Command::Attack => cmd::attack::run(&cfg, &out),
        Command::Evaluate => cmd::evaluate::run(&cfg, &out),
        Command::Bench => cmd::bench::run(&cfg, &out),
    }
}
