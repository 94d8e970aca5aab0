//! Command-line front end: config parsing and subcommand dispatch.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "mrmod", version, about = "Micro-coil MR modulation simulator")]
pub struct Cli {
    /// Worker threads (default: available cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Coil Bz over the voxel grid.
    Field {
        #[arg(long)]
        config: PathBuf,
    },
    /// Contrast along one parameter axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Per-TR voxel signals for one waveform.
    Sequence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Encode a bitstream, synthesize images, locate, decode.
    Uplink {
        #[arg(long)]
        config: PathBuf,
        /// ASCII '0'/'1' file.
        #[arg(long)]
        bits: PathBuf,
    },
    /// Voxelwise t-map and Bonferroni verdict for an image stack directory.
    Detect {
        #[arg(long)]
        stack: PathBuf,
        /// Optional; only `[uplink] alpha` is used.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<config::Loaded> {
    let mut loaded = config::load(path)?;
    if seed.is_some() {
        loaded.config.seed = seed;
    }
    loaded.config.resolve();
    Ok(loaded)
}

pub fn run(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build().expect("thread pool");
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Field { config } => commands::field(&load(config, cli.seed)?, out),
        Command::Sweep { config } => commands::sweep_cmd(&load(config, cli.seed)?, out),
        Command::Sequence { config } => commands::sequence(&load(config, cli.seed)?, out),
        Command::Uplink { config, bits } => commands::uplink(&load(config, cli.seed)?, bits, out).map(|_| ()),
        Command::Detect { stack, config } => {
            let loaded = match config {
                Some(p) => load(p, cli.seed)?,
                None => {
                    let mut c = config::Config { seed: cli.seed, ..Default::default() };
                    c.resolve();
                    config::Loaded { path: PathBuf::from("<defaults>"), text: String::new(), config: c }
                }
            };
            commands::detect_cmd(&loaded, stack, out)
        }
    }
}
