//! `metashot` orchestrates experiments end to end: a flat-key plain-text
//! configuration resolves into a concrete run plan, each subcommand owns
//! a locked run directory, and training stages persist deterministic
//! binary checkpoints plus CSV metrics logs that reproduce bit for bit
//! under a fixed seed.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod rundir;

pub use checkpoint::{decode, encode, load_checkpoint, save_checkpoint, Checkpoint};
pub use commands::{execute, RunOptions, Stage};
pub use config::{
    parse_config, parse_config_text, DatasetKind, Method, ResolvedConfig, OUTPUT_ROOT_VAR,
};
pub use data::{load_data, DataBundle};
pub use error::{CliError, Result};
pub use rundir::{prepare_run_dir, RunLock};
