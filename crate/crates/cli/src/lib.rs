//! Batch front end: reads a run manifest, runs one command, and writes
//! CSV/JSON artifacts to an output directory.

// `!(a > b)` also rejects NaN; that is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod manifest;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Parser, Subcommand};

pub use manifest::{ManifestError, RunManifest};
pub use output::{fmt12, Artifacts, SCHEMA_VERSION};

#[derive(Debug, Parser)]
#[command(name = "demon", version, about = "Agent/demon energy-extraction simulations and analyses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run manifest (TOML). Without it every section takes its defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides every seed in the manifest.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// θ sweep: outcome tables, energies, summary.
    Sweep,
    /// Tomography study with bootstrap intervals and the C0 fit.
    Tomo,
    /// Fit the gate-phase deviations to outcome curves.
    Fit,
    /// Run the invariant checks; nonzero exit on any failure.
    Verify,
}

/// How a run ended, for the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    ChecksFailed,
}

pub fn load_manifest(path: Option<&Path>, seed: Option<u64>) -> Result<RunManifest, ManifestError> {
    let mut m = match path {
        Some(p) => RunManifest::load(p)?,
        None => RunManifest::default(),
    };
    if let Some(s) = seed {
        m.override_seed(s);
    }
    Ok(m)
}

/// Runs `command` and returns the written files in order.
pub fn execute(command: Command, manifest: &RunManifest, out_dir: &Path) -> Result<(Outcome, Vec<PathBuf>)> {
    let mut out = Artifacts::new(out_dir)?;
    let outcome = match command {
        Command::Sweep => {
            commands::sweep::run(manifest, &mut out)?;
            Outcome::Ok
        }
        Command::Tomo => {
            commands::tomo::run(manifest, &mut out)?;
            Outcome::Ok
        }
        Command::Fit => {
            commands::fit::run(manifest, &mut out)?;
            Outcome::Ok
        }
        Command::Verify => {
            if commands::verify::run(manifest, &mut out)? {
                Outcome::Ok
            } else {
                Outcome::ChecksFailed
            }
        }
    };
    Ok((outcome, out.files))
}
