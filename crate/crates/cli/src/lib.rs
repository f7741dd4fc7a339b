//! Offline/online pipeline driver for the `neuralparc` binary.

pub mod commands;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

/// Failures that map to a dedicated exit status. Anything else exits 1.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Mismatch(String),
    #[error("no certified reach-avoid set: {0}")]
    NoBras(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::MissingArtifact(_) | Failure::Mismatch(_) => 2,
            Failure::NoBras(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

/// Exit status for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain().find_map(|e| e.downcast_ref::<Failure>()).map_or(1, Failure::exit_code)
}

/// Sizes the global rayon pool from `NEURALPARC_THREADS` when set.
pub fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("NEURALPARC_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("NEURALPARC_THREADS must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "NEURALPARC_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
