use std::io;

use thiserror::Error;

/// Errors produced across scene construction, channel modelling, and optimization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular projection: {kind} {index} has zero norm")]
    SingularProjection { kind: &'static str, index: usize },

    #[error("gradient ascent diverged at iteration {iteration} (objective {objective})")]
    AscentFailure { iteration: usize, objective: f64 },

    #[error("exhaustive search refused: {0}")]
    Refused(String),

    #[error("trial {trial_index} (seed {seed:#018x}) failed: {source}")]
    Trial {
        trial_index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 4,
            Error::Trial { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
