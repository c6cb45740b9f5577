use thiserror::Error;

/// Errors raised by the simulation harness.
///
/// `Config` maps to exit code 1, everything else to exit code 2.
#[derive(Error, Debug)]
pub enum SimError {
    /// An invalid configuration (file, flags, or their combination).
    #[error("configuration: {0}")]
    Config(String),

    /// A replication kept failing after its full resampling budget.
    #[error("replication {rep} failed {attempts} times, last error: {source}")]
    Replication {
        rep: usize,
        attempts: u32,
        source: uvsplit::Error,
    },

    /// A numeric routine failed outside the per-replication resample loop.
    #[error(transparent)]
    Numeric(#[from] uvsplit::Error),

    /// Reading the config file or writing results failed.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type SimResult<T> = std::result::Result<T, SimError>;

impl SimError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Config(_) => 1,
            _ => 2,
        }
    }
}
