use std::path::PathBuf;

/// Errors surfaced by the simulator, model, planner and harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric input was outside the domain of the operation (NaN, infinity).
    #[error("domain error: {0}")]
    Domain(String),
    /// A parameter or configuration value violates its contract.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument to an operation was unusable (empty sequence, too short).
    #[error("argument error: {0}")]
    Argument(String),
    /// No non-negative airtime exists for the requested launch.
    #[error("infeasible trajectory: {0}")]
    InfeasibleTrajectory(String),
    /// A model file or in-memory model has inconsistent shapes or bad contents.
    #[error("model format error: {0}")]
    ModelFormat(String),
    /// Training data cannot be used (degenerate feature, too few samples).
    #[error("training configuration error: {0}")]
    TrainingConfig(String),
    /// The planner was called with no time left before landing.
    #[error("planning window expired: {0} s remaining")]
    PlanningWindowExpired(f64),
    /// A structured text input (config or CSV) could not be parsed.
    #[error("{}:{line}: {key}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        key: String,
        message: String,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input files or settings, as opposed
    /// to failures while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Parse { .. } | Error::ModelFormat(_) | Error::TrainingConfig(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
