use std::path::{Path, PathBuf};

/// Pipeline failures, grouped by the process exit code they map to.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

impl PipelineError {
    /// 2 for configuration problems, 3 for bad or missing data, 4 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) | PipelineError::Io { .. } => 3,
            PipelineError::Numerical(_) => 4,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io { path: path.to_path_buf(), source }
    }
}

impl From<tte_core::Error> for PipelineError {
    fn from(e: tte_core::Error) -> Self {
        use tte_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::TooManyTasks { .. } => PipelineError::Config(e.to_string()),
            E::NonFinite(_) | E::Diverged { .. } => PipelineError::Numerical(e.to_string()),
            E::UnknownCode(_) | E::CyclicOntology(_) | E::NotEnoughDistinctTimes { .. } | E::Shape(_) | E::Undefined(_) => {
                PipelineError::Data(e.to_string())
            }
        }
    }
}
