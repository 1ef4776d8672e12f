use robust_dpd::DpdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] DpdError),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    /// 1 for usage, configuration and input errors, 2 for computational
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Output { .. } => 1,
            CliError::Core(e) => match e {
                DpdError::Usage(_)
                | DpdError::Dimension { .. }
                | DpdError::Parse { .. }
                | DpdError::Io(_)
                | DpdError::Domain(_)
                | DpdError::Rank(_)
                | DpdError::Feasibility(_) => 1,
                DpdError::Integration { .. }
                | DpdError::Differentiation(_)
                | DpdError::NonConvergence { .. }
                | DpdError::Boundary(_)
                | DpdError::Evaluation { .. }
                | DpdError::SeriesTruncated { .. } => 2,
            },
        }
    }
}
