use std::path::PathBuf;

use lrsa::LrsaError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] LrsaError),

    #[error("{}{message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Config {
        path: Option<PathBuf>,
        message: String,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Short category printed in the error line.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => core_category(e),
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "input" => 3,
            "config" => 4,
            "numeric" => 5,
            "cluster" => 6,
            "io" => 7,
            _ => 1,
        }
    }
}

fn core_category(e: &LrsaError) -> &'static str {
    use LrsaError::*;
    match e {
        Io { .. } => "io",
        Parse { .. }
        | NonNumeric { .. }
        | MissingValue { .. }
        | DuplicateId { .. }
        | DimensionMismatch(_)
        | MissingAnnotation { .. }
        | UnknownArray { .. }
        | MissingAnchor { .. }
        | SparseAnchor { .. } => "input",
        SingularDesign { .. }
        | DegenerateBandwidths { .. }
        | ZeroNormHat { .. }
        | AlphaTooLarge { .. }
        | NoResidualDf
        | BandMismatch { .. }
        | EmptyMargin { .. } => "numeric",
        IsolatedRow { .. } | EigenFailure | EmptyCluster { .. } | TooManyClusters { .. } => "cluster",
        Gene { source, .. } => core_category(source),
        Invalid(_) => "input",
    }
}
