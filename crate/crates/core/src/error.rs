use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LrsaError>;

#[derive(Debug, Error)]
pub enum LrsaError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: non-numeric value {value:?} for probe {probe} on array {array}")]
    NonNumeric {
        path: PathBuf,
        line: usize,
        probe: String,
        array: String,
        value: String,
    },

    #[error("{path}:{line}: missing value for probe {probe} on array {array}")]
    MissingValue {
        path: PathBuf,
        line: usize,
        probe: String,
        array: String,
    },

    #[error("duplicate {kind} {id:?}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("probe {probe} has no annotation")]
    MissingAnnotation { probe: String },

    #[error("array {array} is not described in the sample sheet")]
    UnknownArray { array: String },

    #[error("anchor time {time} is not part of the design")]
    MissingAnchor { time: f64 },

    #[error("anchor time {time} has {replicates} biological replicate(s), need at least 2")]
    SparseAnchor { time: f64, replicates: usize },

    #[error("singular local design at t = {t0}")]
    SingularDesign { t0: f64 },

    #[error("no usable bandwidth for {probe}: every entry of {grid:?} is degenerate")]
    DegenerateBandwidths { probe: String, grid: Vec<f64> },

    #[error("zero-norm hat vector at t = {t}")]
    ZeroNormHat { t: f64 },

    #[error("alpha {alpha} exceeds the tube bound {bound} at c = 0")]
    AlphaTooLarge { alpha: f64, bound: f64 },

    #[error("no residual degrees of freedom")]
    NoResidualDf,

    #[error("time {t} is not covered by the band")]
    BandMismatch { t: f64 },

    #[error("empty margin in 2x2 table {table:?}")]
    EmptyMargin { table: [u64; 4] },

    #[error("gene {gene} has zero affinity to every other gene")]
    IsolatedRow { gene: String },

    #[error("eigen-decomposition did not converge")]
    EigenFailure,

    #[error("cluster {cluster} has no members")]
    EmptyCluster { cluster: usize },

    #[error("k = {k} exceeds the number of genes ({n})")]
    TooManyClusters { k: usize, n: usize },

    #[error("{probe}: {source}")]
    Gene {
        probe: String,
        #[source]
        source: Box<LrsaError>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl LrsaError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        LrsaError::Invalid(msg.into())
    }

    /// Attaches a probe id unless the error already names one.
    pub fn for_gene(self, probe: &str) -> Self {
        match self {
            e @ (LrsaError::Gene { .. } | LrsaError::DegenerateBandwidths { .. }) => e,
            e => LrsaError::Gene {
                probe: probe.to_string(),
                source: Box::new(e),
            },
        }
    }
}
