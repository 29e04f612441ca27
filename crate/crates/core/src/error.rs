use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed arguments that violate a documented precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input geometry is degenerate (collinear points, empty cloud, ...).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// ICP could not keep enough inlier correspondences to proceed.
    #[error(
        "icp: no overlap ({inliers} inliers < {min_inliers} required, iteration {iteration})"
    )]
    IcpNoOverlap {
        iteration: usize,
        inliers: usize,
        min_inliers: usize,
    },

    /// An iterative solver failed to reach its required residual.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Primitive fit ran out of iterations; `best` holds the best parameter
    /// vector seen, in the order documented for the primitive kind.
    #[error("primitive fit did not converge after {iterations} iterations (rms {rms_residual:.4} mm)")]
    FitDidNotConverge {
        iterations: usize,
        rms_residual: f64,
        best: Vec<f64>,
    },

    /// Operation needs a non-empty map.
    #[error("empty map: {0}")]
    EmptyMap(String),

    /// Ranking found no admissible candidate.
    #[error("no matching entry: {0}")]
    NoMatch(String),

    /// Requested metric is undefined for the given inputs.
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Object model file could not be parsed.
    #[error("model parse error at line {line}: {msg}")]
    ModelParse { line: usize, msg: String },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors for the persistent file formats (tactile maps, calibrations).
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: not a recognized file")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("file truncated while reading {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed field: {0}")]
    Malformed(String),
}
