use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing value at row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: region `{region}` is not in the region graph")]
    UnknownRegion { row: usize, region: String },
    #[error("row {row}: survival time must be strictly positive, got {value}")]
    NonPositiveTime { row: usize, value: f64 },
    #[error("Weibull shape must be strictly positive, got {0}")]
    NonPositiveShape(f64),
    #[error("weibull family requires at least one observed event; every row is censored")]
    NoEvents,
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("adjacency is not symmetric: `{0}` lists `{1}` but `{1}` does not list `{0}`")]
    AsymmetricEdge(String, String),
    #[error("region `{0}` is defined more than once")]
    DuplicateRegion(String),
    #[error("line {line}: bad region reference `{token}`")]
    BadIndex { line: usize, token: String },
    #[error("phi must lie in [0, 1], got {0}")]
    PhiOutOfRange(f64),
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("Newton iterations did not converge within {iterations} steps (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("precision matrix is not positive definite (pivot {pivot})")]
    SingularPrecision { pivot: usize },
    #[error("hyperparameter mode search failed: {0}")]
    ModeSearchFailure(String),
    #[error("hyperparameter grid needs {points} points, more than the limit of {max}")]
    GridExplosion { points: usize, max: usize },
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("at least {min} posterior draws are required, got {draws}")]
    InsufficientDraws { draws: usize, min: usize },
    #[error("reference sampler guard rail exceeded: {0}")]
    GuardRailExceeded(String),
    #[error("reference sampler proposal degenerated: {0}")]
    DegenerateProposal(String),
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("fit artifact missing: {}", .0.display())]
    MissingFitArtifact(PathBuf),
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("{}: {source}", path.display())]
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

    /// Attaches the file an error came from, once.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::InFile { .. } | Error::Io { .. } | Error::Parse { .. }) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
