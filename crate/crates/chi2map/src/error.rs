use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Chi2Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O error while reading chunk {chunk}: {source}")]
    ChunkIo {
        chunk: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("bad file magic in {path}: expected {expected:?}")]
    BadMagic { path: String, expected: &'static str },
    #[error("matrix has zero rows or columns")]
    EmptyMatrix,
    #[error("invalid value {value} at row {row}, column {col}: {reason}")]
    InvalidValue {
        row: usize,
        col: usize,
        value: f64,
        reason: &'static str,
    },
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("matrix contains no nonzero values")]
    NoNonzeroValues,
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("labels have {label_rows} rows but matrix has {matrix_rows}")]
    Alignment {
        matrix_rows: usize,
        label_rows: usize,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("singular system: eigenvalue {index} is zero and lambda is zero")]
    Singular { index: usize },
    #[error("inconsistent configuration: {0}")]
    Consistency(String),
    #[error("log singularity: coefficient recurrence is undefined at x = 1")]
    LogSingularity,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Chi2Error>;

impl Chi2Error {
    /// Process exit code for the CLI: 2 validation, 3 I/O, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        use Chi2Error::*;
        match self {
            Io { .. } | ChunkIo { .. } | Parse { .. } | BadMagic { .. } => 3,
            Singular { .. } | Numerical(_) | LogSingularity => 4,
            _ => 2,
        }
    }
}
