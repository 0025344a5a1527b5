use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments.
    Usage,
    /// Missing, malformed or inconsistent input data.
    Data,
    /// A numerical routine could not produce a meaningful answer.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("EDF parse error at byte {offset}: {msg}")]
    EdfHeader { offset: usize, msg: String },

    #[error("EDF signal {channel} ('{label}'): digital minimum equals digital maximum")]
    EdfScaling { channel: usize, label: String },

    #[error("EDF data record {index} is truncated")]
    EdfTruncated { index: usize },

    #[error("unsupported EDF variant: {0}")]
    EdfUnsupported(String),

    #[error("hypnogram: {0}")]
    Hypnogram(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("epoch {epoch} is silent (zero in-band energy); band ratios are undefined")]
    SilentEpoch { epoch: usize },

    #[error("degenerate point cloud: {0}")]
    Degenerate(String),

    #[error("vertex {vertex} is isolated (zero affinity row sum)")]
    IsolatedVertex { vertex: usize },

    #[error("graph is disconnected (second eigenvalue {lambda2:.12} is 1); increase the kernel bandwidth quantile")]
    Disconnected { lambda2: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {msg}")]
    Format { context: String, msg: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::SilentEpoch { .. }
            | Error::Degenerate(_)
            | Error::IsolatedVertex { .. }
            | Error::Disconnected { .. }
            | Error::NotSymmetric(_) => ErrorKind::Numerical,
            Error::Context { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Wraps the error with a short description of what was being processed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
