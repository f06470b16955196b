use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("numerical guard tripped: {0}")]
    Numerical(String),
    #[error("trace does not belong to this model: {0}")]
    Trace(String),
    #[error("training diverged at batch {batch} (loss = {loss})")]
    Divergence { batch: usize, loss: f64 },
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing stage artifact: {0}")]
    Dependency(String),
    #[error("binding error: {0}")]
    Binding(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported format version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes; the discriminant is the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config = 1,
    Data = 2,
    Dimension = 3,
    Binding = 4,
    Numerical = 5,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Dependency(_) => ErrorClass::Config,
            Error::Data(_)
            | Error::Format(_)
            | Error::Version { .. }
            | Error::Checksum { .. }
            | Error::Image(_)
            | Error::Io(_) => ErrorClass::Data,
            Error::Dimension(_) | Error::Trace(_) => ErrorClass::Dimension,
            Error::Binding(_) => ErrorClass::Binding,
            Error::Singular(_)
            | Error::NonFinite(_)
            | Error::Numerical(_)
            | Error::Divergence { .. } => ErrorClass::Numerical,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class() as i32
    }

    /// Maps an unexpected EOF into a truncation format error.
    pub(crate) fn from_read(err: std::io::Error, what: &str) -> Error {
        if err.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated {what}"))
        } else {
            Error::Io(err)
        }
    }
}
