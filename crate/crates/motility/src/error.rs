use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] motility_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Bad input rather than a failure of the machinery; the CLI exits
    /// with status 2 on these.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Core(e) => matches!(
                e,
                motility_core::Error::Validation(_)
                    | motility_core::Error::DimensionMismatch { .. }
                    | motility_core::Error::TooFewPoints { .. }
                    | motility_core::Error::Missing(_)
                    | motility_core::Error::EmptyBin { .. }
            ),
            Error::Parse { .. } | Error::Validation(_) | Error::Model(_) | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            Error::Io { .. } => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e.into()) })
    }
}
