use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] maskgan_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{path} not found; run `{stage}` first")]
    MissingStage { path: PathBuf, stage: &'static str },
    #[error("{0}")]
    Missing(String),
    #[error("manifest {path} differs from this invocation ({diff}); pass --force to overwrite")]
    ManifestMismatch { path: PathBuf, diff: String },
    #[error("run directory {0} is locked by another invocation")]
    Locked(PathBuf),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
