use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: parse error at byte {offset}: {message}", path.display())]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {format} version {found} is newer than supported version {supported}", path.display())]
    Version {
        path: PathBuf,
        format: String,
        found: u32,
        supported: u32,
    },
    #[error("{}", match stage { Some(s) => format!("stage {s}: {source}"), None => source.to_string() })]
    Core {
        stage: Option<String>,
        source: zsl_core::Error,
    },
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
}

impl From<zsl_core::Error> for Error {
    fn from(source: zsl_core::Error) -> Self {
        Error::Core { stage: None, source }
    }
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Stage { .. } => self,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// 1 usage or configuration, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Core { source, .. } if source.is_numeric() => 3,
            Error::Core {
                source: zsl_core::Error::InvalidConfig(_) | zsl_core::Error::InvalidParameter(_),
                ..
            } => 1,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
