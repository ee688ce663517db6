use std::path::PathBuf;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: written under config {found}, current config is {expected}; pass --force to overwrite", path.display())]
    DigestMismatch { path: PathBuf, found: String, expected: String },
    #[error("{stage}{}: {source}", cycle.map(|c| format!(" (cycle {})", c)).unwrap_or_default())]
    Stage {
        stage: &'static str,
        cycle: Option<usize>,
        #[source]
        source: ssodr_core::Error,
    },
    #[error(transparent)]
    Core(#[from] ssodr_core::Error),
}

impl AppError {
    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        AppError::Format { path: path.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) | AppError::DigestMismatch { .. } => 2,
            AppError::Format { .. } | AppError::Io { .. } => 3,
            AppError::Stage { source, .. } | AppError::Core(source) => core_code(source),
        }
    }
}

fn core_code(e: &ssodr_core::Error) -> u8 {
    use ssodr_core::Error as E;
    match e {
        E::Config(_) => 2,
        E::InvalidInput(_) | E::Validation(_) => 3,
        E::Numerical { .. } => 4,
        _ => 5,
    }
}

/// Tags a core error with the pipeline stage (and cycle) it came from.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str, cycle: Option<usize>) -> Result<T>;
}

impl<T> StageContext<T> for std::result::Result<T, ssodr_core::Error> {
    fn stage(self, stage: &'static str, cycle: Option<usize>) -> Result<T> {
        self.map_err(|source| AppError::Stage { stage, cycle, source })
    }
}
