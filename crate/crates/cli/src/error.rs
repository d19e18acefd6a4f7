use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] metricfit::Error),
}

impl CliError {
    /// 2 config, 3 IO or file format, 4 divergence, 5 infeasible calibration,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use metricfit::Error as E;
        match self {
            CliError::Config(_) | CliError::Toml { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Domain(_) | E::RankOutOfRange { .. } | E::TooLarge { .. } => 2,
                E::Io(_) | E::Csv(_) | E::Json(_) | E::Format(_) | E::MissingLabels(_) => 3,
                E::Diverged { .. } => 4,
                E::Infeasible { .. } => 5,
                _ => 1,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
