use std::path::PathBuf;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("{path}: missing artifact; run `stresslens {stage}` first")]
    MissingStage { stage: &'static str, path: PathBuf },

    #[error("stale artifact: {path}: {reason}; rerun `stresslens {stage}`")]
    Stale {
        stage: &'static str,
        path: PathBuf,
        reason: String,
    },

    /// Bad or unreadable input data.
    #[error(transparent)]
    Data(stresslens::error::Error),

    #[error(transparent)]
    Pipeline(stresslens::error::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(_) => EXIT_PIPELINE,
            _ => EXIT_INPUT,
        }
    }

    /// Classifies an error raised while computing a stage. File and parse
    /// problems remain input errors.
    pub fn pipeline(e: stresslens::error::Error) -> Self {
        use stresslens::error::Error as E;
        match e {
            E::Io { .. } | E::Parse { .. } | E::Json(_) => CliError::Data(e),
            other => CliError::Pipeline(other),
        }
    }
}
