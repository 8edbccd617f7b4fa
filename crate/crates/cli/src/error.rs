use presence_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("{0}")]
    Io(String),

    #[error("{failed} of {total} criteria failed")]
    CriteriaFailed { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        LabError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn engine(context: impl Into<String>) -> impl FnOnce(CoreError) -> LabError {
        let context = context.into();
        move |source| LabError::Engine { context, source }
    }

    /// 2 for configuration problems (including arguments the engines reject
    /// as out of range), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Engine { source, .. } => match source {
                CoreError::InvalidArgument(_)
                | CoreError::ThetaOutOfDomain { .. }
                | CoreError::SpeedOutOfRange(_)
                | CoreError::BelowDomain { .. }
                | CoreError::NotSubcritical(_)
                | CoreError::GeometricModel(_)
                | CoreError::UnsupportedPalm(_)
                | CoreError::UnsupportedModel(_)
                | CoreError::UnsupportedSizeBiased(_)
                | CoreError::XNotInSupport(_) => 2,
                _ => 1,
            },
            LabError::Io(_) | LabError::CriteriaFailed { .. } => 1,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
