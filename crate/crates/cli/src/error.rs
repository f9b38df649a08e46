use thiserror::Error;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("config error in field '{field}': {message}")]
    Config { field: String, message: String },

    #[error("config validation failed:\n{0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: sphere_dm::Error,
    },

    #[error("writing {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) => 2,
            CliError::Numerical { .. } | CliError::Output { .. } => 3,
        }
    }
}

/// Attaches a context string to core errors.
pub trait Context<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> Context<T> for sphere_dm::Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical {
            context: context(),
            source,
        })
    }
}
