use std::fmt;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Upstream { stage: String, requires: String },
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Upstream { .. } => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid configuration: {m}"),
            CliError::Upstream { stage, requires } => {
                write!(f, "{stage}: missing upstream artifacts; requires: {requires}")
            }
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<pillar::Error> for CliError {
    fn from(e: pillar::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<pillar_annotate::AnnotateError> for CliError {
    fn from(e: pillar_annotate::AnnotateError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
