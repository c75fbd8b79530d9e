use std::fmt;

/// Failure of a run, classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or inputs (exit 2).
    Config(String),
    /// The computation itself failed (exit 3).
    Numerical(String),
    /// Filesystem trouble (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qshield::error::Error> for CliError {
    fn from(e: qshield::error::Error) -> Self {
        use qshield::error::Error as E;
        match e {
            E::Numerical(_)
            | E::NotConverged { .. }
            | E::ZeroProbability
            | E::NotNormalized { .. }
            | E::NonUnitary { .. }
            | E::NonHermitian { .. }
            | E::UnknownSyndrome(_) => CliError::Numerical(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
