use std::fmt;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent configuration; names the offending key.
    Config(String),
    Numeric(String),
    Assumption(String),
    Io(String),
}

impl CliError {
    pub fn config(key: &str, msg: impl fmt::Display) -> Self {
        CliError::Config(format!("{key}: {msg}"))
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Assumption(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Assumption(m) => write!(f, "assumption violated: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<pathcopula::Error> for CliError {
    fn from(e: pathcopula::Error) -> Self {
        use pathcopula::Error as E;
        match e {
            E::InvalidArgument(m) | E::Unsupported(m) | E::Parse(m) => CliError::Config(m),
            E::NumericFailure(m) => CliError::Numeric(m),
            E::AssumptionViolated(m) => CliError::Assumption(m),
            E::Io(e) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
