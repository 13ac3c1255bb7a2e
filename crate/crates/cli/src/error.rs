use std::fmt;

/// Exit status classes: 1 usage, 2 precondition, 3 I/O.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Precondition,
    Io,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn precondition(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Precondition,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Io,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Usage => 1,
            Kind::Precondition => 2,
            Kind::Io => 3,
        }
    }

    /// Prefixes the message with the file or step it concerns.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    /// Single line: `error[<kind>]: <message>`, newlines flattened.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Usage => "usage",
            Kind::Precondition => "precondition",
            Kind::Io => "io",
        };
        write!(f, "error[{kind}]: {}", self.message.replace('\n', " "))
    }
}

impl From<bitshield::Error> for CliError {
    fn from(e: bitshield::Error) -> Self {
        match e {
            bitshield::Error::Io(io) => CliError::io(io.to_string()),
            other => CliError::precondition(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::io(e.to_string())
        } else {
            CliError::precondition(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
