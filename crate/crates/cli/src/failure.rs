use std::fmt;
use std::process::ExitCode;

use stocs_core::error::{ConfigError, EngineError, EvalError, ModelError, ParseError};

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// 1
    Other(String),
    /// 2
    Parse(String),
    /// 3
    Semantic(String),
    /// 4
    Config(String),
    /// 5
    Overflow(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Semantic(_) => 3,
            Failure::Config(_) => 4,
            Failure::Overflow(_) => 5,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn parse_error(file: &str, e: &ParseError) -> Self {
        Failure::Parse(format!("{file}:{e}"))
    }

    pub fn model(file: &str, e: ModelError) -> Self {
        match e {
            ModelError::Parse(p) => Failure::parse_error(file, &p),
            ModelError::Check(diags) => Failure::Semantic(
                diags
                    .iter()
                    .map(|d| d.render(file))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            ModelError::Config(c) => c.into(),
            e @ ModelError::Repository { .. } => Failure::Semantic(format!("{file}: {e}")),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("configuration: {e}"))
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadRate { .. } | EvalError::BadProbability { .. } => Failure::Config(e.to_string()),
            _ => Failure::Semantic(e.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::StateOverflow { .. } => Failure::Overflow(e.to_string()),
            EngineError::Eval(e) => e.into(),
            EngineError::InvalidArgument(m) => Failure::Other(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Other(m)
            | Failure::Parse(m)
            | Failure::Semantic(m)
            | Failure::Config(m)
            | Failure::Overflow(m) => f.write_str(m),
        }
    }
}
