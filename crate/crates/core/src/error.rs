use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FutsError {
    #[error("weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("total mass {0} is not 1")]
    NotADistribution(f64),
}

/// A syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("rule {rule}: {message}")]
    Rule { rule: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Failures while evaluating rates, payloads or repositories at run time.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("rate {value} for {action} is negative or not finite")]
    BadRate { action: String, value: f64 },
    #[error("loss probability {value} for {action} is outside [0, 1]")]
    BadProbability { action: String, value: f64 },
    #[error("attribute `{0}` is not available")]
    MissingAttribute(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("payload {0} is not ground")]
    NotGround(String),
    #[error("undefined process `{0}`")]
    UndefinedProcess(String),
    #[error("process `{name}` expects {expected} arguments, got {got}")]
    Arity { name: String, expected: usize, got: usize },
    #[error("repository: {0}")]
    Repository(String),
}

impl From<FutsError> for EvalError {
    fn from(e: FutsError) -> Self {
        EvalError::Repository(e.to_string())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("state space exceeds the limit of {limit} states ({reached} discovered)")]
    StateOverflow { limit: usize, reached: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Errors raised while turning a parsed model file into a runnable model.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Check(Vec<crate::syntax::Diagnostic>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("repository `{name}`: {message}")]
    Repository { name: String, message: String },
}
