use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: usize, right: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("non-finite value at coordinate {index} during {context}")]
    NonFinite { index: usize, context: String },
    #[error("unknown {kind} {id}")]
    Lookup { kind: &'static str, id: usize },
    #[error("insufficient pool: need {needed} examples, have {available}")]
    Capacity { needed: usize, available: usize },
    #[error("degenerate multinomial: {0}")]
    Degenerate(String),
    #[error("invalid configuration: {}", render_issues(.0))]
    Config(Vec<ConfigIssue>),
}

/// One configuration problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl core::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn render_issues(issues: &[ConfigIssue]) -> String {
    let parts: Vec<String> = issues.iter().map(|i| alloc::format!("{i}")).collect();
    parts.join("; ")
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
