use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {message}")]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("bad override `{setting}`: {message}")]
    Override { setting: String, message: String },

    #[error("{context}: {source}")]
    Compute {
        context: String,
        #[source]
        source: lmg_core::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn compute(context: impl Into<String>) -> impl FnOnce(lmg_core::Error) -> Self {
        let context = context.into();
        move |source| Self::Compute { context, source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "parse",
            Self::Invalid { .. } => "validation",
            Self::Override { .. } => "override",
            Self::Compute { .. } => "compute",
            Self::Io { .. } => "io",
            Self::Usage(_) => "usage",
        }
    }

    /// Process exit status: 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Compute { .. } | Self::Io { .. } => 1,
            _ => 2,
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            Self::Parse { line, column, .. } => {
                v["line"] = json!(line);
                v["column"] = json!(column);
            }
            Self::Invalid { key, .. } => v["key"] = json!(key),
            Self::Override { setting, .. } => v["setting"] = json!(setting),
            Self::Compute { context, source } => {
                v["context"] = json!(context);
                v["cause"] = json!(source.to_string());
            }
            Self::Io { path, .. } => v["path"] = json!(path),
            Self::Usage(_) => {}
        }
        json!({ "error": v })
    }
}
