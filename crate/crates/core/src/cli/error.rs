use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Json,
    MissingField,
    UnknownKey,
    Schema,
    Dimension,
    Value,
    Physics,
    Computation,
    Io,
    Usage,
}

impl ErrorCategory {
    /// Process exit status; 1 is reserved for failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorCategory::Json
            | ErrorCategory::MissingField
            | ErrorCategory::UnknownKey
            | ErrorCategory::Schema
            | ErrorCategory::Dimension
            | ErrorCategory::Value => 2,
            ErrorCategory::Physics | ErrorCategory::Computation => 3,
            ErrorCategory::Io => 4,
            ErrorCategory::Usage => 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, thiserror::Error)]
#[error("{category:?}{}: {message}", path.as_ref().map(|p| format!(" at {p}")).unwrap_or_default())]
pub struct CliError {
    pub category: ErrorCategory,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn new(category: ErrorCategory, path: Option<String>, message: String) -> Self {
        Self {
            category,
            path,
            message,
        }
    }

    pub fn physics(e: crate::Error) -> Self {
        Self::new(ErrorCategory::Physics, None, e.to_string())
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorCategory::Usage, None, message.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new(ErrorCategory::Io, Some(path.display().to_string()), e.to_string())
    }

    /// Single-line JSON document for standard error.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        Self::new(ErrorCategory::Computation, None, e.to_string())
    }
}
