use std::io;
use std::path::{Path, PathBuf};

/// Everything a command can fail with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qaoa_rl_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

/// Process exit status for success.
pub const EXIT_OK: i32 = 0;
/// Bad input: arguments, files, incompatible checkpoints.
pub const EXIT_VALIDATION: i32 = 2;
/// A simulator or optimizer produced unphysical numbers.
pub const EXIT_NUMERICAL: i32 = 3;

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Core(_) | CliError::Usage(_) => "validation",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
        }
    }

    /// One-line JSON description for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use qaoa_rl_core::Error;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::Numerical("nan".into())).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::InvalidChain("odd".into())).exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_VALIDATION);
        let line = CliError::Usage("bad flag".into()).to_json_line();
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "validation");
        assert_eq!(v["exit_code"], 2);
        assert!(!line.contains('\n'));
    }
}
