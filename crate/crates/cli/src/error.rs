use serde::Serialize;
use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_FIT: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input, or invalid parameters.
    #[error("{}", .0.join("; "))]
    Input(Vec<String>),
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    status: &'static str,
    kind: &'static str,
    exit_code: u8,
    errors: &'a [String],
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(vec![message.into()])
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Fit(_) => EXIT_FIT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Fit(_) => "fit",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn messages(&self) -> Vec<String> {
        match self {
            CliError::Input(m) => m.clone(),
            CliError::Fit(m) | CliError::Internal(m) => vec![m.clone()],
        }
    }

    /// One-line JSON document for stderr.
    pub fn to_json(&self) -> String {
        let errors = self.messages();
        serde_json::to_string(&ErrorReport {
            status: "error",
            kind: self.kind(),
            exit_code: self.exit_code(),
            errors: &errors,
        })
        .expect("error report serialises")
    }
}

pub(crate) fn io_error(what: &str, err: &std::io::Error) -> CliError {
    match err.kind() {
        std::io::ErrorKind::NotFound => CliError::input(format!("{what}: file not found")),
        _ => CliError::input(format!("{what}: {err}")),
    }
}

pub(crate) fn write_error(path: &std::path::Path, err: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("cannot write {}: {err}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let e = CliError::Input(vec!["labels: file not found".into(), "splits: file not found".into()]);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["exit_code"], 2);
        assert_eq!(v["kind"], "input");
        assert_eq!(v["errors"][0], "labels: file not found");
        assert_eq!(v["errors"].as_array().unwrap().len(), 2);
        assert_eq!(CliError::Fit("x".into()).exit_code(), 3);
        assert_eq!(CliError::Internal("x".into()).exit_code(), 4);
    }

    #[test]
    fn not_found_message() {
        let err = std::io::Error::from(std::io::ErrorKind::NotFound);
        assert_eq!(io_error("labels", &err), CliError::input("labels: file not found"));
    }
}
