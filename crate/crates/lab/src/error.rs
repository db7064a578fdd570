use std::path::{Path, PathBuf};

use crate::config::Violation;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n{}", list(.0))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Usage(String),
    #[error("cannot read configuration {path}: {source}")]
    ConfigFile { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Numerical(boussinesq_core::Error),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration and usage problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Parse { .. } | LabError::Invalid(_) | LabError::Usage(_) | LabError::ConfigFile { .. } => 2,
            LabError::Io { .. } | LabError::Numerical(_) => 1,
        }
    }
}

impl From<boussinesq_core::Error> for LabError {
    fn from(e: boussinesq_core::Error) -> Self {
        match e {
            boussinesq_core::Error::Config { path, message } => LabError::Invalid(vec![Violation { path, message }]),
            other => LabError::Numerical(other),
        }
    }
}
