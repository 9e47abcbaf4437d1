use std::fmt;
use std::io;
use std::path::Path;

use grainkit::analysis::AnalysisError;
use grainkit::bench::BenchError;
use grainkit::frame::FrameIoError;
use grainkit::metrics::MetricsError;
use grainkit::registry::UnknownStrategy;
use grainkit::sei::{SeiError, SidecarError};
use grainkit::synthesis::{DatabaseError, SynthesisError};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Io = 3,
    Validation = 4,
    Internal = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, message)
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Validation, message)
    }

    /// An I/O failure on `path`.
    pub fn io(path: &Path, e: io::Error) -> Self {
        Self::new(ExitKind::Io, format!("{}: {e}", path.display()))
    }

    /// Prefixes the message with a path.
    pub fn at(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<FrameIoError> for CliError {
    fn from(e: FrameIoError) -> Self {
        let kind = match e {
            FrameIoError::Io(_) => ExitKind::Io,
            _ => ExitKind::Validation,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SidecarError> for CliError {
    fn from(e: SidecarError) -> Self {
        let kind = match e {
            SidecarError::Io(_) => ExitKind::Io,
            _ => ExitKind::Validation,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SeiError> for CliError {
    fn from(e: SeiError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<UnknownStrategy> for CliError {
    fn from(e: UnknownStrategy) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<DatabaseError> for CliError {
    fn from(e: DatabaseError) -> Self {
        let kind = match e {
            DatabaseError::Io(_) => ExitKind::Io,
            _ => ExitKind::Validation,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Frame(e) => e.into(),
            SynthesisError::ThreadPool(_) => Self::new(ExitKind::Internal, e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Frame(e) => e.into(),
            AnalysisError::Synthesis(e) => e.into(),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Frame(e) => e.into(),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Frame(e) => e.into(),
            BenchError::Synthesis(e) => e.into(),
            BenchError::Empty => Self::usage(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(ExitKind::Internal, format!("JSON encoding failed: {e}"))
    }
}
