//! Dataset tooling around `handflow-core`: generation of annotated
//! frame sequences, evaluation of predicted joints, articulation
//! fitting for joint files, and integrity audits of generated output.
//!
//! Every command is a library function taking an options struct and
//! returning a typed report, so the same code paths drive the binary
//! and the integration tests. Failures carry a category used by the
//! binary for its exit code and its one-line machine-parsable error
//! output.

pub mod backgrounds;
pub mod eval;
pub mod formats;
pub mod gen;
pub mod ik;
pub mod inspect;
pub mod seeds;

/// Coarse failure class, stable across releases. The binary prints it
/// inside `error[<label>]:` and uses it as the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Rejected options or option combinations.
    Config,
    /// Filesystem or encoding failures.
    Io,
    /// Inputs that parsed but hold impossible values, and audits that
    /// found corrupt output.
    Data,
    /// Invariant violations inside the pipeline itself.
    Internal,
}

impl ErrorCategory {
    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Io => "io",
            ErrorCategory::Data => "data",
            ErrorCategory::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Internal => 5,
        }
    }
}

/// Errors that know their failure class.
pub trait Categorized {
    fn category(&self) -> ErrorCategory;
}
