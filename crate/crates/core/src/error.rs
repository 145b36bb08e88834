//! Error type shared by all core operations.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    ShapeMismatch { context: &'static str, expected: String, got: String },
    /// gen_shapes supports at most ten shape families.
    UnsupportedClassCount(usize),
    /// A dataset cannot be built with fewer samples than classes.
    CountBelowClasses { count: usize, classes: usize },
    /// Unsupported image edge length.
    UnsupportedSize(usize),
    /// An input whose statistics are needed has (numerically) zero variance.
    DegenerateInput(&'static str),
    /// A training loss became non-finite.
    Diverged { step: usize, loss: f32 },
    /// An operator that needs the corrective network was called without one.
    MissingCorrective,
    /// A delta-style operator was called without its reference image/class.
    MissingReference,
    /// A label outside the class range was passed.
    ClassOutOfRange { class: usize, classes: usize },
    /// Invalid configuration value.
    InvalidConfig(&'static str),
    /// A quality gate failed (e.g. the probe classifier is near chance).
    QualityGate { context: &'static str, value: f32, required: f32 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { context, expected, got } => {
                write!(f, "shape mismatch in {context}: expected {expected}, got {got}")
            }
            Error::UnsupportedClassCount(k) => {
                write!(f, "unsupported class count {k}: at most 10 shape families exist")
            }
            Error::CountBelowClasses { count, classes } => {
                write!(f, "cannot generate {count} samples over {classes} classes")
            }
            Error::UnsupportedSize(s) => write!(f, "unsupported image size {s}"),
            Error::DegenerateInput(what) => write!(f, "degenerate input: {what}"),
            Error::Diverged { step, loss } => {
                write!(f, "training diverged at step {step} (loss {loss})")
            }
            Error::MissingCorrective => write!(f, "corrective network required but not provided"),
            Error::MissingReference => write!(f, "reference image/class required but not provided"),
            Error::ClassOutOfRange { class, classes } => {
                write!(f, "class {class} out of range for {classes} classes")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::QualityGate { context, value, required } => {
                write!(f, "quality gate failed in {context}: {value} (required {required})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
