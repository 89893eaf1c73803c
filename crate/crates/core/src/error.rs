//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor was given an invalid configuration.
    InvalidConfig(String),
    /// A vector or gradient does not match the expected dimension.
    ShapeMismatch { expected: usize, got: usize },
    /// A non-finite value surfaced where finite arithmetic is required;
    /// the label names the computation that diverged.
    NonFinite(&'static str),
    /// `step` was called on an episode that has already terminated.
    EpisodeFinished,
    /// An operation that needs at least one stored node ran on an empty memory.
    EmptyMemory,
    /// A transition vector with near-zero norm was used where a direction is
    /// required.
    DegenerateTransition,
    /// An edit referenced a node id that does not exist.
    UnknownNode(usize),
    /// An end-of-episode update ran without any observed steps.
    EmptyBuffer,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::EpisodeFinished => write!(f, "episode already terminated"),
            Error::EmptyMemory => write!(f, "transition memory is empty"),
            Error::DegenerateTransition => write!(f, "degenerate (near-zero) transition vector"),
            Error::UnknownNode(id) => write!(f, "unknown memory node id {id}"),
            Error::EmptyBuffer => write!(f, "no observations accumulated this episode"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
