//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation that is well-posed on paper lost numerical meaning.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// The LP polynomial has roots on or outside the unit circle, so the
    /// all-pole inverse filter would be unstable.
    #[error("LP model of order {order} is not minimum-phase ({detail})")]
    NonMinimumPhase { order: usize, detail: String },

    /// Reference spectrogram norm fell below the division guard.
    #[error("reference spectrogram norm below division guard {0:e}")]
    DivisionGuard(f64),

    /// Optimization produced a non-finite loss; the history gathered so far
    /// is attached.
    #[error("optimization aborted at step {step}: non-finite loss")]
    AbortedRun {
        step: usize,
        loss_history: Vec<f64>,
    },

    #[error("malformed wav file: {0}")]
    MalformedWav(String),

    #[error("unsupported wav format code {0}, only PCM (1) is accepted")]
    UnsupportedFormat(u16),

    #[error("unsupported channel count {0}, only mono is accepted")]
    UnsupportedChannels(u16),

    #[error("unsupported bit depth {0}, only 16-bit is accepted")]
    UnsupportedBitDepth(u16),

    #[error("malformed mask file: {0}")]
    MalformedMask(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an I/O failure with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Shorthand for an [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
