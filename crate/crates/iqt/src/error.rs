//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The CLI maps these onto exit codes: parameter/usage problems -> 1,
/// data/format/shape problems -> 2, numeric/training failures -> 3.
#[derive(Debug, Error)]
pub enum IqtError {
    /// Malformed file contents (bad magic, truncated header, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Valid file, but a feature this toolkit does not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Array dimensions incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input data violates a precondition (too few voxels, out-of-range values, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid scalar parameter (non-positive sigma, bad factor, ...).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Slice geometry that cannot produce a valid output.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Invalid phantom specification (non-nested ellipsoids, ...).
    #[error("spec error: {0}")]
    Spec(String),

    /// Non-finite value encountered during computation.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Training diverged or could not proceed.
    #[error("training error: {0}")]
    Training(String),

    /// A mixture component degenerated during EM.
    #[error("component collapse at EM iteration {iter}: {msg}")]
    Collapse { iter: usize, msg: String },

    /// Failure inside one step of the LF simulation pipeline.
    ///
    /// Steps are numbered 1-5: membership input, skull-stripping,
    /// down-sampling, contrast change, noise addition.
    #[error("simulation step {step} ({name}): {source}")]
    SimStep {
        step: u8,
        name: &'static str,
        #[source]
        source: Box<IqtError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl IqtError {
    /// Wrap an error with the simulation step it occurred in.
    pub fn at_sim_step(self, step: u8, name: &'static str) -> IqtError {
        IqtError::SimStep {
            step,
            name,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, IqtError>;
