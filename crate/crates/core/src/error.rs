use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("gradient output must be a scalar, got {numel} elements")]
    NotScalar { numel: usize },
    #[error("node {0} is not on this graph")]
    UnknownNode(usize),
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("class {class} has {available} examples, {needed} required")]
    InsufficientExamples { class: usize, available: usize, needed: usize },
    #[error("no admissible trajectory segment: {0}")]
    NoAdmissibleSegment(String),
    #[error("degenerate segment starting at epoch {start}: teacher did not move")]
    DegenerateSegment { start: usize },
    #[error("gradient norm below 1e-12, sharpness direction undefined")]
    StationaryPoint,
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("zero-norm column {0} in cosine distance")]
    ZeroColumn(usize),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: String) -> Self {
        Error::Shape { op, detail }
    }

    /// True for failures caused by numerics rather than by bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Divergence { .. } | Error::StationaryPoint
        )
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
