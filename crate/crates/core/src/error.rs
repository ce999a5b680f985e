use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("timestep {t} out of range [{lo}, {hi}]")]
    TimestepOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("non-finite loss at batch index {index}")]
    NonFiniteLoss { index: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint has bad magic bytes")]
    CheckpointBadMagic,

    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint truncated: expected {expected} bytes of payload, got {got}")]
    CheckpointTruncated { expected: usize, got: usize },

    #[error("checkpoint header disagrees with payload: {0}")]
    CheckpointHeaderMismatch(String),

    #[error("field container malformed: {0}")]
    FieldContainer(String),

    #[error("particle ensemble collapsed: all log-weights are -inf; \
             raise the likelihood noise floor or use more particles")]
    EnsembleCollapse,

    #[error("observation index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("operator is not a coordinate mask")]
    NonMaskOperator,

    #[error("reference vector has zero norm")]
    ZeroNormReference,

    #[error("channel {channel} is constant; cannot fit a [-1, 1] map")]
    ConstantChannel { channel: usize },

    #[error("forward model '{id}' failed on sample {index}: {source}")]
    ForwardModel {
        id: String,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate orientation vector at pixel {pixel}: norm below tolerance")]
    DegenerateOrientation { pixel: usize },

    #[error("need at least {needed} samples, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
