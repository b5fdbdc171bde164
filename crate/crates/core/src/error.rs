use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("key component {component} = {value} is outside [0, {cardinality})")]
    KeyOutOfRange {
        component: usize,
        value: u64,
        cardinality: u64,
    },
    #[error("key has {got} components, schema has {expected} dimensions")]
    KeyArity { expected: usize, got: usize },
    #[error("logical position {position} is outside [0, {total_space})")]
    PositionOutOfRange { position: u64, total_space: u64 },
    #[error("relation has no nonempty cells")]
    EmptyRelation,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("invalid density {0}: need density in (0, 1] and at least one cell")]
    InvalidDensity(f64),
    #[error("invalid skew {0}: need skew in [0, 1)")]
    InvalidSkew(f64),
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("logical positions are not strictly increasing at index {index}")]
    NotStrictlyIncreasing { index: usize },
    #[error("unsupported difference width {0} bits (expected 8, 16 or 32)")]
    InvalidDifferenceWidth(u32),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("frequency table is empty")]
    EmptyAlphabet,
    #[error("symbol {0} has no codeword")]
    SymbolNotInCode(u32),
    #[error("bitstream ended inside a codeword at bit {0}")]
    TruncatedStream(u64),
    #[error("occupancy {occupancy} outside [0, {pages}]")]
    InvalidOccupancy { occupancy: f64, pages: f64 },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("model hypothesis violated: {0}")]
    ModelHypothesisViolated(String),
    #[error("degenerate level profile: every level has a single page")]
    DegenerateProfile,
    #[error("memory {memory} is below the preloaded size {preloaded}")]
    InsufficientMemory { memory: f64, preloaded: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
