use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("angle list must not be empty")]
    EmptyAngles,
    #[error("non-finite angle {value} at block {block}")]
    NonFiniteAngle { block: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("block rotations need an even dimension, got {0}")]
    OddDimension(usize),
    #[error("block index {block} out of range for {blocks} blocks")]
    BlockOutOfRange { block: usize, blocks: usize },
    #[error("matrix is singular or near-singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },
    #[error("matrix data must be square: {len} entries")]
    NotSquare { len: usize },
    #[error("axis {axis} out of range for {axes} axes")]
    AxisOutOfRange { axis: usize, axes: usize },
    #[error("powers differ on axis {axis} ({left} vs {right}) while composing along axis {along}")]
    AxisMismatch {
        axis: usize,
        along: usize,
        left: i64,
        right: i64,
    },
    #[error("elements belong to different axis bases")]
    BasisMismatch,
    #[error("axis basis mixes rotation and dense transforms")]
    MixedBackend,
    #[error("axis basis needs at least one transform")]
    EmptyBasis,
    #[error("power overflow on axis {axis}")]
    PowerOverflow { axis: usize },
    #[error("axis transforms {i} and {j} do not commute (commutator {residual:e})")]
    NonCommutingAxes { i: usize, j: usize, residual: f64 },
    #[error("interchange law needs two distinct axes, got {i} and {j}")]
    SameAxis { i: usize, j: usize },
    #[error("window origin {origin:?} out of range")]
    WindowOutOfRange { origin: Vec<usize> },
    #[error("signal too short: {len} positions for a window of {window}")]
    SignalTooShort { len: usize, window: usize },
    #[error("empty shift range [{min}, {max}]")]
    EmptyRange { min: i64, max: i64 },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("chunk size must be at least 1")]
    ZeroChunk,
}
