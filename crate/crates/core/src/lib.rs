pub use nalgebra;

pub mod algebra;
pub mod align;
pub mod attention;
pub mod error;
pub mod mrep;
pub mod rotation;
pub mod sample;
pub mod scan;
pub mod signal;

pub use algebra::{check_interchange, AffinePair, AxisBasis, Element, InterchangeReport};
pub use align::{AlignmentResult, ConcatMode};
pub use attention::{
    attend, attend_forced, AttentionInputs, AttentionOutput, JourneyTransforms, PositionGrid,
    Positions, SsmSystem,
};
pub use error::{Error, Result};
pub use mrep::MRepConfig;
pub use rotation::{AngleVector, BlockRotation, DenseTransform, Transform};
pub use scan::{Grid, PrefixResult, SequenceSignal};
pub use signal::Signal;
