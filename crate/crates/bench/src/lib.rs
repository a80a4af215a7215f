//! Seeded fixtures shared by the benchmarks.

use axiscomp_core::scan::{PositionTransforms, SequenceSignal};
use axiscomp_core::{sample, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Rotation,
    Dense,
}

impl Kind {
    pub fn label(self) -> &'static str {
        match self {
            Kind::Rotation => "rotation",
            Kind::Dense => "dense",
        }
    }
}

/// One transform of width `d`; dense ones are orthogonal so long products stay bounded.
pub fn transform(kind: Kind, d: usize, seed: u64) -> Transform {
    let mut rng = sample::rng(seed);
    match kind {
        Kind::Rotation => sample::rotation(&mut rng, d / 2).into(),
        Kind::Dense => sample::orthogonal(&mut rng, d).into(),
    }
}

pub fn tied_sequence(kind: Kind, len: usize, d: usize, seed: u64) -> SequenceSignal {
    let values = sample::signal(&mut sample::rng(seed), vec![len], d);
    SequenceSignal::tied(values, transform(kind, d, seed ^ 1)).expect("matching widths")
}

pub fn per_position_sequence(kind: Kind, len: usize, d: usize, seed: u64) -> SequenceSignal {
    let values = sample::signal(&mut sample::rng(seed), vec![len], d);
    let ts = (0..len)
        .map(|i| transform(kind, d, seed.wrapping_add(i as u64 + 1)))
        .collect();
    SequenceSignal::new(values, PositionTransforms::PerPosition(ts)).expect("matching widths")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seeded() {
        assert_eq!(
            tied_sequence(Kind::Dense, 8, 4, 3),
            tied_sequence(Kind::Dense, 8, 4, 3)
        );
        assert_eq!(per_position_sequence(Kind::Rotation, 5, 6, 1).len(), 5);
    }
}
