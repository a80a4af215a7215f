//! Transform backends.
//!
//! [`BlockRotation`] is a block-diagonal stack of independent 2x2 rotations
//! stored as one angle per block. Composition is angle addition, so any two
//! rotations of equal dimension commute exactly, and application costs
//! O(d). Angles are kept unreduced; [`AngleVector::canonical`] wraps them
//! into (-pi, pi] only when asked.
//!
//! [`DenseTransform`] is a general invertible matrix. It covers odd
//! dimensions and non-commuting families, and serves as the oracle for the
//! rotation backend.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum |det| accepted by [`DenseTransform::new`].
pub const SINGULAR_DET: f64 = 1e-12;
/// Maximum accepted `max |M M^-1 - I|` for a computed inverse.
pub const INVERSE_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AngleVector {
    angles: Vec<f64>,
}

impl AngleVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::EmptyAngles);
        }
        if let Some((block, &value)) = angles.iter().enumerate().find(|(_, a)| !a.is_finite()) {
            return Err(Error::NonFiniteAngle { block, value });
        }
        Ok(Self { angles })
    }

    pub fn zeros(blocks: usize) -> Result<Self> {
        Self::new(vec![0.0; blocks])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.angles
    }

    pub fn blocks(&self) -> usize {
        self.angles.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.angles.len()
    }

    /// Angles wrapped into (-pi, pi].
    pub fn canonical(&self) -> Self {
        Self {
            angles: self.angles.iter().map(|&a| canonical_angle(a)).collect(),
        }
    }
}

pub fn canonical_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRotation {
    base: AngleVector,
}

impl BlockRotation {
    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        Ok(Self {
            base: AngleVector::new(angles)?,
        })
    }

    pub fn from_angle_vector(base: AngleVector) -> Self {
        Self { base }
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::OddDimension(dim));
        }
        Self::from_angles(vec![0.0; dim / 2])
    }

    pub fn angles(&self) -> &[f64] {
        self.base.as_slice()
    }

    pub fn angle_vector(&self) -> &AngleVector {
        &self.base
    }

    pub fn blocks(&self) -> usize {
        self.base.blocks()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn check_vec(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_vec(v.len())?;
        let mut out = vec![0.0; v.len()];
        rotate_into(self.angles(), v, &mut out);
        Ok(out)
    }

    /// Elementwise angle sum. The dense form equals `self * other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let angles = self
            .angles()
            .iter()
            .zip(other.angles())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            base: AngleVector { angles },
        })
    }

    /// Angles scaled by `n`; `pow(-1)` is the inverse and `pow(0)` the identity.
    pub fn pow(&self, n: i64) -> Self {
        let k = n as f64;
        Self {
            base: AngleVector {
                angles: self.angles().iter().map(|a| a * k).collect(),
            },
        }
    }

    pub fn inverse(&self) -> Self {
        self.pow(-1)
    }

    pub fn to_dense(&self) -> DenseTransform {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (b, &theta) in self.angles().iter().enumerate() {
            let (s, c) = theta.sin_cos();
            let i = 2 * b;
            m[(i, i)] = c;
            m[(i, i + 1)] = -s;
            m[(i + 1, i)] = s;
            m[(i + 1, i + 1)] = c;
        }
        DenseTransform { matrix: m }
    }

    /// Derivative of `R^n v` with respect to the angle of one block.
    ///
    /// Inside the block this is `n` times the rotation by `n*theta + pi/2`
    /// applied to the block of `v`; every other entry is zero.
    pub fn apply_dtheta(&self, n: i64, v: &[f64], block: usize) -> Result<Vec<f64>> {
        self.check_vec(v.len())?;
        if block >= self.blocks() {
            return Err(Error::BlockOutOfRange {
                block,
                blocks: self.blocks(),
            });
        }
        let mut out = vec![0.0; v.len()];
        if n == 0 {
            return Ok(out);
        }
        let k = n as f64;
        let (s, c) = (k * self.angles()[block] + FRAC_PI_2).sin_cos();
        let (x, y) = (v[2 * block], v[2 * block + 1]);
        out[2 * block] = k * (c * x - s * y);
        out[2 * block + 1] = k * (s * x + c * y);
        Ok(out)
    }
}

/// `out = R(angles) v`, block by block.
pub(crate) fn rotate_into(angles: &[f64], v: &[f64], out: &mut [f64]) {
    for ((&theta, src), dst) in angles
        .iter()
        .zip(v.chunks_exact(2))
        .zip(out.chunks_exact_mut(2))
    {
        let (s, c) = theta.sin_cos();
        dst[0] = c * src[0] - s * src[1];
        dst[1] = s * src[0] + c * src[1];
    }
}

/// `acc += R(angles) v`.
pub(crate) fn rotate_add(angles: &[f64], v: &[f64], acc: &mut [f64]) {
    for ((&theta, src), dst) in angles
        .iter()
        .zip(v.chunks_exact(2))
        .zip(acc.chunks_exact_mut(2))
    {
        let (s, c) = theta.sin_cos();
        dst[0] += c * src[0] - s * src[1];
        dst[1] += s * src[0] + c * src[1];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTransform {
    matrix: DMatrix<f64>,
}

impl DenseTransform {
    /// Builds from row-major entries, rejecting matrices with |det| <= 1e-12.
    pub fn new(dim: usize, row_major: &[f64]) -> Result<Self> {
        if dim == 0 || row_major.len() != dim * dim {
            return Err(Error::NotSquare {
                len: row_major.len(),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, row_major))
    }

    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotSquare { len: matrix.len() });
        }
        let det = matrix.clone().lu().determinant();
        if !det.is_finite() || det.abs() <= SINGULAR_DET {
            return Err(Error::SingularMatrix { det });
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.matrix.transpose().as_slice().to_vec()
    }

    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: &self.matrix * &other.matrix,
        })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim();
        if v.len() != d || out.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: v.len(),
            });
        }
        out.fill(0.0);
        // Column-major storage: accumulate column by column.
        for (j, col) in self.matrix.column_iter().enumerate() {
            let x = v[j];
            for (o, m) in out.iter_mut().zip(col.iter()) {
                *o += m * x;
            }
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = self.matrix.clone().lu();
        let det = lu.determinant();
        let inv = lu.try_inverse().ok_or(Error::SingularMatrix { det })?;
        let residual = (&self.matrix * &inv - DMatrix::identity(self.dim(), self.dim()))
            .abs()
            .max();
        if !residual.is_finite() || residual >= INVERSE_RESIDUAL {
            return Err(Error::SingularMatrix { det });
        }
        Ok(Self { matrix: inv })
    }

    pub fn pow(&self, n: i64) -> Result<Self> {
        let base = if n < 0 { self.inverse()? } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = DMatrix::identity(self.dim(), self.dim());
        let mut sq = base.matrix;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &sq;
            }
            e >>= 1;
            if e > 0 {
                sq = &sq * &sq;
            }
        }
        Ok(Self { matrix: acc })
    }

    /// `max |A B - B A|`.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        (&self.matrix * &other.matrix - &other.matrix * &self.matrix)
            .abs()
            .max()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.matrix - &other.matrix).abs().max()
    }
}

/// Either backend behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Rotation(BlockRotation),
    Dense(DenseTransform),
}

impl From<BlockRotation> for Transform {
    fn from(r: BlockRotation) -> Self {
        Transform::Rotation(r)
    }
}

impl From<DenseTransform> for Transform {
    fn from(m: DenseTransform) -> Self {
        Transform::Dense(m)
    }
}

impl Transform {
    pub fn dim(&self) -> usize {
        match self {
            Transform::Rotation(r) => r.dim(),
            Transform::Dense(m) => m.dim(),
        }
    }

    pub fn is_rotation(&self) -> bool {
        matches!(self, Transform::Rotation(_))
    }

    /// Identity of the same backend and dimension.
    pub fn identity_like(&self) -> Self {
        match self {
            Transform::Rotation(r) => Transform::Rotation(r.pow(0)),
            Transform::Dense(m) => Transform::Dense(DenseTransform::identity(m.dim())),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Transform::Rotation(r) => r.apply(v),
            Transform::Dense(m) => m.apply(v),
        }
    }

    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            Transform::Rotation(r) => {
                r.check_vec(v.len())?;
                r.check_vec(out.len())?;
                rotate_into(r.angles(), v, out);
                Ok(())
            }
            Transform::Dense(m) => m.apply_into(v, out),
        }
    }

    /// Matrix product `self * other`; mixed backends fall back to dense.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        match (self, other) {
            (Transform::Rotation(a), Transform::Rotation(b)) => Ok(a.compose(b)?.into()),
            _ => Ok(self.to_dense().compose(&other.to_dense())?.into()),
        }
    }

    pub fn pow(&self, n: i64) -> Result<Self> {
        match self {
            Transform::Rotation(r) => Ok(r.pow(n).into()),
            Transform::Dense(m) => Ok(m.pow(n)?.into()),
        }
    }

    pub fn inverse(&self) -> Result<Self> {
        self.pow(-1)
    }

    pub fn to_dense(&self) -> DenseTransform {
        match self {
            Transform::Rotation(r) => r.to_dense(),
            Transform::Dense(m) => m.clone(),
        }
    }

    /// `max |A B - B A|` in dense form; exactly zero for two rotations.
    pub fn commutator_norm(&self, other: &Self) -> f64 {
        match (self, other) {
            (Transform::Rotation(a), Transform::Rotation(b)) if a.dim() == b.dim() => 0.0,
            _ => self.to_dense().commutator_norm(&other.to_dense()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_block_matrix(angles: &[f64]) -> DMatrix<f64> {
        let d = 2 * angles.len();
        DMatrix::from_fn(d, d, |i, j| {
            if i / 2 != j / 2 {
                return 0.0;
            }
            let t = angles[i / 2];
            match (i % 2, j % 2) {
                (0, 0) | (1, 1) => t.cos(),
                (0, 1) => -t.sin(),
                _ => t.sin(),
            }
        })
    }

    #[test]
    fn zero_angle_is_identity() {
        let r = BlockRotation::from_angles(vec![0.0]).unwrap();
        assert_eq!(r.to_dense().matrix(), &DMatrix::identity(2, 2));
        assert_eq!(r.apply(&[3.0, -2.0]).unwrap(), vec![3.0, -2.0]);
    }

    #[test]
    fn quarter_turn() {
        let r = BlockRotation::from_angles(vec![FRAC_PI_2]).unwrap();
        let out = r.apply(&[1.0, 0.0]).unwrap();
        assert!(out[0].abs() < 1e-15);
        assert!((out[1] - 1.0).abs() < 1e-15);
        assert_eq!(r.apply(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn half_turn_dense() {
        let m = BlockRotation::from_angles(vec![PI]).unwrap().to_dense();
        let expected = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(m.max_abs_diff(&DenseTransform::from_matrix(expected).unwrap()) < 1e-15);
    }

    #[test]
    fn to_dense_matches_direct_blocks() {
        let angles = [0.3, -0.7];
        let r = BlockRotation::from_angles(angles.to_vec()).unwrap();
        let m = r.to_dense();
        let direct = direct_block_matrix(&angles);
        assert!((m.matrix() - &direct).abs().max() <= 1e-15);
        let mtm = m.matrix().transpose() * m.matrix();
        assert!((mtm - DMatrix::identity(4, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn apply_matches_dense_product() {
        let r = BlockRotation::from_angles(vec![0.3, -0.7]).unwrap();
        let v = [1.0, 2.0, 3.0, 4.0];
        let fast = r.apply(&v).unwrap();
        let dense = r.to_dense().matrix() * nalgebra::DVector::from_column_slice(&v);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_adds_angles() {
        let a = BlockRotation::from_angles(vec![0.2]).unwrap();
        let b = BlockRotation::from_angles(vec![0.3]).unwrap();
        assert_eq!(a.compose(&b).unwrap().angles(), &[0.5]);
        let z = BlockRotation::from_angles(vec![0.0]).unwrap();
        assert_eq!(a.compose(&z).unwrap(), a);
        let c = BlockRotation::from_angles(vec![0.4, -1.1]).unwrap();
        let e = BlockRotation::from_angles(vec![2.5, 0.9]).unwrap();
        assert_eq!(c.compose(&e).unwrap(), e.compose(&c).unwrap());
    }

    #[test]
    fn pow_laws() {
        let r = BlockRotation::from_angles(vec![0.2, -1.3]).unwrap();
        assert_eq!(r.pow(0).angles(), &[0.0, -0.0]);
        assert!((r.pow(3).angles()[0] - 0.6).abs() < 1e-15);
        let round = r.pow(-5).compose(&r.pow(5)).unwrap().to_dense();
        assert!(round.max_abs_diff(&DenseTransform::identity(4)) < 1e-12);
        let inv = r.to_dense().inverse().unwrap();
        assert!(inv.max_abs_diff(&r.pow(-1).to_dense()) < 1e-12);
    }

    #[test]
    fn dense_inverse_of_rotation() {
        let m = BlockRotation::from_angles(vec![0.4]).unwrap().to_dense();
        let back = BlockRotation::from_angles(vec![-0.4]).unwrap().to_dense();
        assert!(m.inverse().unwrap().max_abs_diff(&back) < 1e-12);
    }

    #[test]
    fn dense_identity_compose_and_noncommuting_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut random = || -> DenseTransform {
            let data: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            DenseTransform::new(3, &data).unwrap()
        };
        let a = random();
        let b = random();
        assert_eq!(DenseTransform::identity(3).compose(&a).unwrap(), a);
        let ab = a.compose(&b).unwrap();
        let ba = b.compose(&a).unwrap();
        assert!(ab.max_abs_diff(&ba) > 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(BlockRotation::from_angles(vec![]), Err(Error::EmptyAngles));
        assert!(matches!(
            BlockRotation::from_angles(vec![0.1, f64::NAN]),
            Err(Error::NonFiniteAngle { block: 1, .. })
        ));
        let r = BlockRotation::from_angles(vec![0.1]).unwrap();
        assert!(matches!(r.apply(&[1.0]), Err(Error::DimMismatch { .. })));
        assert!(matches!(
            r.apply_dtheta(1, &[1.0, 0.0], 1),
            Err(Error::BlockOutOfRange { .. })
        ));
        assert!(matches!(
            DenseTransform::new(2, &[1.0, 2.0, 2.0, 4.0]),
            Err(Error::SingularMatrix { .. })
        ));
        assert!(BlockRotation::identity(3).is_err());
    }

    #[test]
    fn canonical_range() {
        for a in [-7.0, -PI, 0.0, PI, 3.5, 12.0, 1e3] {
            let c = canonical_angle(a);
            assert!(c > -PI && c <= PI, "{a} -> {c}");
            assert!(((a - c) / TAU - ((a - c) / TAU).round()).abs() < 1e-9);
        }
        assert_eq!(canonical_angle(-PI), PI);
    }

    #[test]
    fn dtheta_trivial_cases() {
        let r = BlockRotation::from_angles(vec![0.0]).unwrap();
        let d = r.apply_dtheta(1, &[1.0, 0.0], 0).unwrap();
        assert!(d[0].abs() < 1e-15 && (d[1] - 1.0).abs() < 1e-15);
        assert_eq!(r.apply_dtheta(0, &[1.0, 0.0], 0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn dtheta_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let angles: Vec<f64> = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
        let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = BlockRotation::from_angles(angles.clone()).unwrap();
        let h = 1e-6;
        for block in 0..3 {
            let analytic = r.apply_dtheta(3, &v, block).unwrap();
            let mut plus = angles.clone();
            plus[block] += h;
            let mut minus = angles.clone();
            minus[block] -= h;
            let fp = BlockRotation::from_angles(plus)
                .unwrap()
                .pow(3)
                .apply(&v)
                .unwrap();
            let fm = BlockRotation::from_angles(minus)
                .unwrap()
                .pow(3)
                .apply(&v)
                .unwrap();
            let scale = analytic.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for i in 0..6 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - analytic[i]).abs() <= 1e-6 * scale.max(1.0));
            }
        }
    }
}
