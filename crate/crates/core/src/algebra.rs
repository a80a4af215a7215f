//! Elements and axis-wise composition.
//!
//! An [`Element`] is a content vector together with one integer power per
//! axis over a shared [`AxisBasis`] `{R_1, .., R_D}`. Composing `x` and `y`
//! along axis `k` is only defined when their powers agree on every other
//! axis; the result has content `a + R_k^{n_k} b` and axis-`k` power
//! `n_k + m_k`. The 1D affine case `(a, A) o (b, B) = (a + A b, A B)` is
//! [`AffinePair::compose`].

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rotation::Transform;
use crate::sample;
use crate::signal::{add_assign, max_abs_diff};

/// Commutator threshold used to mark a basis as commuting.
pub const COMMUTING_TOLERANCE: f64 = 1e-9;
/// Content residual below which the interchange law is considered to hold.
pub const INTERCHANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AxisBasis {
    transforms: Vec<Transform>,
    dim: usize,
    commuting_verified: bool,
}

impl AxisBasis {
    /// All transforms must share one backend and one dimension.
    pub fn new(transforms: Vec<Transform>) -> Result<Self> {
        let first = transforms.first().ok_or(Error::EmptyBasis)?;
        let dim = first.dim();
        let rotation = first.is_rotation();
        for t in &transforms {
            if t.is_rotation() != rotation {
                return Err(Error::MixedBackend);
            }
            if t.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: t.dim(),
                });
            }
        }
        let commuting_verified =
            rotation || commutator_residuals(&transforms).0 < COMMUTING_TOLERANCE;
        Ok(Self {
            transforms,
            dim,
            commuting_verified,
        })
    }

    pub fn shared(transforms: Vec<Transform>) -> Result<Arc<Self>> {
        Self::new(transforms).map(Arc::new)
    }

    pub fn axes(&self) -> usize {
        self.transforms.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_rotation(&self) -> bool {
        self.transforms[0].is_rotation()
    }

    pub fn commuting_verified(&self) -> bool {
        self.commuting_verified
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn transform(&self, axis: usize) -> Result<&Transform> {
        self.transforms.get(axis).ok_or(Error::AxisOutOfRange {
            axis,
            axes: self.axes(),
        })
    }

    /// `max |R_i R_j - R_j R_i|` for one pair of axes.
    pub fn commutator(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.transform(i)?.commutator_norm(self.transform(j)?))
    }

    /// Fails with `NonCommutingAxes` naming the worst pair.
    pub fn require_commuting(&self) -> Result<()> {
        if self.commuting_verified {
            return Ok(());
        }
        let (residual, i, j) = commutator_residuals(&self.transforms);
        Err(Error::NonCommutingAxes { i, j, residual })
    }

    /// `R_k^n v`.
    pub fn shift(&self, axis: usize, power: i64, v: &[f64]) -> Result<Vec<f64>> {
        let t = self.transform(axis)?;
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        if power == 0 {
            return Ok(v.to_vec());
        }
        t.pow(power)?.apply(v)
    }

    /// `R_1^{p_1} .. R_D^{p_D}` as one transform, multiplied in axis order.
    pub fn combined(&self, powers: &[i64]) -> Result<Transform> {
        self.combined_in_order(powers, &(0..self.axes()).collect::<Vec<_>>())
    }

    /// Same product with the factors multiplied in `order`.
    pub fn combined_in_order(&self, powers: &[i64], order: &[usize]) -> Result<Transform> {
        if powers.len() != self.axes() {
            return Err(Error::DimMismatch {
                expected: self.axes(),
                found: powers.len(),
            });
        }
        let mut acc = self.transforms[0].identity_like();
        for &axis in order {
            let t = self.transform(axis)?;
            acc = acc.compose(&t.pow(powers[axis])?)?;
        }
        Ok(acc)
    }
}

/// Worst commutator over all pairs, with its axes.
fn commutator_residuals(ts: &[Transform]) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for i in 0..ts.len() {
        for j in i + 1..ts.len() {
            let r = ts[i].commutator_norm(&ts[j]);
            if r > worst.0 || r.is_nan() {
                worst = (r, i, j);
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct Element {
    content: Vec<f64>,
    powers: Vec<i64>,
    basis: Arc<AxisBasis>,
}

impl PartialEq for Element {
    fn eq(&self, other: &Self) -> bool {
        self.content == other.content
            && self.powers == other.powers
            && same_basis(&self.basis, &other.basis)
    }
}

fn same_basis(a: &Arc<AxisBasis>, b: &Arc<AxisBasis>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Element {
    pub fn new(content: Vec<f64>, powers: Vec<i64>, basis: &Arc<AxisBasis>) -> Result<Self> {
        if content.len() != basis.dim() {
            return Err(Error::DimMismatch {
                expected: basis.dim(),
                found: content.len(),
            });
        }
        if powers.len() != basis.axes() {
            return Err(Error::DimMismatch {
                expected: basis.axes(),
                found: powers.len(),
            });
        }
        Ok(Self {
            content,
            powers,
            basis: Arc::clone(basis),
        })
    }

    /// Zero content, all powers zero.
    pub fn identity(basis: &Arc<AxisBasis>) -> Self {
        Self {
            content: vec![0.0; basis.dim()],
            powers: vec![0; basis.axes()],
            basis: Arc::clone(basis),
        }
    }

    pub fn content(&self) -> &[f64] {
        &self.content
    }

    pub fn powers(&self) -> &[i64] {
        &self.powers
    }

    pub fn basis(&self) -> &Arc<AxisBasis> {
        &self.basis
    }

    /// `self o_k other`. Uses `self`'s axis-`k` power in the content update.
    pub fn compose_axis(&self, other: &Self, axis: usize) -> Result<Self> {
        if !same_basis(&self.basis, &other.basis) {
            return Err(Error::BasisMismatch);
        }
        let axes = self.basis.axes();
        if axis >= axes {
            return Err(Error::AxisOutOfRange { axis, axes });
        }
        for (j, (&l, &r)) in self.powers.iter().zip(&other.powers).enumerate() {
            if j != axis && l != r {
                return Err(Error::AxisMismatch {
                    axis: j,
                    along: axis,
                    left: l,
                    right: r,
                });
            }
        }
        self.shifted_merge(other, axis, self.powers.clone())
    }

    /// Content `a + R_k^{n_k} b`, axis-`k` power `n_k + m_k`, remaining
    /// powers taken from `powers`.
    pub(crate) fn shifted_merge(
        &self,
        other: &Self,
        axis: usize,
        mut powers: Vec<i64>,
    ) -> Result<Self> {
        let n_k = self.powers[axis];
        powers[axis] = n_k
            .checked_add(other.powers[axis])
            .ok_or(Error::PowerOverflow { axis })?;
        let mut content = self.basis.shift(axis, n_k, &other.content)?;
        add_assign(&mut content, &self.content);
        Ok(Self {
            content,
            powers,
            basis: Arc::clone(&self.basis),
        })
    }

    /// Axis-local inverse: requires zero powers off `axis`.
    ///
    /// The result has power `-n_k` and content `-(R_k^{-n_k} a)`, so that
    /// `self o_k inverse` is the identity element.
    pub fn inverse_axis(&self, axis: usize) -> Result<Self> {
        let axes = self.basis.axes();
        if axis >= axes {
            return Err(Error::AxisOutOfRange { axis, axes });
        }
        for (j, &p) in self.powers.iter().enumerate() {
            if j != axis && p != 0 {
                return Err(Error::AxisMismatch {
                    axis: j,
                    along: axis,
                    left: p,
                    right: 0,
                });
            }
        }
        let n_k = self.powers[axis];
        let neg = n_k.checked_neg().ok_or(Error::PowerOverflow { axis })?;
        let mut content = self.basis.shift(axis, neg, &self.content)?;
        content.iter_mut().for_each(|x| *x = -*x);
        let mut powers = vec![0; axes];
        powers[axis] = neg;
        Ok(Self {
            content,
            powers,
            basis: Arc::clone(&self.basis),
        })
    }

    /// Negates every power and maps content to `-(prod R_i^{-n_i}) a`.
    ///
    /// No composition law is attached to this when more than one power is
    /// nonzero; it exists for bookkeeping only.
    pub fn formal_inverse(&self) -> Result<Self> {
        let powers: Vec<i64> = self
            .powers
            .iter()
            .enumerate()
            .map(|(axis, p)| p.checked_neg().ok_or(Error::PowerOverflow { axis }))
            .collect::<Result<_>>()?;
        let t = self.basis.combined(&powers)?;
        let mut content = t.apply(&self.content)?;
        content.iter_mut().for_each(|x| *x = -*x);
        Ok(Self {
            content,
            powers,
            basis: Arc::clone(&self.basis),
        })
    }

    /// Largest content difference, or infinity on a power mismatch.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.powers != other.powers {
            return f64::INFINITY;
        }
        max_abs_diff(&self.content, &other.content)
    }
}

/// `(a, A)`: the one-dimensional affine element.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePair {
    pub offset: Vec<f64>,
    pub transform: Transform,
}

impl AffinePair {
    pub fn new(offset: Vec<f64>, transform: Transform) -> Result<Self> {
        if offset.len() != transform.dim() {
            return Err(Error::DimMismatch {
                expected: transform.dim(),
                found: offset.len(),
            });
        }
        Ok(Self { offset, transform })
    }

    pub fn identity(prototype: &Transform) -> Self {
        Self {
            offset: vec![0.0; prototype.dim()],
            transform: prototype.identity_like(),
        }
    }

    /// `(a, A) o (b, B) = (a + A b, A B)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.offset.len() != other.offset.len() {
            return Err(Error::DimMismatch {
                expected: self.offset.len(),
                found: other.offset.len(),
            });
        }
        let mut offset = self.transform.apply(&other.offset)?;
        add_assign(&mut offset, &self.offset);
        Ok(Self {
            offset,
            transform: self.transform.compose(&other.transform)?,
        })
    }

    /// `(a, A)^-1 = (A^-1 (-a), A^-1)`.
    pub fn inverse(&self) -> Result<Self> {
        let inv = self.transform.inverse()?;
        let neg: Vec<f64> = self.offset.iter().map(|x| -x).collect();
        Ok(Self {
            offset: inv.apply(&neg)?,
            transform: inv,
        })
    }
}

/// Outcome of sampling both sides of
/// `(x o_i y) o_j (z o_i w) = (x o_j z) o_i (y o_j w)`.
#[derive(Debug, Clone)]
pub struct InterchangeReport {
    pub holds: bool,
    pub samples: usize,
    pub max_residual: f64,
    pub commutator: f64,
    /// `[x, y, z, w]` with the largest residual, when the law fails.
    pub counterexample: Option<[Element; 4]>,
}

/// Samples random valid quadruples and evaluates both sides of the law.
///
/// Quadruples are laid out like a 2x2 block grid: `x` has extents
/// `(p_i, p_j)`, `y` sits beside it along `i` with `(q_i, p_j)`, `z` below
/// along `j` with `(p_i, q_j)`, and `w` diagonally with `(q_i, q_j)`. Other
/// axes share one random power. This makes all four compositions defined.
pub fn check_interchange(
    basis: &Arc<AxisBasis>,
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<InterchangeReport> {
    let axes = basis.axes();
    for axis in [i, j] {
        if axis >= axes {
            return Err(Error::AxisOutOfRange { axis, axes });
        }
    }
    if i == j {
        return Err(Error::SameAxis { i, j });
    }
    let mut rng = sample::rng(seed);
    let d = basis.dim();
    let mut max_residual = 0.0f64;
    let mut worst: Option<[Element; 4]> = None;
    let mut powers_ok = true;
    for _ in 0..samples {
        let common: Vec<i64> = (0..axes).map(|_| sample::power(&mut rng, 3)).collect();
        let (pi, qi) = (
            sample::nonzero_power(&mut rng, 3),
            sample::nonzero_power(&mut rng, 3),
        );
        let (pj, qj) = (
            sample::nonzero_power(&mut rng, 3),
            sample::nonzero_power(&mut rng, 3),
        );
        let mut make = |ei: i64, ej: i64| -> Result<Element> {
            let mut p = common.clone();
            p[i] = ei;
            p[j] = ej;
            Element::new(sample::vector(&mut rng, d), p, basis)
        };
        let x = make(pi, pj)?;
        let y = make(qi, pj)?;
        let z = make(pi, qj)?;
        let w = make(qi, qj)?;
        let lhs = x
            .compose_axis(&y, i)?
            .compose_axis(&z.compose_axis(&w, i)?, j)?;
        let rhs = x
            .compose_axis(&z, j)?
            .compose_axis(&y.compose_axis(&w, j)?, i)?;
        if lhs.powers() != rhs.powers() {
            powers_ok = false;
        }
        let r = max_abs_diff(lhs.content(), rhs.content());
        if r > max_residual || worst.is_none() {
            max_residual = max_residual.max(r);
            worst = Some([x, y, z, w]);
        }
    }
    let holds = powers_ok && max_residual < INTERCHANGE_TOLERANCE;
    Ok(InterchangeReport {
        holds,
        samples,
        max_residual,
        commutator: basis.commutator(i, j)?,
        counterexample: if holds { None } else { worst },
    })
}
