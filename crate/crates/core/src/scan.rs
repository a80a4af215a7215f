//! Folding sequences and grids into single embeddings.
//!
//! A sequence of elements `e_i = (v_i, R_i)` folds left under the affine
//! monoid `(a, A) o (b, B) = (a + A b, A B)`, so
//! `E = v_1 + R_1 v_2 + R_1 R_2 v_3 + ...`. For commuting transforms this
//! coincides with any other ordering of the products.
//!
//! The blocked parallel scan runs a local inclusive scan inside each chunk,
//! folds the chunk totals sequentially into carries, then fixes every chunk
//! up with its carry. The chunking fixes the arithmetic, so results do not
//! depend on the thread count.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::algebra::{AffinePair, AxisBasis, Element};
use crate::error::{Error, Result};
use crate::rotation::{rotate_add, BlockRotation, Transform};
use crate::signal::{add_assign, multi_indices, Signal};

#[derive(Debug, Clone, PartialEq)]
pub enum PositionTransforms {
    /// One transform shared by every position.
    Tied(Transform),
    /// One transform per position; the last only enters the final product.
    PerPosition(Vec<Transform>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSignal {
    values: Signal,
    transforms: PositionTransforms,
}

impl SequenceSignal {
    pub fn new(values: Signal, transforms: PositionTransforms) -> Result<Self> {
        if values.rank() != 1 {
            return Err(Error::InvalidShape(format!(
                "sequence values must be rank 1, got shape {:?}",
                values.shape()
            )));
        }
        let d = values.dim();
        let check = |t: &Transform| {
            if t.dim() != d {
                Err(Error::DimMismatch {
                    expected: d,
                    found: t.dim(),
                })
            } else {
                Ok(())
            }
        };
        match &transforms {
            PositionTransforms::Tied(t) => check(t)?,
            PositionTransforms::PerPosition(ts) => {
                if ts.len() != values.positions() {
                    return Err(Error::DimMismatch {
                        expected: values.positions(),
                        found: ts.len(),
                    });
                }
                ts.iter().try_for_each(check)?;
            }
        }
        Ok(Self { values, transforms })
    }

    pub fn tied(values: Signal, transform: impl Into<Transform>) -> Result<Self> {
        Self::new(values, PositionTransforms::Tied(transform.into()))
    }

    pub fn len(&self) -> usize {
        self.values.positions()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn values(&self) -> &Signal {
        &self.values
    }

    pub fn transforms(&self) -> &PositionTransforms {
        &self.transforms
    }

    pub fn transform_at(&self, i: usize) -> &Transform {
        match &self.transforms {
            PositionTransforms::Tied(t) => t,
            PositionTransforms::PerPosition(ts) => &ts[i],
        }
    }

    /// The elements in `range` as a standalone sequence.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::IndexOutOfRange {
                index: range.end,
                len: self.len(),
            });
        }
        let d = self.dim();
        let data = self.values.data()[range.start * d..range.end * d].to_vec();
        let values = Signal::new(vec![range.len()], d, data)?;
        let transforms = match &self.transforms {
            PositionTransforms::Tied(t) => PositionTransforms::Tied(t.clone()),
            PositionTransforms::PerPosition(ts) => {
                PositionTransforms::PerPosition(ts[range].to_vec())
            }
        };
        Ok(Self { values, transforms })
    }

    /// The whole sequence folded into one affine pair `(E, R_1 .. R_T)`.
    pub fn fold_affine(&self) -> Result<AffinePair> {
        let mut acc = AffinePair::new(self.values.row(0).to_vec(), self.transform_at(0).clone())?;
        for i in 1..self.len() {
            let e = AffinePair::new(self.values.row(i).to_vec(), self.transform_at(i).clone())?;
            acc = acc.compose(&e)?;
        }
        Ok(acc)
    }

    fn kernel(&self) -> Kernel<'_> {
        match &self.transforms {
            PositionTransforms::Tied(Transform::Rotation(r)) => Kernel::TiedRotation(r.angles()),
            PositionTransforms::PerPosition(ts) if ts.iter().all(Transform::is_rotation) => {
                Kernel::Rotations(
                    ts.iter()
                        .map(|t| match t {
                            Transform::Rotation(r) => r.angles(),
                            Transform::Dense(_) => unreachable!(),
                        })
                        .collect(),
                )
            }
            PositionTransforms::Tied(t) => Kernel::TiedDense(t.to_dense().matrix().clone()),
            PositionTransforms::PerPosition(ts) => {
                Kernel::Dense(ts.iter().map(|t| t.to_dense().matrix().clone()).collect())
            }
        }
    }
}

/// Inclusive prefixes `E_1 .. E_T` plus the full transform product.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixResult {
    pub prefixes: Signal,
    pub final_transform: Transform,
}

enum Kernel<'a> {
    TiedRotation(&'a [f64]),
    Rotations(Vec<&'a [f64]>),
    TiedDense(DMatrix<f64>),
    Dense(Vec<DMatrix<f64>>),
}

impl Kernel<'_> {
    fn dense_at(&self, i: usize) -> &DMatrix<f64> {
        match self {
            Kernel::TiedDense(m) => m,
            Kernel::Dense(ms) => &ms[i],
            _ => unreachable!("rotation kernel"),
        }
    }

    /// Local inclusive scan of positions `start..start + rows` into `out`.
    /// Returns the product of the transforms over the chunk.
    fn local_scan(&self, values: &[f64], d: usize, start: usize, out: &mut [f64]) -> Transform {
        let rows = values.len() / d;
        out[..d].copy_from_slice(&values[..d]);
        match self {
            Kernel::TiedRotation(theta) => {
                let mut cum = vec![0.0; theta.len()];
                for r in 1..rows {
                    let k = r as f64;
                    cum.iter_mut()
                        .zip(theta.iter())
                        .for_each(|(c, t)| *c = k * t);
                    let (prev, cur) = out[(r - 1) * d..(r + 1) * d].split_at_mut(d);
                    cur.copy_from_slice(prev);
                    rotate_add(&cum, &values[r * d..(r + 1) * d], cur);
                }
                let k = rows as f64;
                rotation(theta.iter().map(|t| k * t).collect())
            }
            Kernel::Rotations(per) => {
                let mut cum = vec![0.0; per[0].len()];
                for r in 1..rows {
                    add_assign(&mut cum, per[start + r - 1]);
                    let (prev, cur) = out[(r - 1) * d..(r + 1) * d].split_at_mut(d);
                    cur.copy_from_slice(prev);
                    rotate_add(&cum, &values[r * d..(r + 1) * d], cur);
                }
                add_assign(&mut cum, per[start + rows - 1]);
                rotation(cum)
            }
            Kernel::TiedDense(_) | Kernel::Dense(_) => {
                let mut p = DMatrix::<f64>::identity(d, d);
                for r in 1..rows {
                    p = &p * self.dense_at(start + r - 1);
                    let (prev, cur) = out[(r - 1) * d..(r + 1) * d].split_at_mut(d);
                    dense_apply_into(&p, &values[r * d..(r + 1) * d], cur);
                    add_assign(cur, prev);
                }
                p = &p * self.dense_at(start + rows - 1);
                Transform::Dense(
                    crate::rotation::DenseTransform::from_matrix(p)
                        .expect("product of invertible transforms"),
                )
            }
        }
    }
}

fn rotation(angles: Vec<f64>) -> Transform {
    Transform::Rotation(BlockRotation::from_angles(angles).expect("finite angle sums"))
}

fn dense_apply_into(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, col) in m.column_iter().enumerate() {
        let x = v[j];
        for (o, c) in out.iter_mut().zip(col.iter()) {
            *o += c * x;
        }
    }
}

/// `out_j = c + C out_j` for every row of a chunk.
fn fix_up(carry: &AffinePair, out: &mut [f64], d: usize) {
    let mut tmp = vec![0.0; d];
    match &carry.transform {
        Transform::Rotation(r) => {
            let cs: Vec<(f64, f64)> = r.angles().iter().map(|a| a.sin_cos()).collect();
            for row in out.chunks_exact_mut(d) {
                for ((&(s, c), src), off) in cs
                    .iter()
                    .zip(row.chunks_exact_mut(2))
                    .zip(carry.offset.chunks_exact(2))
                {
                    let (x, y) = (src[0], src[1]);
                    src[0] = off[0] + (c * x - s * y);
                    src[1] = off[1] + (s * x + c * y);
                }
            }
        }
        Transform::Dense(m) => {
            for row in out.chunks_exact_mut(d) {
                dense_apply_into(m.matrix(), row, &mut tmp);
                row.iter_mut()
                    .zip(&tmp)
                    .zip(&carry.offset)
                    .for_each(|((r, t), o)| *r = o + t);
            }
        }
    }
}

/// `E = v_1 + R_1 v_2 + R_1 R_2 v_3 + ... + R_1 .. R_{T-1} v_T`.
pub fn scan_sequence(s: &SequenceSignal) -> Result<Vec<f64>> {
    let d = s.dim();
    let t = s.len();
    let values = s.values.data();
    match s.kernel() {
        k @ (Kernel::TiedDense(_) | Kernel::Dense(_)) => {
            // Horner form: v_1 + R_1 (v_2 + R_2 (v_3 + ...)), O(d^2) per step.
            let mut acc = values[(t - 1) * d..].to_vec();
            let mut tmp = vec![0.0; d];
            for i in (0..t - 1).rev() {
                dense_apply_into(k.dense_at(i), &acc, &mut tmp);
                add_assign(&mut tmp, &values[i * d..(i + 1) * d]);
                std::mem::swap(&mut acc, &mut tmp);
            }
            Ok(acc)
        }
        k => {
            let mut out = values[..d].to_vec();
            let mut cum = vec![0.0; d / 2];
            for i in 1..t {
                match &k {
                    Kernel::TiedRotation(theta) => {
                        let n = i as f64;
                        cum.iter_mut()
                            .zip(theta.iter())
                            .for_each(|(c, a)| *c = n * a);
                    }
                    Kernel::Rotations(per) => add_assign(&mut cum, per[i - 1]),
                    _ => unreachable!(),
                }
                rotate_add(&cum, &values[i * d..(i + 1) * d], &mut out);
            }
            Ok(out)
        }
    }
}

/// All inclusive prefixes, computed in one pass.
pub fn prefix_scan_sequential(s: &SequenceSignal) -> Result<PrefixResult> {
    let d = s.dim();
    let kernel = s.kernel();
    let mut out = vec![0.0; s.values.data().len()];
    let total = kernel.local_scan(s.values.data(), d, 0, &mut out);
    Ok(PrefixResult {
        prefixes: Signal::new(vec![s.len()], d, out)?,
        final_transform: total,
    })
}

/// Two-pass blocked scan with a fixed chunk size.
pub fn prefix_scan_parallel(s: &SequenceSignal, chunk: usize) -> Result<PrefixResult> {
    if chunk == 0 {
        return Err(Error::ZeroChunk);
    }
    if chunk >= s.len() {
        return prefix_scan_sequential(s);
    }
    let d = s.dim();
    let kernel = s.kernel();
    let values = s.values.data();
    let mut out = vec![0.0; values.len()];
    let totals: Vec<Transform> = out
        .par_chunks_mut(chunk * d)
        .zip(values.par_chunks(chunk * d))
        .enumerate()
        .map(|(c, (o, v))| kernel.local_scan(v, d, c * chunk, o))
        .collect();

    // Exclusive fold of chunk totals. carries[c] is everything before chunk c.
    let mut carries = Vec::with_capacity(totals.len());
    let mut carry = AffinePair::identity(&totals[0]);
    for (c, total) in totals.iter().enumerate() {
        carries.push(carry.clone());
        let last = ((c + 1) * chunk).min(s.len()) - 1;
        let summary = AffinePair::new(out[last * d..(last + 1) * d].to_vec(), total.clone())?;
        carry = carry.compose(&summary)?;
        if let Kernel::TiedRotation(theta) = &kernel {
            // (last + 1) * theta in one multiply instead of a running sum.
            let n = (last + 1) as f64;
            carry.transform = rotation(theta.iter().map(|t| n * t).collect());
        }
    }

    out.par_chunks_mut(chunk * d)
        .zip(carries.par_iter())
        .skip(1)
        .for_each(|(o, c)| fix_up(c, o, d));

    Ok(PrefixResult {
        prefixes: Signal::new(vec![s.len()], d, out)?,
        final_transform: carry.transform,
    })
}

/// A rank-`n` field of content vectors with one transform per axis.
#[derive(Debug, Clone)]
pub struct Grid {
    values: Signal,
    basis: Arc<AxisBasis>,
}

impl Grid {
    pub fn new(values: Signal, basis: Arc<AxisBasis>) -> Result<Self> {
        if values.rank() != basis.axes() {
            return Err(Error::InvalidShape(format!(
                "grid of rank {} needs {} axis transforms, basis has {}",
                values.rank(),
                values.rank(),
                basis.axes()
            )));
        }
        if values.dim() != basis.dim() {
            return Err(Error::DimMismatch {
                expected: basis.dim(),
                found: values.dim(),
            });
        }
        Ok(Self { values, basis })
    }

    /// `H x W` grid; `rx` moves along rows (first index), `ry` along columns.
    pub fn plane(values: Signal, rx: Transform, ry: Transform) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::InvalidShape("plane grid needs rank-2 values".into()));
        }
        Self::new(values, AxisBasis::shared(vec![rx, ry])?)
    }

    /// `H x W x T` volume with transforms for rows, columns and time.
    pub fn volume(values: Signal, rx: Transform, ry: Transform, rt: Transform) -> Result<Self> {
        if values.rank() != 3 {
            return Err(Error::InvalidShape(
                "volume grid needs rank-3 values".into(),
            ));
        }
        Self::new(values, AxisBasis::shared(vec![rx, ry, rt])?)
    }

    pub fn values(&self) -> &Signal {
        &self.values
    }

    pub fn basis(&self) -> &Arc<AxisBasis> {
        &self.basis
    }
}

/// Direct evaluation of `sum_idx R_1^{i_1} .. R_n^{i_n} v_idx`.
///
/// The transform is built incrementally: each step along an axis composes
/// the running product with that axis' transform once.
pub fn grid_direct_sum(g: &Grid) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; g.values.dim()];
    let base = g.basis.transforms()[0].identity_like();
    let mut cursor = Vec::with_capacity(g.values.rank());
    direct_sum_level(g, 0, &base, &mut cursor, &mut acc)?;
    Ok(acc)
}

fn direct_sum_level(
    g: &Grid,
    axis: usize,
    base: &Transform,
    cursor: &mut Vec<usize>,
    acc: &mut [f64],
) -> Result<()> {
    let step = &g.basis.transforms()[axis];
    let mut t = base.clone();
    for i in 0..g.values.shape()[axis] {
        cursor.push(i);
        if axis + 1 == g.values.rank() {
            let v = t.apply(g.values.at(cursor))?;
            add_assign(acc, &v);
        } else {
            direct_sum_level(g, axis + 1, &t, cursor, acc)?;
        }
        cursor.pop();
        t = t.compose(step)?;
    }
    Ok(())
}

/// Nested fold through the axis-wise algebra: first collapse `order[0]`
/// within every line along it, then `order[1]`, and so on. Every cell
/// starts as `(v_idx; 1, .., 1)`.
pub fn grid_fold(g: &Grid, order: &[usize]) -> Result<Element> {
    let rank = g.values.rank();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..rank).collect::<Vec<_>>() {
        return Err(Error::InvalidShape(format!(
            "fold order {order:?} is not a permutation of 0..{rank}"
        )));
    }
    let mut shape = g.values.shape().to_vec();
    let mut cells: Vec<Element> = g
        .values
        .rows()
        .map(|v| Element::new(v.to_vec(), vec![1; rank], &g.basis))
        .collect::<Result<_>>()?;
    for &axis in order {
        let mut reduced_shape = shape.clone();
        reduced_shape[axis] = 1;
        let mut next = Vec::with_capacity(cells.len() / shape[axis]);
        for idx in multi_indices(&reduced_shape) {
            let mut line = idx.clone();
            let mut acc: Option<Element> = None;
            for i in 0..shape[axis] {
                line[axis] = i;
                let cell = &cells[flat(&shape, &line)];
                acc = Some(match acc {
                    None => cell.clone(),
                    Some(a) => a.compose_axis(cell, axis)?,
                });
            }
            next.push(acc.expect("non-empty axis"));
        }
        cells = next;
        shape = reduced_shape;
    }
    Ok(cells.pop().expect("single composite"))
}

fn flat(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Row composites first (fold axis 1 inside each row), then fold rows.
pub fn grid2d_row_major_fold(g: &Grid) -> Result<Element> {
    grid_fold(g, &[1, 0])
}

/// Column composites first, then fold columns.
pub fn grid2d_column_major_fold(g: &Grid) -> Result<Element> {
    grid_fold(g, &[0, 1])
}

/// Compose every frame spatially, then advance in time.
pub fn grid3d_spatial_then_temporal(g: &Grid) -> Result<Element> {
    grid_fold(g, &[1, 0, 2])
}

/// Advance every pixel in time, then compose spatially.
pub fn grid3d_temporal_then_spatial(g: &Grid) -> Result<Element> {
    grid_fold(g, &[2, 1, 0])
}

/// Full composite of a grid of any rank, requiring commuting axes.
pub fn compose_grid(g: &Grid) -> Result<Vec<f64>> {
    g.basis.require_commuting()?;
    grid_direct_sum(g)
}

pub fn compose_grid2d(g: &Grid) -> Result<Vec<f64>> {
    if g.values.rank() != 2 {
        return Err(Error::InvalidShape("expected a rank-2 grid".into()));
    }
    compose_grid(g)
}

pub fn compose_grid3d(g: &Grid) -> Result<Vec<f64>> {
    if g.values.rank() != 3 {
        return Err(Error::InvalidShape("expected a rank-3 grid".into()));
    }
    compose_grid(g)
}
