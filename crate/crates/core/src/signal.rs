//! Dense row-major storage for fields of content vectors.
//!
//! A [`Signal`] is a grid of positions (any rank, including rank 1 for
//! sequences) where every position carries a content vector of width `dim`.
//! A `T x d` matrix is a rank-1 signal of `T` positions with width `d`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    shape: Vec<usize>,
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(shape: Vec<usize>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidShape("signal needs at least one axis".into()));
        }
        if shape.contains(&0) || dim == 0 {
            return Err(Error::InvalidShape(format!(
                "zero-sized axis in shape {shape:?} x {dim}"
            )));
        }
        let expected = shape.iter().product::<usize>() * dim;
        if data.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Self { shape, dim, data })
    }

    pub fn zeros(shape: Vec<usize>, dim: usize) -> Result<Self> {
        let n = shape.iter().product::<usize>() * dim;
        Self::new(shape, dim, vec![0.0; n])
    }

    /// Builds a sequence (rank-1 signal) from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidShape("no rows".into()))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(vec![rows.len()], dim, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of positions (product of the shape).
    pub fn positions(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, position: usize) -> &[f64] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn row_mut(&mut self, position: usize) -> &mut [f64] {
        &mut self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    /// Row-major flat position of a multi-index. Panics on a bad index.
    pub fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range {n}");
            acc * n + i
        })
    }

    pub fn at(&self, index: &[usize]) -> &[f64] {
        self.row(self.flat_index(index))
    }

    pub fn at_mut(&mut self, index: &[usize]) -> &mut [f64] {
        let p = self.flat_index(index);
        self.row_mut(p)
    }

    /// Same data with a multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

/// Iterates all multi-indices of `shape` in row-major order.
pub fn multi_indices(shape: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total: usize = shape.iter().product();
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; shape.len()];
        for (slot, &n) in idx.iter_mut().zip(shape).rev() {
            *slot = flat % n;
            flat /= n;
        }
        idx
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_indices_row_major() {
        let all: Vec<_> = multi_indices(&[2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[3], vec![1, 0]);
        let s = Signal::zeros(vec![2, 3], 1).unwrap();
        for (flat, idx) in all.iter().enumerate() {
            assert_eq!(s.flat_index(idx), flat);
        }
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(Signal::new(vec![2], 2, vec![0.0; 3]).is_err());
        assert!(Signal::new(vec![0], 2, vec![]).is_err());
        assert!(Signal::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
