//! Binary tensor container.
//!
//! Layout, all little-endian: the 5-byte magic `DNMC1`, `rank: u32`,
//! `dims: [u32; rank]`, then `product(dims)` `f64` values in row-major order.
//! A signal of shape `[n_1, .., n_r]` with `d` channels is stored with dims
//! `[n_1, .., n_r, d]`.

use std::fs;
use std::path::Path;

use axiscomp_core::Signal;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 5] = b"DNMC1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic, expected DNMC1")]
    BadMagic,
    #[error("truncated header")]
    TruncatedHeader,
    #[error("payload is {found} bytes, dims require {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("dims overflow")]
    Overflow,
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> CliResult<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(CliError::usage(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        if dims.iter().any(|&d| d > u32::MAX as usize) {
            return Err(CliError::usage(format!("dims {dims:?} exceed u32")));
        }
        Ok(Self { dims, data })
    }

    pub fn from_signal(s: &Signal) -> Self {
        let mut dims = s.shape().to_vec();
        dims.push(s.dim());
        Self {
            dims,
            data: s.data().to_vec(),
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Self {
            dims: vec![v.len()],
            data: v.to_vec(),
        }
    }

    /// The last dim is the channel count; a rank-1 tensor is one position.
    pub fn to_signal(&self) -> axiscomp_core::Result<Signal> {
        match self.dims.split_last() {
            Some((&d, [])) => Signal::new(vec![1], d, self.data.clone()),
            Some((&d, shape)) => Signal::new(shape.to_vec(), d, self.data.clone()),
            None => Err(axiscomp_core::Error::InvalidShape("rank-0 tensor".into())),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let rest = bytes
            .strip_prefix(MAGIC.as_slice())
            .ok_or(DecodeError::BadMagic)?;
        let (rank, mut rest) = take_u32(rest)?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let (d, r) = take_u32(rest)?;
            dims.push(d as usize);
            rest = r;
        }
        let expected = dims
            .iter()
            .try_fold(8usize, |acc, &d| acc.checked_mul(d))
            .ok_or(DecodeError::Overflow)?;
        if rest.len() != expected {
            return Err(DecodeError::PayloadLength {
                expected,
                found: rest.len(),
            });
        }
        let data = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self { dims, data })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| CliError::format(path, e.to_string()))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }
}

fn take_u32(bytes: &[u8]) -> Result<(u32, &[u8]), DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::TruncatedHeader);
    }
    let (head, rest) = bytes.split_at(4);
    Ok((u32::from_le_bytes(head.try_into().expect("4 bytes")), rest))
}
