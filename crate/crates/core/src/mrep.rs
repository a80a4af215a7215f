//! Shift-invariant window descriptors.
//!
//! Every window of the signal is summed with per-offset rotary weights,
//! `s_k = sum_i R_1^{i_1} .. R_n^{i_n} a(k + i)`, which keeps the order of
//! the entries inside the window. Taking the norm of every 2x2 block
//! removes the phase, and summing the magnitudes over all window origins
//! gives a descriptor that does not move when the content is translated
//! inside a zero background.
//!
//! Blocks are always 2-dimensional, so any even `d` works with any window.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rotation::BlockRotation;
use crate::signal::{multi_indices, Signal};

#[derive(Debug, Clone, PartialEq)]
pub struct MRepConfig {
    window: Vec<usize>,
    axis_transforms: Vec<BlockRotation>,
}

impl MRepConfig {
    pub fn new(window: Vec<usize>, axis_transforms: Vec<BlockRotation>) -> Result<Self> {
        if window.is_empty() || window.len() != axis_transforms.len() {
            return Err(Error::InvalidShape(format!(
                "window of rank {} with {} axis transforms",
                window.len(),
                axis_transforms.len()
            )));
        }
        if window.contains(&0) {
            return Err(Error::InvalidShape(format!("zero-sized window {window:?}")));
        }
        let d = axis_transforms[0].dim();
        if let Some(t) = axis_transforms.iter().find(|t| t.dim() != d) {
            return Err(Error::DimMismatch {
                expected: d,
                found: t.dim(),
            });
        }
        Ok(Self {
            window,
            axis_transforms,
        })
    }

    /// One-dimensional window of length `m` with rotation `r`.
    pub fn sequence(m: usize, r: BlockRotation) -> Result<Self> {
        Self::new(vec![m], vec![r])
    }

    pub fn window(&self) -> &[usize] {
        &self.window
    }

    pub fn axis_transforms(&self) -> &[BlockRotation] {
        &self.axis_transforms
    }

    pub fn dim(&self) -> usize {
        self.axis_transforms[0].dim()
    }

    pub fn blocks(&self) -> usize {
        self.dim() / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEmbedding {
    pub s: Vec<f64>,
    pub origin: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeVector(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct MRep {
    pub v: Vec<f64>,
    pub window_count: usize,
}

/// `(sin, cos)` of the combined angle for every in-window offset.
struct WindowTable {
    offsets: Vec<Vec<usize>>,
    trig: Vec<(f64, f64)>,
    blocks: usize,
}

impl WindowTable {
    fn new(cfg: &MRepConfig) -> Self {
        let blocks = cfg.blocks();
        let offsets: Vec<Vec<usize>> = multi_indices(&cfg.window).collect();
        let mut trig = Vec::with_capacity(offsets.len() * blocks);
        for off in &offsets {
            for b in 0..blocks {
                let angle: f64 = off
                    .iter()
                    .zip(&cfg.axis_transforms)
                    .map(|(&i, r)| i as f64 * r.angles()[b])
                    .sum();
                trig.push(angle.sin_cos());
            }
        }
        Self {
            offsets,
            trig,
            blocks,
        }
    }

    fn embed(&self, signal: &Signal, origin: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; 2 * self.blocks];
        let mut at = origin.to_vec();
        for (cell, off) in self.offsets.iter().enumerate() {
            for ((a, o), &k) in at.iter_mut().zip(off).zip(origin) {
                *a = k + o;
            }
            let v = signal.at(&at);
            let trig = &self.trig[cell * self.blocks..(cell + 1) * self.blocks];
            for ((&(sn, cs), src), dst) in trig
                .iter()
                .zip(v.chunks_exact(2))
                .zip(s.chunks_exact_mut(2))
            {
                dst[0] += cs * src[0] - sn * src[1];
                dst[1] += sn * src[0] + cs * src[1];
            }
        }
        s
    }
}

fn check_signal(signal: &Signal, cfg: &MRepConfig) -> Result<()> {
    if signal.dim() != cfg.dim() {
        return Err(Error::DimMismatch {
            expected: cfg.dim(),
            found: signal.dim(),
        });
    }
    if signal.rank() != cfg.window.len() {
        return Err(Error::InvalidShape(format!(
            "signal of rank {} with a window of rank {}",
            signal.rank(),
            cfg.window.len()
        )));
    }
    Ok(())
}

/// Window embedding at a 0-based origin.
pub fn window_embed(
    signal: &Signal,
    origin: &[usize],
    cfg: &MRepConfig,
) -> Result<WindowEmbedding> {
    check_signal(signal, cfg)?;
    let fits = origin.len() == cfg.window.len()
        && origin
            .iter()
            .zip(&cfg.window)
            .zip(signal.shape())
            .all(|((&k, &m), &n)| k + m <= n);
    if !fits {
        return Err(Error::WindowOutOfRange {
            origin: origin.to_vec(),
        });
    }
    Ok(WindowEmbedding {
        s: WindowTable::new(cfg).embed(signal, origin),
        origin: origin.to_vec(),
    })
}

/// Euclidean norm of every 2-entry block.
pub fn magnitude_vector(s: &[f64]) -> MagnitudeVector {
    MagnitudeVector(
        s.chunks(2)
            .map(|b| b.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect(),
    )
}

/// Sequence descriptor over all `N - m + 1` windows.
pub fn mrep_1d(signal: &Signal, cfg: &MRepConfig) -> Result<MRep> {
    check_signal(signal, cfg)?;
    if signal.rank() != 1 {
        return Err(Error::InvalidShape("mrep_1d expects a sequence".into()));
    }
    let (n, m) = (signal.positions(), cfg.window[0]);
    if n < m {
        return Err(Error::SignalTooShort { len: n, window: m });
    }
    mrep_nd(signal, cfg)
}

/// Descriptor for a tensor of any rank; window origins in row-major order.
pub fn mrep_nd(signal: &Signal, cfg: &MRepConfig) -> Result<MRep> {
    check_signal(signal, cfg)?;
    let origins_shape: Vec<usize> = signal
        .shape()
        .iter()
        .zip(&cfg.window)
        .map(|(&n, &m)| if m <= n { Ok(n - m + 1) } else { Err(()) })
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::WindowOutOfRange {
            origin: cfg.window.clone(),
        })?;
    let table = WindowTable::new(cfg);
    let origins: Vec<Vec<usize>> = multi_indices(&origins_shape).collect();
    let magnitudes: Vec<MagnitudeVector> = origins
        .par_iter()
        .map(|o| magnitude_vector(&table.embed(signal, o)))
        .collect();
    let mut v = vec![0.0; cfg.blocks()];
    for m in &magnitudes {
        v.iter_mut().zip(&m.0).for_each(|(acc, x)| *acc += x);
    }
    Ok(MRep {
        v,
        window_count: origins.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::Transform;
    use crate::sample;
    use crate::signal::max_abs_diff;

    fn rot(a: &[f64]) -> BlockRotation {
        BlockRotation::from_angles(a.to_vec()).unwrap()
    }

    #[test]
    fn unit_window_is_the_entry() {
        let mut rng = sample::rng(0);
        let sig = sample::signal(&mut rng, vec![5], 4);
        let cfg = MRepConfig::sequence(1, rot(&[0.3, 0.8])).unwrap();
        for k in 0..5 {
            assert_eq!(window_embed(&sig, &[k], &cfg).unwrap().s, sig.row(k));
        }
    }

    #[test]
    fn identity_rotation_sums_window() {
        let mut rng = sample::rng(1);
        let sig = sample::signal(&mut rng, vec![6], 2);
        let cfg = MRepConfig::sequence(3, rot(&[0.0])).unwrap();
        let s = window_embed(&sig, &[2], &cfg).unwrap().s;
        let expected = [0, 1].map(|c| sig.row(2)[c] + sig.row(3)[c] + sig.row(4)[c]);
        assert!(max_abs_diff(&s, &expected) < 1e-15);
    }

    #[test]
    fn window_matches_dense_oracle() {
        let mut rng = sample::rng(2);
        let sig = sample::signal(&mut rng, vec![7], 4);
        let r = rot(&[0.4, 0.4]);
        let cfg = MRepConfig::sequence(3, r.clone()).unwrap();
        let dense = Transform::from(r).to_dense();
        let k = 2;
        let mut expected = sig.row(k).to_vec();
        for i in 1..3 {
            let term = dense.pow(i as i64).unwrap().apply(sig.row(k + i)).unwrap();
            expected.iter_mut().zip(term).for_each(|(e, t)| *e += t);
        }
        assert!(max_abs_diff(&window_embed(&sig, &[k], &cfg).unwrap().s, &expected) < 1e-12);
    }

    #[test]
    fn magnitudes() {
        assert_eq!(magnitude_vector(&[0.0; 4]).0, vec![0.0, 0.0]);
        assert_eq!(magnitude_vector(&[3.0, 4.0, 0.0, 1.0]).0, vec![5.0, 1.0]);
        let mut rng = sample::rng(3);
        let s = sample::vector(&mut rng, 6);
        let r = sample::rotation(&mut rng, 3);
        let base = magnitude_vector(&s);
        for t in -3..=3 {
            let m = magnitude_vector(&r.pow(t).apply(&s).unwrap());
            assert!(max_abs_diff(&m.0, &base.0) < 1e-12);
        }
    }

    #[test]
    fn single_window_and_zero_signal() {
        let mut rng = sample::rng(4);
        let sig = sample::signal(&mut rng, vec![4], 2);
        let cfg = MRepConfig::sequence(4, rot(&[0.9])).unwrap();
        let rep = mrep_1d(&sig, &cfg).unwrap();
        assert_eq!(rep.window_count, 1);
        let s = window_embed(&sig, &[0], &cfg).unwrap();
        assert_eq!(rep.v, magnitude_vector(&s.s).0);

        let zero = Signal::zeros(vec![9], 2).unwrap();
        assert!(mrep_1d(&zero, &cfg).unwrap().v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn padded_shift_invariance_1d() {
        let mut rng = sample::rng(5);
        let content = sample::signal(&mut rng, vec![12], 4);
        let cfg = MRepConfig::sequence(3, rot(&[0.4, 1.3])).unwrap();
        let place = |offset: usize| {
            let mut s = Signal::zeros(vec![18], 4).unwrap();
            for i in 0..12 {
                s.row_mut(offset + i).copy_from_slice(content.row(i));
            }
            s
        };
        // Margins of at least m - 1 on both ends for every placement.
        let a = mrep_1d(&place(2), &cfg).unwrap();
        let b = mrep_1d(&place(3), &cfg).unwrap();
        let c = mrep_1d(&place(4), &cfg).unwrap();
        assert_ne!(
            mrep_1d(&content, &cfg).unwrap().window_count,
            b.window_count
        );
        assert!(max_abs_diff(&a.v, &b.v) < 1e-12);
        assert!(max_abs_diff(&b.v, &c.v) < 1e-12);
    }

    #[test]
    fn nd_reduces_to_1d_and_full_window() {
        let mut rng = sample::rng(6);
        let sig = sample::signal(&mut rng, vec![8], 2);
        let cfg = MRepConfig::sequence(3, rot(&[0.5])).unwrap();
        assert_eq!(mrep_nd(&sig, &cfg).unwrap(), mrep_1d(&sig, &cfg).unwrap());

        let img = sample::signal(&mut rng, vec![3, 4], 4);
        let cfg = MRepConfig::new(vec![3, 4], vec![rot(&[0.0, 0.0]), rot(&[0.0, 0.0])]).unwrap();
        let rep = mrep_nd(&img, &cfg).unwrap();
        let sum: Vec<f64> = (0..4).map(|c| img.rows().map(|r| r[c]).sum()).collect();
        assert!(max_abs_diff(&rep.v, &magnitude_vector(&sum).0) < 1e-12);
        assert_eq!(rep.window_count, 1);
    }

    #[test]
    fn image_translation_invariance() {
        let mut rng = sample::rng(7);
        let patch = sample::signal(&mut rng, vec![4, 4], 4);
        let cfg = MRepConfig::new(vec![3, 3], vec![rot(&[0.3, 1.1]), rot(&[0.7, -0.4])]).unwrap();
        let place = |dy: usize, dx: usize| {
            let mut s = Signal::zeros(vec![12, 12], 4).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    s.at_mut(&[2 + dy + i, 2 + dx + j])
                        .copy_from_slice(patch.at(&[i, j]));
                }
            }
            s
        };
        let a = mrep_nd(&place(0, 0), &cfg).unwrap();
        let b = mrep_nd(&place(2, 1), &cfg).unwrap();
        assert!(max_abs_diff(&a.v, &b.v) < 1e-12);
    }

    #[test]
    fn errors() {
        let sig = Signal::zeros(vec![3], 2).unwrap();
        let cfg = MRepConfig::sequence(4, rot(&[0.1])).unwrap();
        assert_eq!(
            mrep_1d(&sig, &cfg),
            Err(Error::SignalTooShort { len: 3, window: 4 })
        );
        let cfg = MRepConfig::sequence(2, rot(&[0.1])).unwrap();
        assert!(matches!(
            window_embed(&sig, &[2], &cfg),
            Err(Error::WindowOutOfRange { .. })
        ));
        let wide = Signal::zeros(vec![3], 4).unwrap();
        assert!(matches!(
            mrep_1d(&wide, &cfg),
            Err(Error::DimMismatch { .. })
        ));
        assert!(MRepConfig::new(vec![0], vec![rot(&[0.1])]).is_err());
    }

    #[test]
    fn scaling_is_homogeneous() {
        let mut rng = sample::rng(8);
        let sig = sample::signal(&mut rng, vec![10], 4);
        let cfg = MRepConfig::sequence(3, rot(&[0.4, 2.0])).unwrap();
        let a = mrep_1d(&sig, &cfg).unwrap();
        let b = mrep_1d(&sig.scaled(2.5), &cfg).unwrap();
        for (x, y) in a.v.iter().zip(&b.v) {
            assert!((2.5 * x - y).abs() < 1e-12);
        }
    }
}
