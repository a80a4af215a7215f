//! Axis shifts, exhaustive alignment search and structured concatenation.

use std::sync::Arc;

use rayon::prelude::*;

use crate::algebra::{AxisBasis, Element};
use crate::error::{Error, Result};
use crate::signal::{dot, norm};

/// `R_k^s y`.
pub fn axis_shift(y: &[f64], axis: usize, s: i64, basis: &AxisBasis) -> Result<Vec<f64>> {
    basis.shift(axis, s, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scoring {
    /// Plain inner product `<x, R^s y>`.
    #[default]
    Dot,
    /// Inner product divided by both norms (0 when either is zero).
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// One shift per searched axis.
    pub best_shift: Vec<i64>,
    pub score: f64,
    /// Every candidate in lexicographic order with its score.
    pub scores: Vec<(Vec<i64>, f64)>,
}

/// Best shift along one axis over `[s_min, s_max]`; ties go to the smallest shift.
pub fn align(
    x: &[f64],
    y: &[f64],
    axis: usize,
    s_min: i64,
    s_max: i64,
    basis: &AxisBasis,
) -> Result<AlignmentResult> {
    align_scored(x, y, axis, (s_min, s_max), basis, Scoring::Dot)
}

pub fn align_scored(
    x: &[f64],
    y: &[f64],
    axis: usize,
    (s_min, s_max): (i64, i64),
    basis: &AxisBasis,
    scoring: Scoring,
) -> Result<AlignmentResult> {
    basis.transform(axis)?;
    let mut ranges = vec![(0, 0); basis.axes()];
    ranges[axis] = (s_min, s_max);
    let full = align_nd_scored(x, y, &ranges, basis, scoring)?;
    let pick = |s: &[i64]| vec![s[axis]];
    Ok(AlignmentResult {
        best_shift: pick(&full.best_shift),
        score: full.score,
        scores: full
            .scores
            .into_iter()
            .map(|(s, v)| (pick(&s), v))
            .collect(),
    })
}

/// Grid search over the product of per-axis ranges, scoring
/// `<x, R_1^{s_1} .. R_D^{s_D} y>`. Ties go to the lexicographically smallest
/// shift vector.
pub fn align_nd(
    x: &[f64],
    y: &[f64],
    ranges: &[(i64, i64)],
    basis: &AxisBasis,
) -> Result<AlignmentResult> {
    align_nd_scored(x, y, ranges, basis, Scoring::Dot)
}

pub fn align_nd_scored(
    x: &[f64],
    y: &[f64],
    ranges: &[(i64, i64)],
    basis: &AxisBasis,
    scoring: Scoring,
) -> Result<AlignmentResult> {
    if ranges.len() != basis.axes() {
        return Err(Error::DimMismatch {
            expected: basis.axes(),
            found: ranges.len(),
        });
    }
    for v in [x, y] {
        if v.len() != basis.dim() {
            return Err(Error::DimMismatch {
                expected: basis.dim(),
                found: v.len(),
            });
        }
    }
    if let Some(&(min, max)) = ranges.iter().find(|(a, b)| a > b) {
        return Err(Error::EmptyRange { min, max });
    }
    let candidates = shift_grid(ranges);
    let x_norm = norm(x);
    let scores: Vec<(Vec<i64>, f64)> = candidates
        .into_par_iter()
        .map(|s| {
            let shifted = basis.combined(&s)?.apply(y)?;
            let raw = dot(x, &shifted);
            let score = match scoring {
                Scoring::Dot => raw,
                Scoring::Cosine => {
                    let denom = x_norm * norm(&shifted);
                    if denom > 0.0 {
                        raw / denom
                    } else {
                        0.0
                    }
                }
            };
            Ok((s, score))
        })
        .collect::<Result<_>>()?;
    // Sequential pass in lexicographic order so strict `>` keeps the first maximum.
    let mut best = 0;
    for (i, (_, v)) in scores.iter().enumerate() {
        if *v > scores[best].1 {
            best = i;
        }
    }
    Ok(AlignmentResult {
        best_shift: scores[best].0.clone(),
        score: scores[best].1,
        scores,
    })
}

fn shift_grid(ranges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(ranges.len())];
    for &(lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |s| {
                    let mut p = prefix.clone();
                    p.push(s);
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConcatMode {
    /// Off-axis powers must match; identical to `compose_axis`.
    #[default]
    Strict,
    /// Off-axis powers merge with `max`; content is not re-aligned off-axis.
    Permissive,
}

/// `X (+)_k Y = (a + R_k^{n_k} b; u)` with `u_k = n_k + m_k` and
/// `u_i = max(n_i, m_i)` elsewhere.
pub fn concat(x: &Element, y: &Element, axis: usize, mode: ConcatMode) -> Result<Element> {
    match mode {
        ConcatMode::Strict => x.compose_axis(y, axis),
        ConcatMode::Permissive => {
            if !Arc::ptr_eq(x.basis(), y.basis()) && **x.basis() != **y.basis() {
                return Err(Error::BasisMismatch);
            }
            let axes = x.basis().axes();
            if axis >= axes {
                return Err(Error::AxisOutOfRange { axis, axes });
            }
            let powers = x
                .powers()
                .iter()
                .zip(y.powers())
                .map(|(&a, &b)| a.max(b))
                .collect();
            x.shifted_merge(y, axis, powers)
        }
    }
}

/// Recovers the right operand's content from `z = x (+)_k y`:
/// `R_k^{-n_k} (z - a)`.
pub fn concat_recover_right(z: &Element, x: &Element, axis: usize) -> Result<Vec<f64>> {
    let diff: Vec<f64> = z
        .content()
        .iter()
        .zip(x.content())
        .map(|(a, b)| a - b)
        .collect();
    let n_k = x.powers().get(axis).copied().ok_or(Error::AxisOutOfRange {
        axis,
        axes: x.powers().len(),
    })?;
    x.basis().shift(axis, -n_k, &diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::{BlockRotation, Transform};
    use crate::sample;
    use crate::scan::{scan_sequence, SequenceSignal};
    use crate::signal::{max_abs_diff, Signal};

    fn rot(a: &[f64]) -> Transform {
        BlockRotation::from_angles(a.to_vec()).unwrap().into()
    }

    fn basis1(a: &[f64]) -> Arc<AxisBasis> {
        AxisBasis::shared(vec![rot(a)]).unwrap()
    }

    #[test]
    fn shift_laws() {
        let mut rng = sample::rng(0);
        let b = basis1(&[0.3, -1.2]);
        let y = sample::vector(&mut rng, 4);
        assert_eq!(axis_shift(&y, 0, 0, &b).unwrap(), y);
        let twice = axis_shift(&axis_shift(&y, 0, 2, &b).unwrap(), 0, 3, &b).unwrap();
        assert!(max_abs_diff(&twice, &axis_shift(&y, 0, 5, &b).unwrap()) < 1e-12);
        let back = axis_shift(&axis_shift(&y, 0, 4, &b).unwrap(), 0, -4, &b).unwrap();
        assert!(max_abs_diff(&back, &y) < 1e-12);
    }

    #[test]
    fn self_alignment_peaks_at_zero() {
        let mut rng = sample::rng(1);
        let b = basis1(&[0.37, 1.21, -0.83]);
        let x = sample::vector(&mut rng, 6);
        let res = align(&x, &x, 0, -3, 3, &b).unwrap();
        assert_eq!(res.best_shift, vec![0]);
        assert_eq!(res.scores.len(), 7);
        // brute force
        let brute = (-3..=3)
            .map(|s| (s, dot(&x, &axis_shift(&x, 0, s, &b).unwrap())))
            .fold((0, f64::MIN), |acc, c| if c.1 > acc.1 { c } else { acc });
        assert_eq!(brute.0, 0);
    }

    #[test]
    fn tail_alignment_of_scans() {
        // x = a + R b + R^2 c, y = b + R c: shifting y by one lines it up with x's tail.
        let r = rot(&[0.6, 1.7, -2.2]);
        let b = AxisBasis::shared(vec![r.clone()]).unwrap();
        let mut rng = sample::rng(2);
        let a = sample::vector(&mut rng, 6)
            .iter()
            .map(|v| 0.1 * v)
            .collect::<Vec<_>>();
        let bb = sample::vector(&mut rng, 6);
        let c = sample::vector(&mut rng, 6);
        let x = scan_sequence(
            &SequenceSignal::tied(Signal::from_rows(&[&a, &bb, &c]).unwrap(), r.clone()).unwrap(),
        )
        .unwrap();
        let y = scan_sequence(
            &SequenceSignal::tied(Signal::from_rows(&[&bb, &c]).unwrap(), r.clone()).unwrap(),
        )
        .unwrap();
        let res = align(&x, &y, 0, 0, 2, &b).unwrap();
        let dense = r.to_dense();
        let brute: Vec<f64> = (0..=2)
            .map(|s| dot(&x, &dense.pow(s).unwrap().apply(&y).unwrap()))
            .collect();
        for (s, (_, v)) in res.scores.iter().enumerate() {
            assert!((brute[s] - v).abs() < 1e-12);
        }
        assert_eq!(res.best_shift, vec![1]);
    }

    #[test]
    fn zero_y_ties_to_minimum() {
        let b = basis1(&[0.5]);
        let res = align(&[1.0, 2.0], &[0.0, 0.0], 0, -2, 4, &b).unwrap();
        assert_eq!(res.best_shift, vec![-2]);
        assert!(res.scores.iter().all(|(_, v)| *v == 0.0));
        assert_eq!(
            align(&[1.0, 2.0], &[0.0, 0.0], 0, 1, 0, &b),
            Err(Error::EmptyRange { min: 1, max: 0 })
        );
    }

    #[test]
    fn nd_zero_ranges_and_planted_offset() {
        let mut rng = sample::rng(3);
        let basis = AxisBasis::shared(vec![
            sample::rotation(&mut rng, 4).into(),
            sample::rotation(&mut rng, 4).into(),
        ])
        .unwrap();
        let x = sample::vector(&mut rng, 8);
        let y = sample::vector(&mut rng, 8);
        let res = align_nd(&x, &y, &[(0, 0), (0, 0)], &basis).unwrap();
        assert_eq!(res.best_shift, vec![0, 0]);
        assert_eq!(res.score, dot(&x, &y));

        let mut planted = basis.combined(&[-2, 1]).unwrap().apply(&x).unwrap();
        planted
            .iter_mut()
            .for_each(|v| *v += 1e-8 * sample::vector(&mut rng, 1)[0]);
        let res = align_nd(&x, &planted, &[(-5, 5), (-5, 5)], &basis).unwrap();
        assert_eq!(res.best_shift, vec![2, -1]);
    }

    #[test]
    fn shift_order_irrelevant_for_rotations() {
        let mut rng = sample::rng(4);
        let basis = AxisBasis::shared(
            (0..3)
                .map(|_| sample::rotation(&mut rng, 2).into())
                .collect(),
        )
        .unwrap();
        let y = sample::vector(&mut rng, 4);
        let p = [2, -3, 1];
        let a = basis
            .combined_in_order(&p, &[0, 1, 2])
            .unwrap()
            .apply(&y)
            .unwrap();
        let b = basis
            .combined_in_order(&p, &[2, 0, 1])
            .unwrap()
            .apply(&y)
            .unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn concat_single_axis_and_image_case() {
        let b = basis1(&[0.4]);
        let x = Element::new(vec![1.0, 0.0], vec![2], &b).unwrap();
        let y = Element::new(vec![0.0, 1.0], vec![3], &b).unwrap();
        let z = concat(&x, &y, 0, ConcatMode::Strict).unwrap();
        assert_eq!(z.powers(), &[5]);
        let mut expected = rot(&[0.8]).apply(&[0.0, 1.0]).unwrap();
        expected[0] += 1.0;
        assert!(max_abs_diff(z.content(), &expected) < 1e-15);

        // (a; Rx^N, Ry^H) (+)_x (b; Rx^M, Ry^H) = (a + Rx^N b; Rx^{N+M}, Ry^H)
        let img = AxisBasis::shared(vec![rot(&[0.1, 0.7]), rot(&[0.9, -0.2])]).unwrap();
        let (n, m, h) = (5, 3, 4);
        let x = Element::new(vec![1.0, 2.0, 3.0, 4.0], vec![n, h], &img).unwrap();
        let y = Element::new(vec![-1.0, 0.5, 0.0, 2.0], vec![m, h], &img).unwrap();
        let z = concat(&x, &y, 0, ConcatMode::Strict).unwrap();
        assert_eq!(z.powers(), &[n + m, h]);
        let mut expected = img.shift(0, n, y.content()).unwrap();
        expected
            .iter_mut()
            .zip(x.content())
            .for_each(|(e, a)| *e += a);
        assert!(max_abs_diff(z.content(), &expected) < 1e-12);
    }

    #[test]
    fn permissive_uses_max_rule() {
        let img = AxisBasis::shared(vec![rot(&[0.1]), rot(&[0.9])]).unwrap();
        let x = Element::new(vec![1.0, 2.0], vec![2, 4], &img).unwrap();
        let y = Element::new(vec![3.0, -1.0], vec![3, 6], &img).unwrap();
        assert!(matches!(
            concat(&x, &y, 0, ConcatMode::Strict),
            Err(Error::AxisMismatch { .. })
        ));
        let z = concat(&x, &y, 0, ConcatMode::Permissive).unwrap();
        assert_eq!(z.powers(), &[5, 6]);
        let mut expected = img.shift(0, 2, y.content()).unwrap();
        expected
            .iter_mut()
            .zip(x.content())
            .for_each(|(e, a)| *e += a);
        assert!(max_abs_diff(z.content(), &expected) < 1e-15);
    }

    #[test]
    fn recover_right_operand() {
        let mut rng = sample::rng(5);
        let img = AxisBasis::shared(vec![
            sample::rotation(&mut rng, 3).into(),
            sample::rotation(&mut rng, 3).into(),
        ])
        .unwrap();
        let x = Element::new(sample::vector(&mut rng, 6), vec![4, 2], &img).unwrap();
        let y = Element::new(sample::vector(&mut rng, 6), vec![7, 2], &img).unwrap();
        let z = concat(&x, &y, 0, ConcatMode::Strict).unwrap();
        assert!(max_abs_diff(&concat_recover_right(&z, &x, 0).unwrap(), y.content()) < 1e-9);
    }

    #[test]
    fn cosine_scoring_is_bounded() {
        let mut rng = sample::rng(6);
        let b = basis1(&[0.3, 0.9]);
        let x = sample::vector(&mut rng, 4);
        let y = sample::vector(&mut rng, 4);
        let res = align_scored(&x, &y, 0, (-4, 4), &b, Scoring::Cosine).unwrap();
        assert!(res.scores.iter().all(|(_, v)| v.abs() <= 1.0 + 1e-12));
    }
}
