//! Relative-position attention through journey transforms.
//!
//! Keys and values seen from query `p` are moved by the journey transform
//! `T_{p,q}`: starting at `q`, apply `R_q`, then `R_{q+1}`, up to `R_{p-1}`
//! (as a matrix, `R_{p-1} .. R_q`). `T_{p,p} = I` and `T_{q,p} = T_{p,q}^-1`.
//! With this orientation `T_{p,q} T_{q,r} = T_{p,r}` for any transforms, and
//! forced unit causal weights reproduce the state recurrence
//! `h_k = A_{k-1} h_{k-1} + B_k x_k` exactly.
//!
//! In the tied case `T_{p,q} = R^{p-q}`, so rotary scores
//! `<R^p Q_p, R^q K_q> = Q_p . R^{q-p} K_q` match attention scores under the
//! tied transform `R^-1`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::algebra::AxisBasis;
use crate::error::{Error, Result};
use crate::rotation::{AngleVector, BlockRotation, DenseTransform, Transform};
use crate::sample;
use crate::signal::{dot, max_abs_diff, Signal};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs {
    pub q: Signal,
    pub k: Signal,
    pub v: Signal,
    pub scale: f64,
}

impl AttentionInputs {
    /// Scale defaults to `1/sqrt(d)`.
    pub fn new(q: Signal, k: Signal, v: Signal) -> Result<Self> {
        for m in [&k, &v] {
            if m.rank() != 1 || q.rank() != 1 {
                return Err(Error::InvalidShape("attention inputs must be T x d".into()));
            }
            if m.positions() != q.positions() {
                return Err(Error::DimMismatch {
                    expected: q.positions(),
                    found: m.positions(),
                });
            }
            if m.dim() != q.dim() {
                return Err(Error::DimMismatch {
                    expected: q.dim(),
                    found: m.dim(),
                });
            }
        }
        let scale = 1.0 / (q.dim() as f64).sqrt();
        Ok(Self { q, k, v, scale })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn len(&self) -> usize {
        self.q.positions()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum JourneyKind {
    Tied(Transform),
    PerPosition(Vec<Transform>),
}

/// Per-position transforms with a cache of prefix products
/// `C_p = R_{p-1} .. R_0` (so `T_{p,q} = C_p C_q^-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct JourneyTransforms {
    kind: JourneyKind,
    len: usize,
    cache: Vec<Transform>,
}

impl JourneyTransforms {
    pub fn tied(transform: impl Into<Transform>, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidShape(
                "journey needs at least one position".into(),
            ));
        }
        let t = transform.into();
        let mut cache = Vec::with_capacity(len);
        for p in 0..len {
            cache.push(t.pow(p as i64)?);
        }
        Ok(Self {
            kind: JourneyKind::Tied(t),
            len,
            cache,
        })
    }

    /// `transforms[j]` is `R_j`; the last one never enters a journey.
    pub fn per_position(transforms: Vec<Transform>) -> Result<Self> {
        let first = transforms
            .first()
            .ok_or_else(|| Error::InvalidShape("journey needs at least one position".into()))?;
        let d = first.dim();
        if let Some(t) = transforms.iter().find(|t| t.dim() != d) {
            return Err(Error::DimMismatch {
                expected: d,
                found: t.dim(),
            });
        }
        let mut cache = Vec::with_capacity(transforms.len());
        let mut acc = first.identity_like();
        cache.push(acc.clone());
        for t in &transforms[..transforms.len() - 1] {
            acc = t.compose(&acc)?;
            cache.push(acc.clone());
        }
        Ok(Self {
            len: transforms.len(),
            kind: JourneyKind::PerPosition(transforms),
            cache,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            JourneyKind::Tied(t) => t.dim(),
            JourneyKind::PerPosition(ts) => ts[0].dim(),
        }
    }

    fn check(&self, i: usize) -> Result<()> {
        if i >= self.len {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len,
            });
        }
        Ok(())
    }

    /// `T_{p,q}` evaluated directly from the per-position transforms.
    pub fn relative(&self, p: usize, q: usize) -> Result<Transform> {
        self.check(p)?;
        self.check(q)?;
        match &self.kind {
            JourneyKind::Tied(t) => t.pow(p as i64 - q as i64),
            JourneyKind::PerPosition(ts) => {
                if p == q {
                    return Ok(ts[0].identity_like());
                }
                let (lo, hi) = if q < p { (q, p) } else { (p, q) };
                let forward = match &ts[0] {
                    Transform::Rotation(_) => {
                        let mut angles = vec![0.0; ts[0].dim() / 2];
                        for t in &ts[lo..hi] {
                            if let Transform::Rotation(r) = t {
                                angles.iter_mut().zip(r.angles()).for_each(|(a, b)| *a += b);
                            }
                        }
                        Transform::Rotation(BlockRotation::from_angles(angles)?)
                    }
                    Transform::Dense(_) => {
                        let mut acc = ts[lo].clone();
                        for t in &ts[lo + 1..hi] {
                            acc = t.compose(&acc)?;
                        }
                        acc
                    }
                };
                if q < p {
                    Ok(forward)
                } else {
                    forward.inverse()
                }
            }
        }
    }

    /// `T_{p,q}` through the prefix cache, `C_p C_q^-1`.
    pub fn cached_relative(&self, p: usize, q: usize) -> Result<Transform> {
        self.check(p)?;
        self.check(q)?;
        self.cache[p].compose(&self.cache[q].inverse()?)
    }

    /// The tied transform, if this journey is tied.
    pub fn tied_transform(&self) -> Option<&Transform> {
        match &self.kind {
            JourneyKind::Tied(t) => Some(t),
            JourneyKind::PerPosition(_) => None,
        }
    }
}

/// Integer coordinates per token over a shared axis basis.
#[derive(Debug, Clone)]
pub struct PositionGrid {
    coords: Vec<Vec<i64>>,
    basis: Arc<AxisBasis>,
}

impl PositionGrid {
    pub fn new(coords: Vec<Vec<i64>>, basis: Arc<AxisBasis>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidShape("no positions".into()));
        }
        if let Some(c) = coords.iter().find(|c| c.len() != basis.axes()) {
            return Err(Error::DimMismatch {
                expected: basis.axes(),
                found: c.len(),
            });
        }
        Ok(Self { coords, basis })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self) -> &[Vec<i64>] {
        &self.coords
    }

    pub fn basis(&self) -> &Arc<AxisBasis> {
        &self.basis
    }

    fn offset(&self, p: usize, q: usize) -> Result<Vec<i64>> {
        for i in [p, q] {
            if i >= self.coords.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.coords.len(),
                });
            }
        }
        Ok(self.coords[p]
            .iter()
            .zip(&self.coords[q])
            .map(|(a, b)| a - b)
            .collect())
    }

    /// `prod_i R_i^{n_{p,i} - n_{q,i}}`; needs a commuting basis.
    pub fn relative(&self, p: usize, q: usize) -> Result<Transform> {
        self.basis.require_commuting()?;
        self.basis.combined(&self.offset(p, q)?)
    }

    /// Same product with the per-axis factors multiplied in `order`.
    pub fn relative_in_order(&self, p: usize, q: usize, order: &[usize]) -> Result<Transform> {
        self.basis.require_commuting()?;
        self.basis.combined_in_order(&self.offset(p, q)?, order)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Positions<'a> {
    Journey(&'a JourneyTransforms),
    Grid(&'a PositionGrid),
}

impl Positions<'_> {
    pub fn len(&self) -> usize {
        match self {
            Positions::Journey(j) => j.len(),
            Positions::Grid(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn relative(&self, p: usize, q: usize) -> Result<Transform> {
        match self {
            Positions::Journey(j) => j.relative(p, q),
            Positions::Grid(g) => g.relative(p, q),
        }
    }
}

impl<'a> From<&'a JourneyTransforms> for Positions<'a> {
    fn from(j: &'a JourneyTransforms) -> Self {
        Positions::Journey(j)
    }
}

impl<'a> From<&'a PositionGrid> for Positions<'a> {
    fn from(g: &'a PositionGrid) -> Self {
        Positions::Grid(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    /// `T x d`.
    pub o: Signal,
    /// `T x T` row-stochastic weights.
    pub alpha: Signal,
}

fn check_positions(n: usize, d: usize, positions: Positions<'_>) -> Result<()> {
    if positions.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: positions.len(),
        });
    }
    let pd = match positions {
        Positions::Journey(j) => j.dim(),
        Positions::Grid(g) => g.basis().dim(),
    };
    if pd != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: pd,
        });
    }
    Ok(())
}

/// All relative transforms `T_{p,q}`, row-major, `None` where masked.
fn relative_table(
    n: usize,
    positions: Positions<'_>,
    causal: bool,
) -> Result<Vec<Option<Transform>>> {
    let mut table = Vec::with_capacity(n * n);
    for p in 0..n {
        for q in 0..n {
            table.push(if causal && q > p {
                None
            } else {
                Some(positions.relative(p, q)?)
            });
        }
    }
    Ok(table)
}

/// Raw scores `Q_p . T_{p,q} K_q` for every pair (no scale, no mask).
pub fn relative_scores(q: &Signal, k: &Signal, positions: Positions<'_>) -> Result<Signal> {
    let n = q.positions();
    if k.positions() != n || k.dim() != q.dim() {
        return Err(Error::DimMismatch {
            expected: n,
            found: k.positions(),
        });
    }
    check_positions(n, q.dim(), positions)?;
    let mut out = Signal::zeros(vec![n], n)?;
    for p in 0..n {
        for j in 0..n {
            let kt = positions.relative(p, j)?.apply(k.row(j))?;
            out.row_mut(p)[j] = dot(q.row(p), &kt);
        }
    }
    Ok(out)
}

fn softmax_rows(scores: &mut Signal, causal: bool) {
    let n = scores.positions();
    for p in 0..n {
        let row = scores.row_mut(p);
        let live = if causal { p + 1 } else { n };
        let max = row[..live]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in &mut row[..live] {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in &mut row[..live] {
            *x /= total;
        }
        row[live..].fill(0.0);
    }
}

/// `O_p = sum_q alpha_{p,q} T_{p,q} V_q` with softmax weights over
/// `scale * Q_p . T_{p,q} K_q`. Causal mode restricts to `q <= p`.
pub fn attend(
    inputs: &AttentionInputs,
    positions: Positions<'_>,
    causal: bool,
) -> Result<AttentionOutput> {
    let n = inputs.len();
    let d = inputs.dim();
    check_positions(n, d, positions)?;
    let table = relative_table(n, positions, causal)?;
    let mut alpha = Signal::zeros(vec![n], n)?;
    let mut moved_v = vec![None; n * n];
    for p in 0..n {
        for j in 0..n {
            if let Some(t) = &table[p * n + j] {
                let kt = t.apply(inputs.k.row(j))?;
                alpha.row_mut(p)[j] = inputs.scale * dot(inputs.q.row(p), &kt);
                moved_v[p * n + j] = Some(t.apply(inputs.v.row(j))?);
            }
        }
    }
    softmax_rows(&mut alpha, causal);
    let mut o = Signal::zeros(vec![n], d)?;
    for p in 0..n {
        let weights = alpha.row(p).to_vec();
        let out = o.row_mut(p);
        for (j, w) in weights.iter().enumerate() {
            if let Some(v) = &moved_v[p * n + j] {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
            }
        }
    }
    Ok(AttentionOutput { o, alpha })
}

/// Attention with externally supplied weights; softmax is bypassed.
/// Zero weights skip their relative transform entirely.
pub fn attend_forced(v: &Signal, positions: Positions<'_>, weights: &Signal) -> Result<Signal> {
    let n = v.positions();
    check_positions(n, v.dim(), positions)?;
    if weights.positions() != n || weights.dim() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: weights.dim(),
        });
    }
    let mut o = Signal::zeros(vec![n], v.dim())?;
    for p in 0..n {
        for j in 0..n {
            let w = weights.row(p)[j];
            if w == 0.0 {
                continue;
            }
            let moved = positions.relative(p, j)?.apply(v.row(j))?;
            o.row_mut(p)
                .iter_mut()
                .zip(&moved)
                .for_each(|(o, x)| *o += w * x);
        }
    }
    Ok(o)
}

/// Plain softmax attention `softmax(scale * Q K^T) V`, written without any
/// transform machinery.
pub fn vanilla_attention(inputs: &AttentionInputs, causal: bool) -> Result<AttentionOutput> {
    let n = inputs.len();
    let mut alpha = Signal::zeros(vec![n], n)?;
    for p in 0..n {
        for j in 0..n {
            alpha.row_mut(p)[j] = inputs.scale * dot(inputs.q.row(p), inputs.k.row(j));
        }
    }
    softmax_rows(&mut alpha, causal);
    let mut o = Signal::zeros(vec![n], inputs.dim())?;
    for p in 0..n {
        let weights = alpha.row(p).to_vec();
        let out = o.row_mut(p);
        for (j, w) in weights.iter().enumerate() {
            out.iter_mut()
                .zip(inputs.v.row(j))
                .for_each(|(o, x)| *o += w * x);
        }
    }
    Ok(AttentionOutput { o, alpha })
}

/// Rotary scores `<R^p Q_p, R^q K_q>` with `R` built from `theta`.
pub fn rope_reference(q: &Signal, k: &Signal, theta: &AngleVector) -> Result<Signal> {
    let n = q.positions();
    if k.positions() != n || q.dim() != theta.dim() || k.dim() != theta.dim() {
        return Err(Error::DimMismatch {
            expected: theta.dim(),
            found: q.dim(),
        });
    }
    let r = BlockRotation::from_angle_vector(theta.clone());
    let qr: Vec<Vec<f64>> = (0..n)
        .map(|p| r.pow(p as i64).apply(q.row(p)))
        .collect::<Result<_>>()?;
    let kr: Vec<Vec<f64>> = (0..n)
        .map(|p| r.pow(p as i64).apply(k.row(p)))
        .collect::<Result<_>>()?;
    let mut out = Signal::zeros(vec![n], n)?;
    for p in 0..n {
        for j in 0..n {
            out.row_mut(p)[j] = dot(&qr[p], &kr[j]);
        }
    }
    Ok(out)
}

/// Two-axis rotary scores: the first `theta_x.blocks()` blocks rotate by the
/// token's x coordinate, the remaining blocks by its y coordinate.
pub fn rope2d_reference(
    q: &Signal,
    k: &Signal,
    coords: &[[i64; 2]],
    theta_x: &AngleVector,
    theta_y: &AngleVector,
) -> Result<Signal> {
    let n = q.positions();
    let d = q.dim();
    if theta_x.dim() + theta_y.dim() != d || k.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: theta_x.dim() + theta_y.dim(),
        });
    }
    if coords.len() != n || k.positions() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: coords.len(),
        });
    }
    let bx = theta_x.blocks();
    let rotate = |v: &[f64], c: [i64; 2]| -> Result<Vec<f64>> {
        let mut x = BlockRotation::from_angle_vector(theta_x.clone())
            .pow(c[0])
            .apply(&v[..2 * bx])?;
        let y = BlockRotation::from_angle_vector(theta_y.clone())
            .pow(c[1])
            .apply(&v[2 * bx..])?;
        x.extend(y);
        Ok(x)
    };
    let qr: Vec<Vec<f64>> = (0..n)
        .map(|p| rotate(q.row(p), coords[p]))
        .collect::<Result<_>>()?;
    let kr: Vec<Vec<f64>> = (0..n)
        .map(|p| rotate(k.row(p), coords[p]))
        .collect::<Result<_>>()?;
    let mut out = Signal::zeros(vec![n], n)?;
    for p in 0..n {
        for j in 0..n {
            out.row_mut(p)[j] = dot(&qr[p], &kr[j]);
        }
    }
    Ok(out)
}

/// Tied journey transform whose attention scores equal [`rope_reference`]:
/// the rotation with every angle negated.
pub fn rope_journey_transform(theta: &AngleVector) -> BlockRotation {
    BlockRotation::from_angle_vector(theta.clone()).inverse()
}

/// Two-axis basis whose attention scores equal [`rope2d_reference`]: the
/// x axis rotates only the x blocks and the y axis only the y blocks, both
/// with negated angles.
pub fn rope2d_journey_basis(
    theta_x: &AngleVector,
    theta_y: &AngleVector,
) -> Result<Arc<AxisBasis>> {
    let (bx, by) = (theta_x.blocks(), theta_y.blocks());
    let mut ax = vec![0.0; bx + by];
    let mut ay = vec![0.0; bx + by];
    ax[..bx]
        .iter_mut()
        .zip(theta_x.as_slice())
        .for_each(|(a, t)| *a = -t);
    ay[bx..]
        .iter_mut()
        .zip(theta_y.as_slice())
        .for_each(|(a, t)| *a = -t);
    AxisBasis::shared(vec![
        BlockRotation::from_angles(ax)?.into(),
        BlockRotation::from_angles(ay)?.into(),
    ])
}

/// Derivative of the attention output with respect to one block angle of
/// a tied rotation journey.
pub fn attend_tied_angle_grad(
    inputs: &AttentionInputs,
    rotation: &BlockRotation,
    block: usize,
    causal: bool,
) -> Result<Signal> {
    let n = inputs.len();
    let d = inputs.dim();
    if rotation.dim() != d {
        return Err(Error::DimMismatch {
            expected: d,
            found: rotation.dim(),
        });
    }
    let journey = JourneyTransforms::tied(rotation.clone(), n)?;
    let out = attend(inputs, Positions::Journey(&journey), causal)?;
    let mut grad = Signal::zeros(vec![n], d)?;
    for p in 0..n {
        let live = if causal { p + 1 } else { n };
        let alpha = &out.alpha.row(p)[..live];
        let mut dscore = vec![0.0; live];
        let mut moved = Vec::with_capacity(live);
        let mut dmoved = Vec::with_capacity(live);
        for j in 0..live {
            let power = p as i64 - j as i64;
            let dk = rotation.apply_dtheta(power, inputs.k.row(j), block)?;
            dscore[j] = inputs.scale * dot(inputs.q.row(p), &dk);
            moved.push(rotation.pow(power).apply(inputs.v.row(j))?);
            dmoved.push(rotation.apply_dtheta(power, inputs.v.row(j), block)?);
        }
        let mean: f64 = alpha.iter().zip(&dscore).map(|(a, s)| a * s).sum();
        let g = grad.row_mut(p);
        for j in 0..live {
            let dalpha = alpha[j] * (dscore[j] - mean);
            for c in 0..d {
                g[c] += dalpha * moved[j][c] + alpha[j] * dmoved[j][c];
            }
        }
    }
    Ok(grad)
}

/// Linear state-space system with per-step maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmSystem {
    /// `A_0 .. A_{T-2}`, each `d x d`; `A_j` carries the state from step `j` to `j + 1`.
    pub a: Vec<DMatrix<f64>>,
    /// `B_0 .. B_{T-1}`, each `d x d_x`.
    pub b: Vec<DMatrix<f64>>,
    /// `C_0 .. C_{T-1}`, each `d_y x d`.
    pub c: Vec<DMatrix<f64>>,
    /// Inputs, `T x d_x`.
    pub x: Signal,
}

impl SsmSystem {
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        x: Signal,
    ) -> Result<Self> {
        let t = x.positions();
        if x.rank() != 1 {
            return Err(Error::InvalidShape("ssm inputs must be T x d_x".into()));
        }
        if b.len() != t || c.len() != t || a.len() + 1 != t {
            return Err(Error::DimMismatch {
                expected: t,
                found: b.len().min(c.len()).min(a.len() + 1),
            });
        }
        let d = b[0].nrows();
        let dy = c[0].nrows();
        let bad = |m: &DMatrix<f64>, r: usize, cols: usize| m.nrows() != r || m.ncols() != cols;
        if b.iter().any(|m| bad(m, d, x.dim()))
            || a.iter().any(|m| bad(m, d, d))
            || c.iter().any(|m| bad(m, dy, d))
        {
            return Err(Error::InvalidShape("ssm maps are not conformable".into()));
        }
        Ok(Self { a, b, c, x })
    }

    pub fn len(&self) -> usize {
        self.x.positions()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn state_dim(&self) -> usize {
        self.b[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c[0].nrows()
    }

    /// `B_i x_i` for every step.
    pub fn driven_inputs(&self) -> Result<Signal> {
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| {
                (&self.b[i] * DVector::from_column_slice(self.x.row(i)))
                    .as_slice()
                    .to_vec()
            })
            .collect();
        Signal::from_rows(&rows)
    }
}

/// `y_k = C_k h_k` with `h_k = A_{k-1} h_{k-1} + B_k x_k`.
pub fn ssm_scan(sys: &SsmSystem) -> Result<Signal> {
    let mut h = DVector::zeros(sys.state_dim());
    let mut out = Signal::zeros(vec![sys.len()], sys.output_dim())?;
    for k in 0..sys.len() {
        let drive = &sys.b[k] * DVector::from_column_slice(sys.x.row(k));
        h = if k == 0 {
            drive
        } else {
            &sys.a[k - 1] * h + drive
        };
        out.row_mut(k).copy_from_slice((&sys.c[k] * &h).as_slice());
    }
    Ok(out)
}

/// Residuals from checking the three reductions on one seeded instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub seed: u64,
    /// Forced-weight causal attention (then `C_k`) vs the state recurrence.
    pub ssm_residual: f64,
    /// Same, with `1e-3` added to every entry of one `A_j` on the attention side.
    pub ssm_control: f64,
    /// Identity transforms vs plain softmax attention.
    pub vanilla_residual: f64,
    /// A slightly rotated tied journey vs plain softmax attention.
    pub vanilla_control: f64,
    /// Tied `R^-1` scores vs rotary scores.
    pub rope_residual: f64,
    /// Tied `R` (no negation) scores vs rotary scores.
    pub rope_control: f64,
    /// Axis-split two-axis basis vs two-axis rotary scores.
    pub rope2d_residual: f64,
    pub rope2d_control: f64,
}

pub const REDUCTION_TOLERANCE_SSM: f64 = 1e-9;
pub const REDUCTION_TOLERANCE_EXACT: f64 = 1e-12;
pub const NEGATIVE_CONTROL_FLOOR: f64 = 1e-5;

impl ReductionReport {
    pub fn passes(&self) -> bool {
        self.ssm_residual < REDUCTION_TOLERANCE_SSM
            && self.vanilla_residual < REDUCTION_TOLERANCE_EXACT
            && self.rope_residual < REDUCTION_TOLERANCE_EXACT
            && self.rope2d_residual < REDUCTION_TOLERANCE_EXACT
            && [
                self.ssm_control,
                self.vanilla_control,
                self.rope_control,
                self.rope2d_control,
            ]
            .iter()
            .all(|&c| c > NEGATIVE_CONTROL_FLOOR)
    }
}

/// Seeded system with `T` steps and state width `d`. `A_j` are well
/// conditioned and do not commute; inputs and outputs are 3-wide.
pub fn random_ssm(rng: &mut sample::SeededRng, t: usize, d: usize) -> SsmSystem {
    let (dx, dy) = (3, 3);
    let a = (0..t - 1)
        .map(|_| {
            sample::dense(rng, d, 0.3 / (d as f64).sqrt())
                .matrix()
                .clone()
        })
        .collect();
    let b = (0..t).map(|_| sample::matrix(rng, d, dx)).collect();
    let c = (0..t).map(|_| sample::matrix(rng, dy, d)).collect();
    let x = sample::signal(rng, vec![t], dx);
    SsmSystem::new(a, b, c, x).expect("conformable by construction")
}

/// Attention route for the state recurrence: forced unit causal weights,
/// journeys `R_j = A_j`, values `B_i x_i`, readout `C_k` applied afterwards.
pub fn ssm_via_attention(sys: &SsmSystem, a_override: Option<&[DMatrix<f64>]>) -> Result<Signal> {
    let n = sys.len();
    let d = sys.state_dim();
    let a = a_override.unwrap_or(&sys.a);
    let mut ts: Vec<Transform> = a
        .iter()
        .map(|m| DenseTransform::from_matrix(m.clone()).map(Transform::from))
        .collect::<Result<_>>()?;
    ts.push(DenseTransform::identity(d).into());
    let journey = JourneyTransforms::per_position(ts)?;
    let mut weights = Signal::zeros(vec![n], n)?;
    for p in 0..n {
        weights.row_mut(p)[..=p].fill(1.0);
    }
    let o = attend_forced(
        &sys.driven_inputs()?,
        Positions::Journey(&journey),
        &weights,
    )?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            (&sys.c[k] * DVector::from_column_slice(o.row(k)))
                .as_slice()
                .to_vec()
        })
        .collect();
    Signal::from_rows(&rows)
}

pub fn reduction_check(seed: u64) -> Result<ReductionReport> {
    reduction_check_with(seed, 16, 8)
}

/// Runs every reduction at `T = t`, `d = d` (d divisible by 4).
pub fn reduction_check_with(seed: u64, t: usize, d: usize) -> Result<ReductionReport> {
    if !d.is_multiple_of(4) {
        return Err(Error::InvalidShape(format!(
            "reduction check needs d divisible by 4, got {d}"
        )));
    }
    let mut rng = sample::rng(seed);

    let sys = random_ssm(&mut rng, t, d);
    let direct = ssm_scan(&sys)?;
    let ssm_residual = ssm_via_attention(&sys, None)?.max_abs_diff(&direct);
    let mut perturbed = sys.a.clone();
    perturbed[(t - 1) / 2].add_scalar_mut(1e-3);
    let ssm_control = ssm_via_attention(&sys, Some(&perturbed))?.max_abs_diff(&direct);

    let inputs = AttentionInputs::new(
        sample::signal(&mut rng, vec![t], d),
        sample::signal(&mut rng, vec![t], d),
        sample::signal(&mut rng, vec![t], d),
    )?;
    let reference = vanilla_attention(&inputs, false)?;
    let identity = JourneyTransforms::tied(BlockRotation::identity(d)?, t)?;
    let vanilla_residual = attend(&inputs, Positions::Journey(&identity), false)?
        .o
        .max_abs_diff(&reference.o);
    let nudged = JourneyTransforms::tied(BlockRotation::from_angles(vec![1e-2; d / 2])?, t)?;
    let vanilla_control = attend(&inputs, Positions::Journey(&nudged), false)?
        .o
        .max_abs_diff(&reference.o);

    let theta = sample::rotation(&mut rng, d / 2).angle_vector().clone();
    let rope = rope_reference(&inputs.q, &inputs.k, &theta)?;
    let bridged = JourneyTransforms::tied(rope_journey_transform(&theta), t)?;
    let rope_residual =
        relative_scores(&inputs.q, &inputs.k, Positions::Journey(&bridged))?.max_abs_diff(&rope);
    let unbridged = JourneyTransforms::tied(BlockRotation::from_angle_vector(theta.clone()), t)?;
    let rope_control =
        relative_scores(&inputs.q, &inputs.k, Positions::Journey(&unbridged))?.max_abs_diff(&rope);

    let side = (t as f64).sqrt().ceil() as i64;
    let coords: Vec<[i64; 2]> = (0..t as i64).map(|i| [i / side, i % side]).collect();
    let theta_x = sample::rotation(&mut rng, d / 4).angle_vector().clone();
    let theta_y = sample::rotation(&mut rng, d / 4).angle_vector().clone();
    let rope2d = rope2d_reference(&inputs.q, &inputs.k, &coords, &theta_x, &theta_y)?;
    let coord_rows: Vec<Vec<i64>> = coords.iter().map(|c| c.to_vec()).collect();
    let grid = PositionGrid::new(
        coord_rows.clone(),
        rope2d_journey_basis(&theta_x, &theta_y)?,
    )?;
    let rope2d_residual =
        relative_scores(&inputs.q, &inputs.k, Positions::Grid(&grid))?.max_abs_diff(&rope2d);
    // Control: both axes rotate every block, so the split is lost.
    let mixed = AxisBasis::shared(vec![
        BlockRotation::from_angles(
            theta_x
                .as_slice()
                .iter()
                .chain(theta_x.as_slice())
                .map(|a| -a)
                .collect(),
        )?
        .into(),
        BlockRotation::from_angles(
            theta_y
                .as_slice()
                .iter()
                .chain(theta_y.as_slice())
                .map(|a| -a)
                .collect(),
        )?
        .into(),
    ])?;
    let mixed_grid = PositionGrid::new(coord_rows, mixed)?;
    let rope2d_control =
        relative_scores(&inputs.q, &inputs.k, Positions::Grid(&mixed_grid))?.max_abs_diff(&rope2d);

    Ok(ReductionReport {
        seed,
        ssm_residual,
        ssm_control,
        vanilla_residual,
        vanilla_control,
        rope_residual,
        rope_control,
        rope2d_residual,
        rope2d_control,
    })
}

/// `max |T_{p,q} T_{q,r} - T_{p,r}|` over all index triples, in dense form.
pub fn cocycle_residual(journey: &JourneyTransforms) -> Result<f64> {
    let n = journey.len();
    let table: Vec<DenseTransform> = (0..n * n)
        .map(|i| journey.relative(i / n, i % n).map(|t| t.to_dense()))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                let lhs = table[p * n + q].compose(&table[q * n + r])?;
                worst = worst.max(lhs.max_abs_diff(&table[p * n + r]));
            }
        }
    }
    Ok(worst)
}

/// Largest angle-space difference between `T_{p,q}` and `T_{p+1,q+1}` for a
/// tied rotation journey; zero means distance-only dependence holds exactly.
pub fn tied_distance_residual(journey: &JourneyTransforms) -> Result<f64> {
    let n = journey.len();
    let mut worst = 0.0f64;
    for p in 0..n - 1 {
        for q in 0..n - 1 {
            let (a, b) = (journey.relative(p, q)?, journey.relative(p + 1, q + 1)?);
            let diff = match (&a, &b) {
                (Transform::Rotation(x), Transform::Rotation(y)) => {
                    max_abs_diff(x.angles(), y.angles())
                }
                _ => a.to_dense().max_abs_diff(&b.to_dense()),
            };
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}
