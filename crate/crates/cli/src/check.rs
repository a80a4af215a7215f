//! Seeded property-check runner.
//!
//! Each suite replays one family of laws on freshly drawn cases and counts
//! failures against a fixed tolerance. Negative controls (laws expected to
//! break, e.g. interchange on a non-commuting dense basis) count as failures
//! when the violation is *not* observed.

use std::fmt::Write as _;

use axiscomp_core::align::{align, align_nd, axis_shift, concat, concat_recover_right, ConcatMode};
use axiscomp_core::attention::{
    attend, attend_tied_angle_grad, cocycle_residual, reduction_check, tied_distance_residual,
    AttentionInputs, JourneyTransforms, Positions, NEGATIVE_CONTROL_FLOOR,
};
use axiscomp_core::mrep::{mrep_1d, mrep_nd, window_embed, MRepConfig};
use axiscomp_core::nalgebra::DMatrix;
use axiscomp_core::scan::{
    grid2d_column_major_fold, grid2d_row_major_fold, grid3d_spatial_then_temporal,
    grid3d_temporal_then_spatial, grid_direct_sum, prefix_scan_parallel, prefix_scan_sequential,
    Grid, PositionTransforms, SequenceSignal,
};
use axiscomp_core::signal::max_abs_diff;
use axiscomp_core::{
    check_interchange, sample, AxisBasis, BlockRotation, DenseTransform, Element, Result, Signal,
    Transform,
};

use crate::manifest::{Backend, Manifest};
use crate::tensor_file::TensorFile;

pub const SUITES: &[&str] = &[
    "algebra",
    "interchange",
    "scan",
    "grid",
    "mrep",
    "align",
    "concat",
    "attention",
    "journey",
    "gradient",
    "io",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// A few dozen cases per suite; a second or two overall.
    Quick,
    /// The full case counts and size grids.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub seed: u64,
    pub cases: usize,
    pub failures: usize,
    /// Largest residual over the law checks (controls excluded).
    pub max_residual: f64,
    /// Smallest violation seen by a negative control, if the suite has any.
    pub min_control: Option<f64>,
    pub notes: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub suites: Vec<SuiteReport>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn failures(&self) -> usize {
        self.suites.iter().map(|s| s.failures).sum()
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let control = s
                .min_control
                .map_or("-".to_string(), |c| format!("{c:.3e}"));
            let _ = writeln!(
                out,
                "{:<12} {:>6} cases {:>4} failures  max residual {:.3e}  min control {}  seed {}  {}",
                s.name,
                s.cases,
                s.failures,
                s.max_residual,
                control,
                s.seed,
                if s.passed() { "PASS" } else { "FAIL" }
            );
            for n in &s.notes {
                let _ = writeln!(out, "    {n}");
            }
        }
        let _ = writeln!(
            out,
            "overall {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        out
    }

    pub fn machine(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let control = s
                .min_control
                .map_or("none".to_string(), |c| format!("{c:.6e}"));
            let _ = writeln!(
                out,
                "check suite={} cases={} failures={} max_residual={:.6e} min_control={} seed={} pass={}",
                s.name,
                s.cases,
                s.failures,
                s.max_residual,
                control,
                s.seed,
                s.passed()
            );
        }
        let _ = writeln!(
            out,
            "check overall suites={} failures={} pass={}",
            self.suites.len(),
            self.failures(),
            self.passed()
        );
        out
    }
}

#[derive(Debug, Default)]
struct Tally {
    cases: usize,
    failures: usize,
    max_residual: f64,
    min_control: Option<f64>,
    notes: Vec<String>,
}

impl Tally {
    // Negated comparisons so that NaN residuals count as failures.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn law(&mut self, residual: f64, tol: f64) {
        self.cases += 1;
        self.max_residual = self.max_residual.max(residual);
        if !(residual <= tol) {
            self.failures += 1;
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn control(&mut self, residual: f64, floor: f64) {
        self.cases += 1;
        self.min_control = Some(self.min_control.map_or(residual, |c| c.min(residual)));
        if !(residual > floor) {
            self.failures += 1;
        }
    }

    fn flag(&mut self, ok: bool) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn note(&mut self, n: impl Into<String>) {
        self.notes.push(n.into());
    }
}

/// Runs `names` (or everything for `["all"]`) in order.
pub fn run(
    names: &[String],
    seed: u64,
    backends: &[Backend],
    profile: Profile,
) -> std::result::Result<CheckReport, String> {
    let list: Vec<&str> = if names.iter().any(|n| n == "all") {
        SUITES.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    let mut suites = Vec::with_capacity(list.len());
    for name in list {
        suites.push(run_suite(name, seed, backends, profile)?);
    }
    Ok(CheckReport { suites })
}

pub fn run_suite(
    name: &str,
    seed: u64,
    backends: &[Backend],
    profile: Profile,
) -> std::result::Result<SuiteReport, String> {
    let mut t = Tally::default();
    let outcome = match name {
        "algebra" => algebra(&mut t, seed, backends, profile),
        "interchange" => interchange(&mut t, seed, backends, profile),
        "scan" => scan(&mut t, seed, backends, profile),
        "grid" => grid(&mut t, seed, backends, profile),
        "mrep" => mrep(&mut t, seed, profile),
        "align" => alignment(&mut t, seed, profile),
        "concat" => concatenation(&mut t, seed, profile),
        "attention" => attention(&mut t, seed, profile),
        "journey" => journey(&mut t, seed, profile),
        "gradient" => gradient(&mut t, seed, profile),
        "io" => io(&mut t, seed, profile),
        other => {
            return Err(format!(
                "unknown suite {other:?}; expected one of {} or all",
                SUITES.join(", ")
            ))
        }
    };
    if let Err(e) = outcome {
        t.failures += 1;
        t.note(format!("error: {e}"));
    }
    Ok(SuiteReport {
        name: name.to_string(),
        seed,
        cases: t.cases,
        failures: t.failures,
        max_residual: t.max_residual,
        min_control: t.min_control,
        notes: t.notes,
    })
}

fn pick(profile: Profile, quick: usize, full: usize) -> usize {
    match profile {
        Profile::Quick => quick,
        Profile::Full => full,
    }
}

fn axis_basis(
    rng: &mut sample::SeededRng,
    backend: Backend,
    axes: usize,
    d: usize,
) -> Result<std::sync::Arc<AxisBasis>> {
    let ts = (0..axes)
        .map(|_| match backend {
            Backend::Rotation => sample::rotation(rng, d / 2).into(),
            Backend::Dense => sample::dense(rng, d, 0.5 / (d as f64).sqrt()).into(),
        })
        .collect();
    AxisBasis::shared(ts)
}

/// Associativity, both identity laws and the axis-local inverse law.
fn algebra(t: &mut Tally, seed: u64, backends: &[Backend], profile: Profile) -> Result<()> {
    let cases = pick(profile, 100, 1000);
    for (bi, &backend) in backends.iter().enumerate() {
        let mut rng = sample::rng(seed.wrapping_add(bi as u64));
        for _ in 0..cases {
            let axes = sample::size(&mut rng, 1, 3);
            let d = 2 * sample::size(&mut rng, 1, 32);
            let basis = axis_basis(&mut rng, backend, axes, d)?;
            let k = sample::size(&mut rng, 0, axes - 1);
            let shared: Vec<i64> = (0..axes).map(|_| sample::power(&mut rng, 3)).collect();
            let make = |rng: &mut sample::SeededRng| {
                let on_axis = sample::power(rng, 3);
                let mut p = shared.clone();
                p[k] = on_axis;
                Element::new(sample::vector(rng, d), p, &basis)
            };
            let (x, y, z) = (make(&mut rng)?, make(&mut rng)?, make(&mut rng)?);
            let left = x.compose_axis(&y, k)?.compose_axis(&z, k)?;
            let right = x.compose_axis(&y.compose_axis(&z, k)?, k)?;
            t.flag(left.powers() == right.powers());
            t.law(max_abs_diff(left.content(), right.content()), 1e-12);

            let mut e_powers = shared.clone();
            e_powers[k] = 0;
            let e = Element::new(vec![0.0; d], e_powers, &basis)?;
            t.law(e.compose_axis(&x, k)?.distance(&x), 1e-12);
            t.law(x.compose_axis(&e, k)?.distance(&x), 1e-12);

            let mut local = vec![0; axes];
            local[k] = sample::power(&mut rng, 3);
            let u = Element::new(sample::vector(&mut rng, d), local, &basis)?;
            let inv = u.inverse_axis(k)?;
            let ident = Element::identity(&basis);
            t.law(u.compose_axis(&inv, k)?.distance(&ident), 1e-12);
            t.law(inv.compose_axis(&u, k)?.distance(&ident), 1e-12);
        }
    }
    Ok(())
}

/// The interchange law holds exactly when the two axis transforms commute.
fn interchange(t: &mut Tally, seed: u64, backends: &[Backend], profile: Profile) -> Result<()> {
    let samples = pick(profile, 100, 1000);
    let mut rng = sample::rng(seed);
    for &backend in backends {
        match backend {
            Backend::Rotation => {
                let basis = axis_basis(&mut rng, Backend::Rotation, 3, 8)?;
                for (i, j) in [(0, 1), (1, 2), (0, 2)] {
                    let rep = check_interchange(&basis, i, j, samples, seed)?;
                    t.flag(rep.holds);
                    t.law(rep.max_residual, 1e-12);
                }
            }
            Backend::Dense => {
                let r1 = sample::dense(&mut rng, 4, 0.5);
                let r2 = sample::dense(&mut rng, 4, 0.5);
                let nc = AxisBasis::shared(vec![r1.clone().into(), r2.into()])?;
                let rep = check_interchange(&nc, 0, 1, samples, seed)?;
                t.flag(!rep.holds);
                t.control(rep.max_residual, 1e-6);
                t.note(format!(
                    "dense non-commuting basis: law violated as expected, residual {:.3e}, commutator {:.3e}",
                    rep.max_residual, rep.commutator
                ));
                let squared = AxisBasis::shared(vec![r1.clone().into(), r1.compose(&r1)?.into()])?;
                let rep = check_interchange(&squared, 0, 1, samples, seed)?;
                t.flag(rep.holds);
                t.law(rep.max_residual, 1e-9);
            }
        }
    }
    Ok(())
}

fn sequence(
    rng: &mut sample::SeededRng,
    backend: Backend,
    len: usize,
    d: usize,
    tied: bool,
) -> Result<SequenceSignal> {
    let values = sample::signal(rng, vec![len], d);
    let draw = |rng: &mut sample::SeededRng| -> Transform {
        match backend {
            Backend::Rotation => sample::rotation(rng, d / 2).into(),
            Backend::Dense => {
                let q = sample::orthogonal(rng, d);
                let r = sample::rotation(rng, d / 2).to_dense();
                q.compose(&r).expect("same dim").into()
            }
        }
    };
    if tied {
        SequenceSignal::tied(values, draw(rng))
    } else {
        let ts = (0..len).map(|_| draw(rng)).collect();
        SequenceSignal::new(values, PositionTransforms::PerPosition(ts))
    }
}

/// Blocked parallel prefixes agree with the sequential left fold.
fn scan(t: &mut Tally, seed: u64, backends: &[Backend], profile: Profile) -> Result<()> {
    let lens: &[usize] = match profile {
        Profile::Quick => &[64, 300],
        Profile::Full => &[64, 1024, 4096],
    };
    let dims: &[usize] = match profile {
        Profile::Quick => &[4, 16],
        Profile::Full => &[16, 64],
    };
    let mut rng = sample::rng(seed);
    for &backend in backends {
        for &len in lens {
            for &d in dims {
                for tied in [true, false] {
                    let s = sequence(&mut rng, backend, len, d, tied)?;
                    let seq = prefix_scan_sequential(&s)?;
                    for chunk in [1, 7, 64, len] {
                        let par = prefix_scan_parallel(&s, chunk)?;
                        t.law(par.prefixes.max_abs_diff(&seq.prefixes), 1e-9);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Fold-order independence on commuting grids, divergence otherwise.
fn grid(t: &mut Tally, seed: u64, backends: &[Backend], profile: Profile) -> Result<()> {
    let cases = pick(profile, 5, 30);
    let mut rng = sample::rng(seed);
    for &backend in backends {
        for _ in 0..cases {
            let d = 2 * sample::size(&mut rng, 1, 4);
            let (rx, ry, rt): (Transform, Transform, Transform) = match backend {
                Backend::Rotation => (
                    sample::rotation(&mut rng, d / 2).into(),
                    sample::rotation(&mut rng, d / 2).into(),
                    sample::rotation(&mut rng, d / 2).into(),
                ),
                Backend::Dense => {
                    let a = sample::dense(&mut rng, d, 0.3 / (d as f64).sqrt());
                    let a2 = a.compose(&a)?;
                    let a_inv = a.inverse()?;
                    (a.into(), a2.into(), a_inv.into())
                }
            };
            let (h, w) = (sample::size(&mut rng, 1, 8), sample::size(&mut rng, 1, 8));
            let g = Grid::plane(
                sample::signal(&mut rng, vec![h, w], d),
                rx.clone(),
                ry.clone(),
            )?;
            let direct = grid_direct_sum(&g)?;
            let rows = grid2d_row_major_fold(&g)?;
            let cols = grid2d_column_major_fold(&g)?;
            t.law(max_abs_diff(rows.content(), cols.content()), 1e-9);
            t.law(max_abs_diff(rows.content(), &direct), 1e-9);

            let (f, h, w) = (
                sample::size(&mut rng, 1, 4),
                sample::size(&mut rng, 1, 5),
                sample::size(&mut rng, 1, 5),
            );
            let g = Grid::volume(sample::signal(&mut rng, vec![h, w, f], d), rx, ry, rt)?;
            let a = grid3d_spatial_then_temporal(&g)?;
            let b = grid3d_temporal_then_spatial(&g)?;
            t.law(max_abs_diff(a.content(), b.content()), 1e-9);
            t.law(max_abs_diff(a.content(), &grid_direct_sum(&g)?), 1e-9);
        }
    }
    // Non-commuting control: the two fold orders must disagree.
    for _ in 0..cases {
        let g = Grid::plane(
            sample::signal(&mut rng, vec![3, 3], 4),
            sample::dense(&mut rng, 4, 0.5).into(),
            sample::dense(&mut rng, 4, 0.5).into(),
        )?;
        let rows = grid2d_row_major_fold(&g)?;
        let cols = grid2d_column_major_fold(&g)?;
        t.control(max_abs_diff(rows.content(), cols.content()), 1e-6);
    }
    Ok(())
}

fn place_1d(content: &Signal, offset: usize, total: usize) -> Result<Signal> {
    let mut s = Signal::zeros(vec![total], content.dim())?;
    for i in 0..content.positions() {
        s.row_mut(offset + i).copy_from_slice(content.row(i));
    }
    Ok(s)
}

fn place_2d(content: &Signal, at: (usize, usize), total: (usize, usize)) -> Result<Signal> {
    let (h, w) = (content.shape()[0], content.shape()[1]);
    let mut s = Signal::zeros(vec![total.0, total.1], content.dim())?;
    for i in 0..h {
        for j in 0..w {
            s.at_mut(&[at.0 + i, at.1 + j])
                .copy_from_slice(content.at(&[i, j]));
        }
    }
    Ok(s)
}

/// Zero-padded translation invariance in 1D and 2D, plus the witness
/// that window embeddings see in-window order.
fn mrep(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    for _ in 0..pick(profile, 10, 50) {
        let m = sample::size(&mut rng, 1, 8);
        let n = sample::size(&mut rng, 1, 64 - 2 * (m - 1) - 8);
        let d = 2 * sample::size(&mut rng, 1, 4);
        let total = n + 2 * (m - 1) + 8;
        let cfg = MRepConfig::sequence(m, sample::rotation(&mut rng, d / 2))?;
        let content = sample::signal(&mut rng, vec![n], d);
        let (a, b) = (sample::size(&mut rng, 0, 8), sample::size(&mut rng, 0, 8));
        let x = mrep_1d(&place_1d(&content, m - 1 + a, total)?, &cfg)?;
        let y = mrep_1d(&place_1d(&content, m - 1 + b, total)?, &cfg)?;
        t.law(max_abs_diff(&x.v, &y.v), 1e-12);
    }
    for _ in 0..pick(profile, 4, 20) {
        let (mh, mw) = (sample::size(&mut rng, 1, 4), sample::size(&mut rng, 1, 4));
        let (h, w) = (
            sample::size(&mut rng, 1, 16 - 2 * (mh - 1) - 3),
            sample::size(&mut rng, 1, 16 - 2 * (mw - 1) - 3),
        );
        let total = (h + 2 * (mh - 1) + 3, w + 2 * (mw - 1) + 3);
        let d = 4;
        let cfg = MRepConfig::new(
            vec![mh, mw],
            vec![sample::rotation(&mut rng, 2), sample::rotation(&mut rng, 2)],
        )?;
        let content = sample::signal(&mut rng, vec![h, w], d);
        let shift = |rng: &mut sample::SeededRng| {
            (
                mh - 1 + sample::size(rng, 0, 3),
                mw - 1 + sample::size(rng, 0, 3),
            )
        };
        let (p, q) = (shift(&mut rng), shift(&mut rng));
        let x = mrep_nd(&place_2d(&content, p, total)?, &cfg)?;
        let y = mrep_nd(&place_2d(&content, q, total)?, &cfg)?;
        t.law(max_abs_diff(&x.v, &y.v), 1e-12);
    }
    let windows = pick(profile, 40, 200);
    let mut sensitive = 0;
    for _ in 0..windows {
        let m = sample::size(&mut rng, 2, 8);
        let cfg = MRepConfig::sequence(m, sample::rotation(&mut rng, 2))?;
        let s = sample::signal(&mut rng, vec![m], 4);
        let i = sample::size(&mut rng, 0, m - 1);
        let j = (i + sample::size(&mut rng, 1, m - 1)) % m;
        let mut swapped = s.clone();
        swapped.row_mut(i).copy_from_slice(s.row(j));
        swapped.row_mut(j).copy_from_slice(s.row(i));
        let a = window_embed(&s, &[0], &cfg)?;
        let b = window_embed(&swapped, &[0], &cfg)?;
        if max_abs_diff(&a.s, &b.s) > 1e-6 {
            sensitive += 1;
        }
    }
    let fraction = sensitive as f64 / windows as f64;
    t.note(format!(
        "order sensitivity witnessed in {sensitive}/{windows} windows"
    ));
    t.flag(fraction >= 0.95);
    Ok(())
}

/// Planted shifts come back exactly; positive rescaling keeps the argmax.
fn alignment(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    for _ in 0..pick(profile, 20, 100) {
        let d = 2 * sample::size(&mut rng, 2, 8);
        let basis = AxisBasis::shared(vec![sample::rotation(&mut rng, d / 2).into()])?;
        let y = sample::vector(&mut rng, d);
        let s = sample::power(&mut rng, 10);
        let mut x = axis_shift(&y, 0, s, &basis)?;
        x.iter_mut()
            .for_each(|v| *v += 1e-8 * sample::uniform(&mut rng, -1.0, 1.0));
        let res = align(&x, &y, 0, -10, 10, &basis)?;
        t.flag(res.best_shift == vec![s]);
        let c = sample::uniform(&mut rng, 0.01, 100.0);
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        t.flag(align(&scaled, &y, 0, -10, 10, &basis)?.best_shift == res.best_shift);
    }
    for _ in 0..pick(profile, 5, 25) {
        let basis = AxisBasis::shared(vec![
            sample::rotation(&mut rng, 4).into(),
            sample::rotation(&mut rng, 4).into(),
        ])?;
        let y = sample::vector(&mut rng, 8);
        let planted = vec![sample::power(&mut rng, 10), sample::power(&mut rng, 10)];
        let mut x = basis.combined(&planted)?.apply(&y)?;
        x.iter_mut()
            .for_each(|v| *v += 1e-8 * sample::uniform(&mut rng, -1.0, 1.0));
        let res = align_nd(&x, &y, &[(-10, 10), (-10, 10)], &basis)?;
        t.flag(res.best_shift == planted);
        let scaled: Vec<f64> = x.iter().map(|v| 3.5 * v).collect();
        t.flag(align_nd(&scaled, &y, &[(-10, 10), (-10, 10)], &basis)?.best_shift == planted);
    }
    Ok(())
}

/// Strict concatenation is axis composition; it associates and inverts.
fn concatenation(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    for _ in 0..pick(profile, 40, 200) {
        let axes = sample::size(&mut rng, 1, 3);
        let d = 2 * sample::size(&mut rng, 1, 6);
        let basis = axis_basis(&mut rng, Backend::Rotation, axes, d)?;
        let k = sample::size(&mut rng, 0, axes - 1);
        let shared: Vec<i64> = (0..axes).map(|_| sample::power(&mut rng, 16)).collect();
        let make = |rng: &mut sample::SeededRng| {
            let mut p = shared.clone();
            p[k] = sample::size(rng, 1, 16) as i64;
            Element::new(sample::vector(rng, d), p, &basis)
        };
        let (x, y, z) = (make(&mut rng)?, make(&mut rng)?, make(&mut rng)?);
        let c = concat(&x, &y, k, ConcatMode::Strict)?;
        let e = x.compose_axis(&y, k)?;
        t.flag(c.powers() == e.powers());
        t.law(max_abs_diff(c.content(), e.content()), 1e-12);
        let mut widths = shared.clone();
        widths[k] = x.powers()[k] + y.powers()[k];
        t.flag(c.powers() == widths.as_slice());
        let left = concat(&c, &z, k, ConcatMode::Strict)?;
        let right = concat(
            &x,
            &concat(&y, &z, k, ConcatMode::Strict)?,
            k,
            ConcatMode::Strict,
        )?;
        t.flag(left.powers() == right.powers());
        t.law(max_abs_diff(left.content(), right.content()), 1e-12);
        t.law(
            max_abs_diff(&concat_recover_right(&c, &x, k)?, y.content()),
            1e-9,
        );
    }
    Ok(())
}

/// The three reductions with their negative controls, plus basic
/// row-stochastic and causal-mask checks.
fn attention(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    for i in 0..pick(profile, 3, 20) as u64 {
        let rep = reduction_check(seed.wrapping_mul(1000).wrapping_add(i))?;
        t.law(rep.ssm_residual, 1e-9);
        t.law(rep.vanilla_residual, 1e-12);
        t.law(rep.rope_residual, 1e-12);
        t.law(rep.rope2d_residual, 1e-12);
        for c in [
            rep.ssm_control,
            rep.vanilla_control,
            rep.rope_control,
            rep.rope2d_control,
        ] {
            t.control(c, NEGATIVE_CONTROL_FLOOR);
        }
    }
    let mut rng = sample::rng(seed);
    for _ in 0..pick(profile, 5, 20) {
        let n = sample::size(&mut rng, 1, 12);
        let inputs = AttentionInputs::new(
            sample::signal(&mut rng, vec![n], 6),
            sample::signal(&mut rng, vec![n], 6),
            sample::signal(&mut rng, vec![n], 6),
        )?;
        let j = JourneyTransforms::tied(sample::rotation(&mut rng, 3), n)?;
        let out = attend(&inputs, Positions::Journey(&j), true)?;
        for p in 0..n {
            let row = out.alpha.row(p);
            t.law((row.iter().sum::<f64>() - 1.0).abs(), 1e-12);
            t.flag(row[p + 1..].iter().all(|&a| a == 0.0));
        }
    }
    Ok(())
}

/// Cocycle over all triples at T = 12 and exact distance dependence.
fn journey(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    for _ in 0..pick(profile, 1, 5) {
        let len = 12;
        let rot = JourneyTransforms::per_position(
            (0..len)
                .map(|_| sample::rotation(&mut rng, 4).into())
                .collect(),
        )?;
        t.law(cocycle_residual(&rot)?, 1e-12);
        let dense = JourneyTransforms::per_position(
            (0..len)
                .map(|_| sample::orthogonal(&mut rng, 8).into())
                .collect(),
        )?;
        t.law(cocycle_residual(&dense)?, 1e-12);
        let tied = JourneyTransforms::tied(sample::rotation(&mut rng, 4), len)?;
        t.law(cocycle_residual(&tied)?, 1e-12);
        t.law(tied_distance_residual(&tied)?, 0.0);
        for p in 0..len {
            for q in 0..len {
                let a = dense.relative(p, q)?.to_dense();
                let b = dense.cached_relative(p, q)?.to_dense();
                t.law(a.max_abs_diff(&b), 1e-12);
            }
        }
    }
    Ok(())
}

fn relative_error(fd: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    max_abs_diff(fd, exact) / scale
}

/// Analytic angle derivatives against central finite differences.
fn gradient(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    let h = 1e-6;
    for _ in 0..pick(profile, 10, 50) {
        let blocks = sample::size(&mut rng, 1, 6);
        let r = sample::rotation(&mut rng, blocks);
        let v = sample::vector(&mut rng, 2 * blocks);
        let n = sample::power(&mut rng, 8);
        let b = sample::size(&mut rng, 0, blocks - 1);
        let bump = |delta: f64| -> Result<Vec<f64>> {
            let mut a = r.angles().to_vec();
            a[b] += delta;
            BlockRotation::from_angles(a)?.pow(n).apply(&v)
        };
        let (plus, minus) = (bump(h)?, bump(-h)?);
        let fd: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        t.law(relative_error(&fd, &r.apply_dtheta(n, &v, b)?), 1e-6);
    }
    for _ in 0..pick(profile, 4, 20) {
        let n = sample::size(&mut rng, 1, 8);
        let inputs = AttentionInputs::new(
            sample::signal(&mut rng, vec![n], 4),
            sample::signal(&mut rng, vec![n], 4),
            sample::signal(&mut rng, vec![n], 4),
        )?;
        let r = sample::rotation(&mut rng, 2);
        let b = sample::size(&mut rng, 0, 1);
        let causal = sample::size(&mut rng, 0, 1) == 1;
        let exact = attend_tied_angle_grad(&inputs, &r, b, causal)?;
        let run = |delta: f64| -> Result<Signal> {
            let mut a = r.angles().to_vec();
            a[b] += delta;
            let j = JourneyTransforms::tied(BlockRotation::from_angles(a)?, n)?;
            Ok(attend(&inputs, Positions::Journey(&j), causal)?.o)
        };
        let (plus, minus) = (run(h)?, run(-h)?);
        let fd: Vec<f64> = plus
            .data()
            .iter()
            .zip(minus.data())
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        t.law(relative_error(&fd, exact.data()), 1e-5);
    }
    Ok(())
}

/// Bit-exact write/read of tensors and manifests.
fn io(t: &mut Tally, seed: u64, profile: Profile) -> Result<()> {
    let mut rng = sample::rng(seed);
    let seed = seed & i64::MAX as u64;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    for _ in 0..pick(profile, 10, 50) {
        let rank = sample::size(&mut rng, 1, 4);
        let dims: Vec<usize> = (0..rank).map(|_| sample::size(&mut rng, 1, 5)).collect();
        let n = dims.iter().product();
        let data: Vec<f64> = sample::vector(&mut rng, n)
            .into_iter()
            .map(|x| x * 10f64.powi(sample::power(&mut rng, 200) as i32))
            .collect();
        let tf = TensorFile::new(dims, data).expect("consistent dims");
        let back = TensorFile::from_bytes(&tf.to_bytes())
            .map_err(|e| axiscomp_core::Error::InvalidShape(e.to_string()))?;
        t.flag(back.dims == tf.dims && bits(&back.data) == bits(&tf.data));

        let axes = sample::size(&mut rng, 1, 3);
        let d = 2 * sample::size(&mut rng, 1, 3);
        let angles: Vec<Vec<f64>> = (0..axes)
            .map(|_| sample::rotation(&mut rng, d / 2).angles().to_vec())
            .collect();
        let m = Manifest::rotation(angles, seed).expect("valid manifest");
        let parsed = Manifest::parse(&m.to_toml()).ok();
        t.flag(parsed.as_ref() == Some(&m));
        let mats: Vec<Vec<f64>> = (0..axes)
            .map(|_| sample::dense(&mut rng, d, 0.4).to_row_major())
            .collect();
        let dm = Manifest::dense(d, mats, seed).expect("valid manifest");
        let parsed = Manifest::parse(&dm.to_toml()).ok();
        t.flag(parsed.as_ref() == Some(&dm));
    }
    // A dense manifest maps back to the same transforms.
    let a = DenseTransform::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]))?;
    let dm = Manifest::dense(2, vec![a.to_row_major()], 0).expect("valid manifest");
    let back = dm
        .transforms()
        .map_err(|e| axiscomp_core::Error::InvalidShape(e.to_string()))?;
    t.flag(back == vec![Transform::from(a)]);
    Ok(())
}
