use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use axiscomp_core::align::{align_nd_scored, concat, ConcatMode, Scoring};
use axiscomp_core::attention::{
    attend, ssm_scan, ssm_via_attention, AttentionInputs, JourneyTransforms, PositionGrid,
    Positions, SsmSystem,
};
use axiscomp_core::mrep::{mrep_1d, mrep_nd, MRepConfig};
use axiscomp_core::nalgebra::DMatrix;
use axiscomp_core::scan::{
    compose_grid, prefix_scan_parallel, prefix_scan_sequential, scan_sequence, Grid, SequenceSignal,
};
use axiscomp_core::{attention, sample, BlockRotation, DenseTransform, Element, Signal, Transform};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchConfig};
use crate::check::{self, Profile};
use crate::error::{CliError, CliResult};
use crate::manifest::{Backend, ElementsFile, Manifest};
use crate::tensor_file::TensorFile;

#[derive(Debug, Parser)]
#[command(
    name = "axiscomp",
    version,
    about = "Axis-wise composition of signals with structured transforms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Left-fold a list of elements along one axis.
    Compose {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        elements: PathBuf,
        #[arg(long)]
        axis: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embed a sequence: v_1 + R v_2 + R^2 v_3 + ...
    Scan(SequenceArgs),
    /// Every inclusive prefix embedding of a sequence.
    Prefix(SequenceArgs),
    /// Composite of a grid using one transform per axis.
    Grid {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shift-invariant window magnitudes.
    Mrep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        /// Window extent per axis, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for the shift that best maps y onto x.
    Align {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        /// Axis to search; repeat together with --range for several axes.
        #[arg(long, required = true)]
        axis: Vec<usize>,
        /// Inclusive shift range `a..b`, one per --axis.
        #[arg(long, required = true, allow_hyphen_values = true)]
        range: Vec<String>,
        #[arg(long, value_enum, default_value_t = ScoringArg::Dot)]
        scoring: ScoringArg,
        /// Also list every candidate score.
        #[arg(long)]
        all: bool,
    },
    /// Concatenate elements along an axis.
    Concat {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        elements: PathBuf,
        #[arg(long)]
        axis: usize,
        #[arg(long, value_enum, default_value_t = ConcatArg::Strict)]
        mode: ConcatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative-position attention.
    Attend(AttendArgs),
    /// Run a linear state-space recurrence and its attention form.
    Ssm(SsmArgs),
    /// Seeded property checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Suite names, comma separated, or `all`.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
        #[arg(long, value_enum, default_value_t = BackendArg::Both)]
        backend: BackendArg,
        /// Full case counts instead of the quick profile.
        #[arg(long)]
        full: bool,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
    /// Time rotation vs dense scans and sequential vs parallel prefixes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 4096)]
        len: usize,
        /// Prefix-scan length; 0 skips the comparison.
        #[arg(long, default_value_t = 1 << 20)]
        scan_len: usize,
        #[arg(long, default_value_t = 64)]
        scan_dim: usize,
        #[arg(long, default_value_t = 2)]
        threads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Both)]
        format: Format,
    },
}

#[derive(Debug, Args)]
pub struct SequenceArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Tensor with dims `[T, dim]`.
    #[arg(long)]
    pub signal: PathBuf,
    /// Which manifest axis supplies the tied transform.
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    #[arg(long)]
    pub parallel: bool,
    /// Block length for --parallel.
    #[arg(long, default_value_t = 1024)]
    pub chunk: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AttendArgs {
    #[arg(long)]
    pub q: PathBuf,
    #[arg(long)]
    pub k: PathBuf,
    #[arg(long)]
    pub v: PathBuf,
    /// Axis basis; axis 0 is the tied transform unless --coords is given.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Tied rotation with this angle in every block.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "manifest")]
    pub tied_angle: Option<f64>,
    /// Integer coordinates, dims `[T, axes]`; needs --manifest.
    #[arg(long, requires = "manifest")]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub causal: bool,
    /// Score scale; defaults to 1/sqrt(dim).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub alpha_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SsmArgs {
    /// `[T-1, d, d]`.
    #[arg(long, requires_all = ["b", "c", "x"])]
    pub a: Option<PathBuf>,
    /// `[T, d, d_x]`.
    #[arg(long)]
    pub b: Option<PathBuf>,
    /// `[T, d_y, d]`.
    #[arg(long)]
    pub c: Option<PathBuf>,
    /// `[T, d_x]`.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Draw a random system from this seed instead of reading files.
    #[arg(long, conflicts_with = "a")]
    pub random: Option<u64>,
    #[arg(long, default_value_t = 16)]
    pub len: usize,
    #[arg(long, default_value_t = 8)]
    pub state: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConcatArg {
    Strict,
    Permissive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Rotation,
    Dense,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
    Both,
}

/// What a command printed and the exit code it asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, code: 0 }
    }
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Compose {
            manifest,
            elements,
            axis,
            out,
        } => {
            let basis = Manifest::load(&manifest)?.basis()?;
            let items = ElementsFile::load(&elements)?.elements(&basis)?;
            let folded = fold(&items, axis, |a, b| Ok(a.compose_axis(b, axis)?))?;
            emit_elements(&folded, out.as_deref())
        }
        Command::Scan(args) => {
            let s = load_sequence(&args)?;
            let e = if args.parallel {
                let p = prefix_scan_parallel(&s, args.chunk)?;
                p.prefixes.row(s.len() - 1).to_vec()
            } else {
                scan_sequence(&s)?
            };
            emit_tensor(&TensorFile::vector(&e), args.out.as_deref())
        }
        Command::Prefix(args) => {
            let s = load_sequence(&args)?;
            let p = if args.parallel {
                prefix_scan_parallel(&s, args.chunk)?
            } else {
                prefix_scan_sequential(&s)?
            };
            emit_tensor(&TensorFile::from_signal(&p.prefixes), args.out.as_deref())
        }
        Command::Grid {
            manifest,
            signal,
            out,
        } => {
            let basis = Manifest::load(&manifest)?.basis()?;
            let values = load_signal(&signal)?;
            let g = Grid::new(values, basis)?;
            emit_tensor(&TensorFile::vector(&compose_grid(&g)?), out.as_deref())
        }
        Command::Mrep {
            manifest,
            signal,
            window,
            out,
        } => {
            let rotations = Manifest::load(&manifest)?.rotations()?;
            let values = load_signal(&signal)?;
            let cfg = MRepConfig::new(window, rotations)?;
            let rep = if values.rank() == 1 {
                mrep_1d(&values, &cfg)?
            } else {
                mrep_nd(&values, &cfg)?
            };
            emit_tensor(&TensorFile::vector(&rep.v), out.as_deref())
        }
        Command::Align {
            manifest,
            x,
            y,
            axis,
            range,
            scoring,
            all,
        } => {
            let basis = Manifest::load(&manifest)?.basis()?;
            if axis.len() != range.len() {
                return Err(CliError::usage("align: give one --range per --axis"));
            }
            let mut ranges = vec![(0, 0); basis.axes()];
            for (&a, r) in axis.iter().zip(&range) {
                if a >= basis.axes() {
                    return Err(axiscomp_core::Error::AxisOutOfRange {
                        axis: a,
                        axes: basis.axes(),
                    }
                    .into());
                }
                ranges[a] = parse_range(r)?;
            }
            let xv = TensorFile::read(&x)?.data;
            let yv = TensorFile::read(&y)?.data;
            let scoring = match scoring {
                ScoringArg::Dot => Scoring::Dot,
                ScoringArg::Cosine => Scoring::Cosine,
            };
            let res = align_nd_scored(&xv, &yv, &ranges, &basis, scoring)?;
            let mut out = String::new();
            let shift: Vec<String> = axis
                .iter()
                .map(|&a| res.best_shift[a].to_string())
                .collect();
            let _ = writeln!(
                out,
                "align best_shift={} score={:?}",
                shift.join(","),
                res.score
            );
            if all {
                for (s, v) in &res.scores {
                    let s: Vec<String> = axis.iter().map(|&a| s[a].to_string()).collect();
                    let _ = writeln!(out, "candidate shift={} score={v:?}", s.join(","));
                }
            }
            Ok(Outcome::ok(out))
        }
        Command::Concat {
            manifest,
            elements,
            axis,
            mode,
            out,
        } => {
            let basis = Manifest::load(&manifest)?.basis()?;
            let items = ElementsFile::load(&elements)?.elements(&basis)?;
            let mode = match mode {
                ConcatArg::Strict => ConcatMode::Strict,
                ConcatArg::Permissive => ConcatMode::Permissive,
            };
            let joined = fold(&items, axis, |a, b| Ok(concat(a, b, axis, mode)?))?;
            emit_elements(&joined, out.as_deref())
        }
        Command::Attend(args) => attend_cmd(&args),
        Command::Ssm(args) => ssm_cmd(&args),
        Command::Check {
            seed,
            suite,
            backend,
            full,
            format,
        } => {
            let backends = match backend {
                BackendArg::Rotation => vec![Backend::Rotation],
                BackendArg::Dense => vec![Backend::Dense],
                BackendArg::Both => vec![Backend::Rotation, Backend::Dense],
            };
            let profile = if full { Profile::Full } else { Profile::Quick };
            let report = check::run(&suite, seed, &backends, profile).map_err(CliError::Usage)?;
            let stdout = formatted(format, report.text(), report.machine());
            Ok(Outcome {
                stdout,
                code: if report.passed() { 0 } else { 1 },
            })
        }
        Command::Bench {
            sizes,
            repeats,
            len,
            scan_len,
            scan_dim,
            threads,
            seed,
            format,
        } => {
            let report = bench::run(&BenchConfig {
                sizes,
                repeats,
                len,
                scan_len,
                scan_dim,
                threads,
                seed,
            })?;
            Ok(Outcome::ok(formatted(
                format,
                report.text(),
                report.machine(),
            )))
        }
    }
}

fn formatted(format: Format, text: String, machine: String) -> String {
    match format {
        Format::Text => text,
        Format::Machine => machine,
        Format::Both => text + &machine,
    }
}

/// Parses `a..b` or `a..=b`; both bounds are inclusive.
pub fn parse_range(s: &str) -> CliResult<(i64, i64)> {
    let bad = || CliError::usage(format!("range {s:?} is not of the form a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let b = b.strip_prefix('=').unwrap_or(b);
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn fold(
    items: &[Element],
    axis: usize,
    step: impl Fn(&Element, &Element) -> CliResult<Element>,
) -> CliResult<Element> {
    let (first, rest) = items
        .split_first()
        .ok_or_else(|| CliError::usage("no elements given"))?;
    if axis >= first.basis().axes() {
        return Err(axiscomp_core::Error::AxisOutOfRange {
            axis,
            axes: first.basis().axes(),
        }
        .into());
    }
    rest.iter().try_fold(first.clone(), |acc, e| step(&acc, e))
}

fn load_signal(path: &Path) -> CliResult<Signal> {
    TensorFile::read(path)?
        .to_signal()
        .map_err(|e| CliError::format(path, e.to_string()))
}

fn load_sequence(args: &SequenceArgs) -> CliResult<SequenceSignal> {
    let transforms = Manifest::load(&args.manifest)?.transforms()?;
    let t = transforms
        .get(args.axis)
        .cloned()
        .ok_or(axiscomp_core::Error::AxisOutOfRange {
            axis: args.axis,
            axes: transforms.len(),
        })?;
    let values = load_signal(&args.signal)?;
    if values.rank() != 1 {
        return Err(CliError::format(&args.signal, "expected dims [T, dim]"));
    }
    Ok(SequenceSignal::tied(values, t)?)
}

/// Values as text, one position per line, in shortest round-trip form.
pub fn tensor_text(t: &TensorFile) -> String {
    let width = t.dims.last().copied().unwrap_or(1).max(1);
    let mut out = String::new();
    for row in t.data.chunks(width) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

fn emit_tensor(t: &TensorFile, out: Option<&Path>) -> CliResult<Outcome> {
    match out {
        Some(path) => {
            t.write(path)?;
            Ok(Outcome::ok(format!(
                "wrote {} dims {:?}\n",
                path.display(),
                t.dims
            )))
        }
        None => Ok(Outcome::ok(tensor_text(t))),
    }
}

fn emit_elements(e: &Element, out: Option<&Path>) -> CliResult<Outcome> {
    let text = ElementsFile::from_elements(std::slice::from_ref(e)).to_toml();
    match out {
        Some(path) => {
            std::fs::write(path, &text).map_err(|err| CliError::io(path, err))?;
            Ok(Outcome::ok(format!("wrote {}\n", path.display())))
        }
        None => Ok(Outcome::ok(text)),
    }
}

fn attend_cmd(args: &AttendArgs) -> CliResult<Outcome> {
    let q = load_signal(&args.q)?;
    let k = load_signal(&args.k)?;
    let v = load_signal(&args.v)?;
    let mut inputs = AttentionInputs::new(q, k, v)?;
    if let Some(s) = args.scale {
        inputs = inputs.with_scale(s);
    }
    let (n, d) = (inputs.len(), inputs.dim());
    let out = match (&args.manifest, &args.coords) {
        (Some(m), Some(coords)) => {
            let basis = Manifest::load(m)?.basis()?;
            let c = TensorFile::read(coords)?;
            if c.dims.len() != 2 || c.dims[0] != n || c.dims[1] != basis.axes() {
                return Err(CliError::format(
                    coords,
                    format!("expected dims [{n}, {}]", basis.axes()),
                ));
            }
            let mut rows = Vec::with_capacity(n);
            for row in c.data.chunks(basis.axes()) {
                if row.iter().any(|x| x.fract() != 0.0 || x.abs() > 1e15) {
                    return Err(CliError::format(coords, "coordinates must be integers"));
                }
                rows.push(row.iter().map(|&x| x as i64).collect());
            }
            let grid = PositionGrid::new(rows, basis)?;
            attend(&inputs, Positions::Grid(&grid), args.causal)?
        }
        (Some(m), None) => {
            let t = Manifest::load(m)?.transforms()?.swap_remove(0);
            let j = JourneyTransforms::tied(t, n)?;
            attend(&inputs, Positions::Journey(&j), args.causal)?
        }
        (None, _) => {
            if d % 2 != 0 && args.tied_angle.is_some() {
                return Err(axiscomp_core::Error::OddDimension(d).into());
            }
            let t: Transform = match args.tied_angle {
                Some(theta) => BlockRotation::from_angles(vec![theta; d / 2])?.into(),
                None if d % 2 == 0 => BlockRotation::identity(d)?.into(),
                None => DenseTransform::identity(d).into(),
            };
            let j = JourneyTransforms::tied(t, n)?;
            attend(&inputs, Positions::Journey(&j), args.causal)?
        }
    };
    if let Some(path) = &args.alpha_out {
        TensorFile::from_signal(&out.alpha).write(path)?;
    }
    emit_tensor(&TensorFile::from_signal(&out.o), args.out.as_deref())
}

fn matrices(path: &Path, count: usize) -> CliResult<Vec<DMatrix<f64>>> {
    let t = TensorFile::read(path)?;
    if t.dims.len() != 3 || t.dims[0] != count {
        return Err(CliError::format(
            path,
            format!("expected dims [{count}, rows, cols]"),
        ));
    }
    let (r, c) = (t.dims[1], t.dims[2]);
    Ok(t.data
        .chunks(r * c)
        .map(|m| DMatrix::from_row_slice(r, c, m))
        .collect())
}

fn ssm_cmd(args: &SsmArgs) -> CliResult<Outcome> {
    let sys = match (&args.random, &args.a, &args.b, &args.c, &args.x) {
        (Some(seed), ..) => {
            if args.len == 0 || args.state == 0 {
                return Err(CliError::usage("ssm: --len and --state must be positive"));
            }
            attention::random_ssm(&mut sample::rng(*seed), args.len, args.state)
        }
        (None, Some(a), Some(b), Some(c), Some(x)) => {
            let x = load_signal(x)?;
            let t = x.positions();
            SsmSystem::new(matrices(a, t - 1)?, matrices(b, t)?, matrices(c, t)?, x)?
        }
        _ => {
            return Err(CliError::usage(
                "ssm: pass --a --b --c --x, or --random SEED",
            ))
        }
    };
    let y = ssm_scan(&sys)?;
    let residual = match ssm_via_attention(&sys, None) {
        Ok(via) => format!("{:.6e}", via.max_abs_diff(&y)),
        Err(_) => "n/a".to_string(),
    };
    let mut out = emit_tensor(&TensorFile::from_signal(&y), args.out.as_deref())?;
    let _ = writeln!(
        out.stdout,
        "ssm len={} residual_vs_attention={residual}",
        sys.len()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-3..4").unwrap(), (-3, 4));
        assert_eq!(parse_range("2..=2").unwrap(), (2, 2));
        assert!(parse_range("3").is_err());
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn text_uses_round_trip_floats() {
        let t = TensorFile::new(vec![2, 2], vec![0.1, 1e-300, -2.0, 1.0 / 3.0]).unwrap();
        let text = tensor_text(&t);
        let parsed: Vec<f64> = text
            .split_whitespace()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(parsed, t.data);
        assert_eq!(text.lines().count(), 2);
    }
}
