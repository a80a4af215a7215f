//! Wall-clock timing of the scan kernels.
//!
//! Two tables: per-position cost of a tied scan for the rotation and dense
//! backends over a list of widths (with log-log slopes), and sequential vs
//! blocked-parallel prefix scans on one long sequence.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use axiscomp_core::scan::{
    prefix_scan_parallel, prefix_scan_sequential, scan_sequence, SequenceSignal,
};
use axiscomp_core::{sample, Transform};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    /// Positions per scan in the width sweep.
    pub len: usize,
    /// Length of the prefix-scan comparison; 0 skips it.
    pub scan_len: usize,
    pub scan_dim: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![64, 256, 1024],
            repeats: 5,
            len: 4096,
            scan_len: 1 << 20,
            scan_dim: 64,
            threads: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthRow {
    pub dim: usize,
    /// Median seconds per position.
    pub rotation: f64,
    pub dense: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixRow {
    pub len: usize,
    pub dim: usize,
    pub threads: usize,
    pub chunk: usize,
    pub sequential: f64,
    pub parallel: f64,
    pub max_diff: f64,
}

impl PrefixRow {
    pub fn speedup(&self) -> f64 {
        self.sequential / self.parallel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub repeats: usize,
    pub len: usize,
    pub widths: Vec<WidthRow>,
    pub rotation_exponent: Option<f64>,
    pub dense_exponent: Option<f64>,
    pub prefix: Option<PrefixRow>,
    /// Cores the OS reports; speedups are bounded by this, not by `threads`.
    pub available_cores: usize,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

pub fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn time_median(repeats: usize, mut f: impl FnMut()) -> f64 {
    let mut samples: Vec<f64> = (0..repeats)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(&mut samples)
}

pub fn run(cfg: &BenchConfig) -> CliResult<BenchReport> {
    if cfg.sizes.is_empty() {
        return Err(CliError::usage(
            "bench: --sizes must list at least one width",
        ));
    }
    if let Some(d) = cfg.sizes.iter().find(|&&d| d == 0 || d % 2 != 0) {
        return Err(CliError::usage(format!(
            "bench: widths must be positive and even, got {d}"
        )));
    }
    if cfg.repeats == 0 || cfg.len == 0 || cfg.threads == 0 {
        return Err(CliError::usage(
            "bench: --repeats, --len and --threads must be positive",
        ));
    }
    let mut rng = sample::rng(cfg.seed);
    let mut widths = Vec::with_capacity(cfg.sizes.len());
    for &d in &cfg.sizes {
        let values = sample::signal(&mut rng, vec![cfg.len], d);
        let rot: Transform = sample::rotation(&mut rng, d / 2).into();
        let dense: Transform = sample::orthogonal(&mut rng, d).into();
        let rs = SequenceSignal::tied(values.clone(), rot)?;
        let ds = SequenceSignal::tied(values, dense)?;
        let per = cfg.len as f64;
        let rotation = time_median(cfg.repeats, || {
            black_box(scan_sequence(black_box(&rs)).expect("valid scan"));
        }) / per;
        let dense = time_median(cfg.repeats, || {
            black_box(scan_sequence(black_box(&ds)).expect("valid scan"));
        }) / per;
        widths.push(WidthRow {
            dim: d,
            rotation,
            dense,
        });
    }
    let x: Vec<f64> = widths.iter().map(|w| w.dim as f64).collect();
    let rotation_exponent =
        loglog_slope(&x, &widths.iter().map(|w| w.rotation).collect::<Vec<_>>());
    let dense_exponent = loglog_slope(&x, &widths.iter().map(|w| w.dense).collect::<Vec<_>>());

    let prefix = if cfg.scan_len == 0 {
        None
    } else {
        Some(prefix_bench(cfg, &mut rng)?)
    };
    Ok(BenchReport {
        repeats: cfg.repeats,
        len: cfg.len,
        widths,
        rotation_exponent,
        dense_exponent,
        prefix,
        available_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
    })
}

fn prefix_bench(cfg: &BenchConfig, rng: &mut sample::SeededRng) -> CliResult<PrefixRow> {
    if cfg.scan_dim == 0 || !cfg.scan_dim.is_multiple_of(2) {
        return Err(CliError::usage(
            "bench: --scan-dim must be positive and even",
        ));
    }
    let s = SequenceSignal::tied(
        sample::signal(rng, vec![cfg.scan_len], cfg.scan_dim),
        sample::rotation(rng, cfg.scan_dim / 2),
    )?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::usage(format!("bench: thread pool: {e}")))?;
    let chunk = cfg.scan_len.div_ceil(cfg.threads);
    let mut seq = None;
    let sequential = time_median(cfg.repeats, || {
        seq = Some(prefix_scan_sequential(&s).expect("valid scan"));
    });
    let mut par = None;
    let parallel = pool.install(|| {
        time_median(cfg.repeats, || {
            par = Some(prefix_scan_parallel(&s, chunk).expect("valid scan"));
        })
    });
    let max_diff = seq
        .expect("ran at least once")
        .prefixes
        .max_abs_diff(&par.expect("ran at least once").prefixes);
    Ok(PrefixRow {
        len: cfg.scan_len,
        dim: cfg.scan_dim,
        threads: cfg.threads,
        chunk,
        sequential,
        parallel,
        max_diff,
    })
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or("n/a".into(), |v| format!("{v:.3}"))
}

impl BenchReport {
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "tied scan, {} positions, median of {} runs (ns per position)",
            self.len, self.repeats
        );
        let _ = writeln!(
            out,
            "{:>8} {:>14} {:>14} {:>8}",
            "dim", "rotation", "dense", "ratio"
        );
        for w in &self.widths {
            let _ = writeln!(
                out,
                "{:>8} {:>14.2} {:>14.2} {:>8.1}",
                w.dim,
                w.rotation * 1e9,
                w.dense * 1e9,
                w.dense / w.rotation
            );
        }
        let _ = writeln!(
            out,
            "log-log slope vs dim: rotation {}, dense {}",
            fmt_slope(self.rotation_exponent),
            fmt_slope(self.dense_exponent)
        );
        if let Some(p) = &self.prefix {
            let _ = writeln!(
                out,
                "prefix scan T={} d={}: sequential {:.4}s, blocked parallel {:.4}s on {} threads (chunk {}), speedup {:.2}x, max diff {:.2e}, {} core(s) available",
                p.len,
                p.dim,
                p.sequential,
                p.parallel,
                p.threads,
                p.chunk,
                p.speedup(),
                p.max_diff,
                self.available_cores
            );
        }
        out
    }

    pub fn machine(&self) -> String {
        let mut out = String::new();
        for w in &self.widths {
            for (backend, t) in [("rotation", w.rotation), ("dense", w.dense)] {
                let _ = writeln!(
                    out,
                    "bench kind=scan backend={backend} dim={} len={} repeats={} median_s_per_position={:.6e}",
                    w.dim, self.len, self.repeats, t
                );
            }
        }
        let _ = writeln!(
            out,
            "bench kind=fit rotation_exponent={} dense_exponent={}",
            fmt_slope(self.rotation_exponent),
            fmt_slope(self.dense_exponent)
        );
        if let Some(p) = &self.prefix {
            let _ = writeln!(
                out,
                "bench kind=prefix len={} dim={} threads={} chunk={} cores={} sequential_s={:.6e} parallel_s={:.6e} speedup={:.4} max_diff={:.3e}",
                p.len,
                p.dim,
                p.threads,
                p.chunk,
                self.available_cores,
                p.sequential,
                p.parallel,
                p.speedup(),
                p.max_diff
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[1.0], &[1.0]), None);
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn schema_is_stable_across_repeats() {
        let base = BenchConfig {
            sizes: vec![4, 8],
            repeats: 1,
            len: 32,
            scan_len: 256,
            scan_dim: 4,
            threads: 2,
            seed: 1,
        };
        let a = run(&base).unwrap();
        let b = run(&BenchConfig { repeats: 5, ..base }).unwrap();
        let keys = |r: &BenchReport| {
            r.machine()
                .lines()
                .map(|l| {
                    l.split(' ')
                        .map(|kv| kv.split('=').next().unwrap().to_string())
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(keys(&a), keys(&b));
        assert!(a.prefix.unwrap().max_diff < 1e-9);
    }

    #[test]
    fn empty_sizes_is_usage_error() {
        let cfg = BenchConfig {
            sizes: vec![],
            ..BenchConfig::default()
        };
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    }
}
