//! Broadcast-interval sweeps: build per-scan-mode (A, L) distributions by
//! running the simulator over an ascending interval grid, superimpose them
//! by market share, and cache series as CSV so the optimizer can rerun
//! without resimulation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::sim::{derive_seed, estimate_cdf, SimError, SimScenario};
use crate::types::{
    AdvertiserConfig, DistributionPoint, DistributionSeries, Micros, ScanMode, TypeError, MS,
    SHARE_SUM_TOL, SUPERIMPOSED_LABEL,
};

/// Default observation horizon for sweep scenarios.
pub const DEFAULT_SWEEP_HORIZON: Micros = 300_000 * MS;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("grid invalid: start {start_us}us, end {end_us}us, step {step_us}us (need start < end and at least 2 steps)")]
    BadGrid {
        start_us: Micros,
        end_us: Micros,
        step_us: Micros,
    },
    #[error("empty distribution: every grid point timed out before the quantile")]
    EmptyDistribution,
    #[error("grid mismatch: input series share no common interval")]
    GridMismatch,
    #[error("share count {shares} does not match series count {series}")]
    ShareCount { shares: usize, series: usize },
    #[error("shares must sum to 1, got {0}")]
    ShareSum(f64),
    #[error("cache io for {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cache parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Ascending broadcast-interval grid with per-point simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub a_start: Micros,
    pub a_end: Micros,
    pub a_step: Micros,
    pub n_runs: usize,
    pub quantile_p: f64,
}

impl SweepGrid {
    pub fn new(
        a_start: Micros,
        a_end: Micros,
        a_step: Micros,
        n_runs: usize,
        quantile_p: f64,
    ) -> Result<Self, SweepError> {
        if a_step == 0 || a_start >= a_end || (a_end - a_start) / a_step < 2 {
            return Err(SweepError::BadGrid {
                start_us: a_start,
                end_us: a_end,
                step_us: a_step,
            });
        }
        if n_runs == 0 {
            return Err(SweepError::Sim(SimError::NoRuns));
        }
        if !(quantile_p > 0.0 && quantile_p < 1.0) {
            return Err(SweepError::Type(TypeError::QuantileOutOfRange(quantile_p)));
        }
        Ok(Self {
            a_start,
            a_end,
            a_step,
            n_runs,
            quantile_p,
        })
    }

    pub fn intervals(&self) -> impl Iterator<Item = Micros> + '_ {
        (self.a_start..=self.a_end).step_by(self.a_step as usize)
    }
}

/// Sweeps the grid for one scan mode: each point is the P-quantile of a
/// fresh single-interval scenario. Points whose quantile is unreachable
/// (timeout-dominated) become gaps and are skipped.
pub fn build_distribution(
    mode: &ScanMode,
    grid: &SweepGrid,
    advertiser_template: &AdvertiserConfig,
    horizon: Micros,
    seed: u64,
) -> Result<DistributionSeries, SweepError> {
    let intervals: Vec<Micros> = grid.intervals().collect();
    let results: Vec<Option<DistributionPoint>> = intervals
        .par_iter()
        .map(|&a| -> Result<Option<DistributionPoint>, SweepError> {
            let adv = advertiser_template.single_interval(a)?;
            // Per-point seed derives from the interval value, so the result
            // is independent of grid ordering and worker count.
            let scenario = SimScenario::new(*mode, adv, horizon, derive_seed(seed, a))?;
            let cdf = estimate_cdf(&scenario, grid.n_runs)?;
            match cdf.quantile(grid.quantile_p) {
                Ok(l) => Ok(Some(DistributionPoint::new(a, l as f64)?)),
                Err(SimError::QuantileUnreachable { .. }) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, _>>()?;
    let points: Vec<DistributionPoint> = results.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(SweepError::EmptyDistribution);
    }
    Ok(DistributionSeries::new(mode.label(), points)?)
}

/// Market-share mixture of per-mode distributions. The output grid is the
/// intersection of the input grids; gaps in any series drop that interval.
pub fn superimpose(
    series: &[DistributionSeries],
    shares: &[f64],
) -> Result<DistributionSeries, SweepError> {
    if shares.len() != series.len() || series.is_empty() {
        return Err(SweepError::ShareCount {
            shares: shares.len(),
            series: series.len(),
        });
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > SHARE_SUM_TOL {
        return Err(SweepError::ShareSum(sum));
    }
    let mut points = Vec::new();
    'outer: for p in series[0].points() {
        let mut latency = shares[0] * p.latency;
        for (s, &w) in series[1..].iter().zip(&shares[1..]) {
            match s.points().iter().find(|q| q.interval == p.interval) {
                Some(q) => latency += w * q.latency,
                None => continue 'outer,
            }
        }
        points.push(DistributionPoint::new(p.interval, latency)?);
    }
    if points.is_empty() {
        return Err(SweepError::GridMismatch);
    }
    Ok(DistributionSeries::new(SUPERIMPOSED_LABEL, points)?)
}

/// Cache file name for a series: `<label>_p<P>_seed<S>.csv`.
pub fn cache_file_name(label: &str, quantile_p: f64, seed: u64) -> String {
    format!("{label}_p{quantile_p}_seed{seed}.csv")
}

/// Writes a series in the `interval_ms,latency_ms` format. Values use
/// shortest round-trip formatting, so reading the file back is lossless.
pub fn write_series_csv(path: &Path, series: &DistributionSeries) -> Result<(), SweepError> {
    let io_err = |source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::from("interval_ms,latency_ms\n");
    for p in series.points() {
        let interval_ms = p.interval as f64 / MS as f64;
        let latency_ms = p.latency / MS as f64;
        out.push_str(&format!("{interval_ms},{latency_ms}\n"));
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(out.as_bytes()).map_err(io_err)
}

pub fn read_series_csv(path: &Path, label: &str) -> Result<DistributionSeries, SweepError> {
    let text = fs::read_to_string(path).map_err(|source| SweepError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: usize, reason: &str| SweepError::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut points = Vec::new();
    for (i, row) in text.lines().enumerate() {
        if i == 0 {
            if row.trim() != "interval_ms,latency_ms" {
                return Err(parse_err(1, "bad header"));
            }
            continue;
        }
        if row.trim().is_empty() {
            continue;
        }
        let (a, l) = row
            .split_once(',')
            .ok_or_else(|| parse_err(i + 1, "expected two fields"))?;
        let interval_ms: f64 = a
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, "bad interval"))?;
        let latency_ms: f64 = l
            .trim()
            .parse()
            .map_err(|_| parse_err(i + 1, "bad latency"))?;
        let interval = (interval_ms * MS as f64).round() as Micros;
        points.push(DistributionPoint::new(interval, latency_ms * MS as f64)?);
    }
    Ok(DistributionSeries::new(label, points)?)
}

/// Returns the cached series when present, otherwise sweeps and writes the
/// cache file.
pub fn load_or_build(
    cache_dir: &Path,
    mode: &ScanMode,
    grid: &SweepGrid,
    advertiser_template: &AdvertiserConfig,
    horizon: Micros,
    seed: u64,
) -> Result<DistributionSeries, SweepError> {
    let path = cache_dir.join(cache_file_name(&mode.label(), grid.quantile_p, seed));
    if path.exists() {
        return read_series_csv(&path, &mode.label());
    }
    let series = build_distribution(mode, grid, advertiser_template, horizon, seed)?;
    write_series_csv(&path, &series)?;
    Ok(series)
}

/// Least-squares line through per-bucket minimum-L/A points. The sweep's
/// sawtooth lies above a straight lower boundary through the origin; the
/// bucket minima track that boundary. Returns (slope, intercept in us).
pub fn fit_lower_envelope(series: &DistributionSeries, n_buckets: usize) -> Option<(f64, f64)> {
    let pts = series.points();
    if pts.len() < 2 || n_buckets == 0 {
        return None;
    }
    let a_lo = pts.first()?.interval as f64;
    let a_hi = pts.last()?.interval as f64;
    let width = (a_hi - a_lo) / n_buckets as f64;
    let mut picks: Vec<&DistributionPoint> = Vec::new();
    for b in 0..n_buckets {
        let lo = a_lo + b as f64 * width;
        let hi = if b + 1 == n_buckets { a_hi } else { lo + width };
        let best = pts
            .iter()
            .filter(|p| (p.interval as f64) >= lo && (p.interval as f64) <= hi)
            .min_by(|x, y| {
                let rx = x.latency / x.interval as f64;
                let ry = y.latency / y.interval as f64;
                rx.partial_cmp(&ry).unwrap()
            });
        if let Some(p) = best {
            picks.push(p);
        }
    }
    if picks.len() < 2 {
        return None;
    }
    let n = picks.len() as f64;
    let sx: f64 = picks.iter().map(|p| p.interval as f64).sum();
    let sy: f64 = picks.iter().map(|p| p.latency).sum();
    let sxx: f64 = picks.iter().map(|p| (p.interval as f64).powi(2)).sum();
    let sxy: f64 = picks.iter().map(|p| p.interval as f64 * p.latency).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Some((slope, intercept))
}
