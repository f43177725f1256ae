//! TOML run configuration: scan-mode catalog, sweep grid, power
//! constraint, advertiser mechanics, seeds and evaluation schedules.
//!
//! Durations are milliseconds except PDU/gap (microseconds) and schedule
//! block durations (seconds).

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::eval::{BroadcastSchedule, EvalError};
use crate::screen::ReferencePair;
use crate::sweep::{SweepError, SweepGrid, DEFAULT_SWEEP_HORIZON};
use crate::types::{
    validate_catalog, AdvertiserConfig, ConstraintConfig, Micros, ScanCatalog, ScanMode,
    TypeError, DEFAULT_ADV_DELAY_MAX, DEFAULT_INTER_CHANNEL_GAP, DEFAULT_PDU_DURATION, MS,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scan_modes: Vec<RawScanMode>,
    grid: RawGrid,
    constraint: RawConstraint,
    #[serde(default)]
    advertiser: RawAdvertiser,
    #[serde(default)]
    sim: RawSim,
    reference: Option<ReferencePair>,
    #[serde(default)]
    schedules: Vec<RawSchedule>,
    #[serde(default)]
    evaluate: RawEvaluate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScanMode {
    t_ms: u64,
    w_ms: u64,
    share: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    a_start_ms: u64,
    a_end_ms: u64,
    a_step_ms: u64,
    n_runs: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraint {
    a_min_ms: u64,
    quantile_p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAdvertiser {
    adv_delay_max_ms: u64,
    pdu_duration_us: u64,
    channels: u32,
    inter_channel_gap_us: u64,
}

impl Default for RawAdvertiser {
    fn default() -> Self {
        Self {
            adv_delay_max_ms: DEFAULT_ADV_DELAY_MAX / MS,
            pdu_duration_us: DEFAULT_PDU_DURATION,
            channels: 3,
            inter_channel_gap_us: DEFAULT_INTER_CHANNEL_GAP,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSim {
    horizon_ms: u64,
    seed: u64,
}

impl Default for RawSim {
    fn default() -> Self {
        Self {
            horizon_ms: DEFAULT_SWEEP_HORIZON / MS,
            seed: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    name: String,
    /// [interval_ms, duration_s] pairs.
    blocks: Vec<[u64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawEvaluate {
    limit_s: u64,
    n_trials: usize,
}

impl Default for RawEvaluate {
    fn default() -> Self {
        Self {
            limit_s: 40,
            n_trials: 1000,
        }
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub catalog: ScanCatalog,
    pub grid: SweepGrid,
    pub constraint: ConstraintConfig,
    /// Mechanics template; sweeps replace its interval per grid point.
    pub advertiser: AdvertiserConfig,
    pub horizon: Micros,
    pub seed: u64,
    pub reference: Option<ReferencePair>,
    pub schedules: Vec<BroadcastSchedule>,
    pub limit: Micros,
    pub n_trials: usize,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let modes = raw
        .scan_modes
        .iter()
        .map(|m| ScanMode::from_ms(m.t_ms, m.w_ms, m.share))
        .collect::<Result<Vec<_>, _>>()?;
    let catalog = validate_catalog(modes)?;
    let constraint = ConstraintConfig::new(raw.constraint.a_min_ms * MS, raw.constraint.quantile_p)?;
    let grid = SweepGrid::new(
        raw.grid.a_start_ms * MS,
        raw.grid.a_end_ms * MS,
        raw.grid.a_step_ms * MS,
        raw.grid.n_runs,
        constraint.quantile_p,
    )?;
    let advertiser = AdvertiserConfig::with_mechanics(
        vec![grid.a_end],
        vec![1.0],
        raw.advertiser.adv_delay_max_ms * MS,
        raw.advertiser.pdu_duration_us,
        raw.advertiser.channels,
        raw.advertiser.inter_channel_gap_us,
        crate::types::DEFAULT_BLOCK_PERIOD,
    )?;
    let schedules = raw
        .schedules
        .iter()
        .map(|s| {
            BroadcastSchedule::new(
                s.name.clone(),
                s.blocks
                    .iter()
                    .map(|&[interval_ms, duration_s]| (interval_ms * MS, duration_s * 1000 * MS))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunConfig {
        catalog,
        grid,
        constraint,
        advertiser,
        horizon: raw.sim.horizon_ms * MS,
        seed: raw.sim.seed,
        reference: raw.reference,
        schedules,
        limit: raw.evaluate.limit_s * 1000 * MS,
        n_trials: raw.evaluate.n_trials,
    })
}
