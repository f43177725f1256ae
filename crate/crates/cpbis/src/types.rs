//! Shared domain vocabulary: scanner/advertiser configurations, latency
//! distribution points and series, and the power constraint.
//!
//! All time arithmetic inside the crate is integer microseconds. Config
//! surfaces take milliseconds and convert exactly on construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Duration in integer microseconds.
pub type Micros = u64;

/// Microseconds per millisecond.
pub const MS: Micros = 1_000;

/// Tolerance for fraction sums (market shares, block proportions).
pub const SHARE_SUM_TOL: f64 = 1e-9;

pub fn us_to_ms(us: Micros) -> f64 {
    us as f64 / MS as f64
}

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("duration must be positive: {0}")]
    NonPositiveDuration(&'static str),
    #[error("scan window exceeds interval: W={w_us}us > T={t_us}us")]
    WindowExceedsInterval { t_us: Micros, w_us: Micros },
    #[error("market share out of range: {0}")]
    ShareOutOfRange(f64),
    #[error("market shares must sum to 1, got {0}")]
    ShareSum(f64),
    #[error("scan-mode catalog is empty")]
    EmptyCatalog,
    #[error("advertiser intervals list is empty")]
    EmptyIntervals,
    #[error("proportions length {got} does not match interval count {want}")]
    ProportionLength { got: usize, want: usize },
    #[error("proportions must sum to 1, got {0}")]
    ProportionSum(f64),
    #[error("proportion out of range: {0}")]
    ProportionOutOfRange(f64),
    #[error("interval {interval_us}us shorter than PDU duration {pdu_us}us")]
    IntervalShorterThanPdu { interval_us: Micros, pdu_us: Micros },
    #[error("channel count must be 1..=3, got {0}")]
    BadChannelCount(u32),
    #[error("quantile probability must be in (0,1), got {0}")]
    QuantileOutOfRange(f64),
    #[error("distribution point must have positive interval and latency")]
    NonPositivePoint,
    #[error("series intervals must be strictly ascending (at index {0})")]
    NonAscendingSeries(usize),
}

/// Scanner duty cycle (T, W) with its market share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMode {
    pub scan_interval: Micros,
    pub scan_window: Micros,
    pub market_share: f64,
}

impl ScanMode {
    pub fn new(scan_interval: Micros, scan_window: Micros, market_share: f64) -> Result<Self, TypeError> {
        if scan_interval == 0 {
            return Err(TypeError::NonPositiveDuration("scan_interval"));
        }
        if scan_window == 0 {
            return Err(TypeError::NonPositiveDuration("scan_window"));
        }
        if scan_window > scan_interval {
            return Err(TypeError::WindowExceedsInterval {
                t_us: scan_interval,
                w_us: scan_window,
            });
        }
        if !(0.0..=1.0).contains(&market_share) {
            return Err(TypeError::ShareOutOfRange(market_share));
        }
        Ok(Self {
            scan_interval,
            scan_window,
            market_share,
        })
    }

    pub fn from_ms(t_ms: Micros, w_ms: Micros, share: f64) -> Result<Self, TypeError> {
        Self::new(t_ms * MS, w_ms * MS, share)
    }

    /// Stable identifier used for series labels and cache file names.
    pub fn label(&self) -> String {
        format!("t{}_w{}", self.scan_interval / MS, self.scan_window / MS)
    }
}

/// Validated, share-normalized set of scanner configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanCatalog {
    modes: Vec<ScanMode>,
}

impl ScanCatalog {
    pub fn modes(&self) -> &[ScanMode] {
        &self.modes
    }

    pub fn shares(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.market_share).collect()
    }
}

impl std::ops::Deref for ScanCatalog {
    type Target = [ScanMode];
    fn deref(&self) -> &[ScanMode] {
        &self.modes
    }
}

/// Checks every per-mode invariant plus the catalog-wide share sum.
/// Shares are never renormalized; a bad sum is an error.
pub fn validate_catalog(modes: Vec<ScanMode>) -> Result<ScanCatalog, TypeError> {
    if modes.is_empty() {
        return Err(TypeError::EmptyCatalog);
    }
    for m in &modes {
        // Re-run the constructor checks so catalogs built from raw structs
        // (e.g. deserialized) are covered too.
        ScanMode::new(m.scan_interval, m.scan_window, m.market_share)?;
    }
    let sum: f64 = modes.iter().map(|m| m.market_share).sum();
    if (sum - 1.0).abs() > SHARE_SUM_TOL {
        return Err(TypeError::ShareSum(sum));
    }
    Ok(ScanCatalog { modes })
}

/// Advertiser-side parameters: one or two broadcast intervals with their
/// time-block proportions, plus PDU and channel mechanics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertiserConfig {
    pub intervals: Vec<Micros>,
    pub proportions: Vec<f64>,
    /// Random per-event delay bound, uniform on [0, adv_delay_max].
    pub adv_delay_max: Micros,
    pub pdu_duration: Micros,
    pub channels: u32,
    /// Gap between back-to-back per-channel PDUs within one event.
    pub inter_channel_gap: Micros,
    /// Cycle period over which dual-interval block alternation repeats.
    pub block_period: Micros,
}

pub const DEFAULT_ADV_DELAY_MAX: Micros = 10 * MS;
pub const DEFAULT_PDU_DURATION: Micros = 376;
pub const DEFAULT_INTER_CHANNEL_GAP: Micros = 400;
pub const DEFAULT_BLOCK_PERIOD: Micros = 40_000 * MS;

impl AdvertiserConfig {
    pub fn new(intervals: Vec<Micros>, proportions: Vec<f64>) -> Result<Self, TypeError> {
        Self::with_mechanics(
            intervals,
            proportions,
            DEFAULT_ADV_DELAY_MAX,
            DEFAULT_PDU_DURATION,
            3,
            DEFAULT_INTER_CHANNEL_GAP,
            DEFAULT_BLOCK_PERIOD,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_mechanics(
        intervals: Vec<Micros>,
        proportions: Vec<f64>,
        adv_delay_max: Micros,
        pdu_duration: Micros,
        channels: u32,
        inter_channel_gap: Micros,
        block_period: Micros,
    ) -> Result<Self, TypeError> {
        if intervals.is_empty() {
            return Err(TypeError::EmptyIntervals);
        }
        if proportions.len() != intervals.len() {
            return Err(TypeError::ProportionLength {
                got: proportions.len(),
                want: intervals.len(),
            });
        }
        for &p in &proportions {
            if !(0.0..=1.0).contains(&p) {
                return Err(TypeError::ProportionOutOfRange(p));
            }
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOL {
            return Err(TypeError::ProportionSum(sum));
        }
        if pdu_duration == 0 {
            return Err(TypeError::NonPositiveDuration("pdu_duration"));
        }
        for &a in &intervals {
            if a < pdu_duration {
                return Err(TypeError::IntervalShorterThanPdu {
                    interval_us: a,
                    pdu_us: pdu_duration,
                });
            }
        }
        if !(1..=3).contains(&channels) {
            return Err(TypeError::BadChannelCount(channels));
        }
        if block_period == 0 {
            return Err(TypeError::NonPositiveDuration("block_period"));
        }
        Ok(Self {
            intervals,
            proportions,
            adv_delay_max,
            pdu_duration,
            channels,
            inter_channel_gap,
            block_period,
        })
    }

    pub fn max_interval(&self) -> Micros {
        *self.intervals.iter().max().expect("intervals nonempty")
    }

    /// Same mechanics with a single broadcast interval.
    pub fn single_interval(&self, interval: Micros) -> Result<Self, TypeError> {
        Self::with_mechanics(
            vec![interval],
            vec![1.0],
            self.adv_delay_max,
            self.pdu_duration,
            self.channels,
            self.inter_channel_gap,
            self.block_period,
        )
    }

    /// Time blocks (interval, block length) the simulator alternates over.
    /// Proportions are applied to `block_period`; zero-length blocks are
    /// dropped.
    pub fn blocks(&self) -> Vec<(Micros, Micros)> {
        self.intervals
            .iter()
            .zip(&self.proportions)
            .map(|(&a, &p)| (a, (p * self.block_period as f64).round() as Micros))
            .filter(|&(_, len)| len > 0)
            .collect()
    }
}

/// Power constraint: minimum equivalent broadcast interval, plus the CDF
/// probability used to read off worst-case latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    pub a_min: Micros,
    pub quantile_p: f64,
}

impl ConstraintConfig {
    pub fn new(a_min: Micros, quantile_p: f64) -> Result<Self, TypeError> {
        if a_min == 0 {
            return Err(TypeError::NonPositiveDuration("a_min"));
        }
        if !(quantile_p > 0.0 && quantile_p < 1.0) {
            return Err(TypeError::QuantileOutOfRange(quantile_p));
        }
        Ok(Self { a_min, quantile_p })
    }
}

/// One (broadcast interval, worst-case latency) sample of a distribution.
/// Latency is kept as fractional microseconds so superimposed mixtures stay
/// exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionPoint {
    pub interval: Micros,
    pub latency: f64,
}

impl DistributionPoint {
    pub fn new(interval: Micros, latency: f64) -> Result<Self, TypeError> {
        if interval == 0 || !(latency > 0.0) {
            return Err(TypeError::NonPositivePoint);
        }
        Ok(Self { interval, latency })
    }
}

/// Ordered (A, L) sequence for one scan mode or the superimposed mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSeries {
    pub label: String,
    points: Vec<DistributionPoint>,
}

pub const SUPERIMPOSED_LABEL: &str = "superimposed";

impl DistributionSeries {
    pub fn new(label: impl Into<String>, points: Vec<DistributionPoint>) -> Result<Self, TypeError> {
        for (i, w) in points.windows(2).enumerate() {
            if w[1].interval <= w[0].interval {
                return Err(TypeError::NonAscendingSeries(i + 1));
            }
        }
        Ok(Self {
            label: label.into(),
            points,
        })
    }

    pub fn points(&self) -> &[DistributionPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
