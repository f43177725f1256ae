//! Two-broadcast-interval screening: trough extraction from the
//! superimposed distribution, non-increasing pruning, partition at the
//! minimum equivalent interval, max-slope pairing per right point, and
//! min-slope final selection with the proportion that pins the equivalent
//! interval to the constraint boundary.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sweep::{self, SweepError, SweepGrid};
use crate::types::{
    us_to_ms, AdvertiserConfig, ConstraintConfig, DistributionPoint, DistributionSeries, Micros,
    ScanCatalog, MS,
};

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("series has {0} points, need at least 3 for trough extraction")]
    TooFewPoints(usize),
    #[error("no troughs: the series is monotone")]
    NoTroughs,
    #[error("left side empty: no candidate interval below the constraint")]
    LeftEmpty,
    #[error("right side empty: no candidate interval at or above the constraint")]
    RightEmpty,
}

/// A pipeline-stage failure, annotated with the stage that produced it.
#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub source: ScreenError,
}

fn at_stage(stage: &'static str) -> impl Fn(ScreenError) -> PipelineError {
    move |source| PipelineError { stage, source }
}

/// A left/right interval pair with its connecting line, the proportion that
/// holds the equivalent interval at the constraint boundary, and the
/// resulting weighted latency. All durations in microseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub a_left: DistributionPoint,
    pub a_right: DistributionPoint,
    pub slope: f64,
    pub intercept: f64,
    pub delta: f64,
    pub weighted_latency: f64,
}

impl CandidatePair {
    /// Builds the pair for a given constraint boundary. Requires
    /// `a_left.interval < a_min <= a_right.interval`.
    pub fn new(a_left: DistributionPoint, a_right: DistributionPoint, a_min: Micros) -> Self {
        debug_assert!(a_left.interval < a_min && a_min <= a_right.interval);
        // Interval differences are exact integer subtractions; only the
        // division is rounded.
        let da = (a_right.interval - a_left.interval) as f64;
        let slope = (a_right.latency - a_left.latency) / da;
        let intercept = a_right.latency - slope * a_right.interval as f64;
        let delta = (a_right.interval - a_min) as f64 / da;
        let weighted_latency = delta * a_left.latency + (1.0 - delta) * a_right.latency;
        Self {
            a_left,
            a_right,
            slope,
            intercept,
            delta,
            weighted_latency,
        }
    }

    /// Equivalent broadcast interval at the chosen proportion, in us.
    pub fn equivalent_interval(&self) -> f64 {
        self.delta * self.a_left.interval as f64 + (1.0 - self.delta) * self.a_right.interval as f64
    }
}

/// Candidate points split at the constraint: `b_left` strictly below
/// `a_min`, `b_right` at or above it.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedCandidates {
    pub b_left: Vec<DistributionPoint>,
    pub b_right: Vec<DistributionPoint>,
}

/// Strict local minima of the series. A plateau flanked by higher latency
/// counts once, at its rightmost point. Endpoints are never troughs.
pub fn find_troughs(series: &DistributionSeries) -> Result<Vec<DistributionPoint>, ScreenError> {
    let pts = series.points();
    if pts.len() < 3 {
        return Err(ScreenError::TooFewPoints(pts.len()));
    }
    let mut troughs = Vec::new();
    let mut run_start = 0;
    for i in 1..=pts.len() {
        if i < pts.len() && pts[i].latency == pts[run_start].latency {
            continue;
        }
        let run_end = i - 1;
        let below_prev = run_start > 0 && pts[run_start].latency < pts[run_start - 1].latency;
        let below_next = i < pts.len() && pts[run_end].latency < pts[i].latency;
        if below_prev && below_next {
            troughs.push(pts[run_end]);
        }
        run_start = i;
    }
    if troughs.is_empty() {
        return Err(ScreenError::NoTroughs);
    }
    Ok(troughs)
}

/// Right-to-left dominance filter: drops every point whose latency exceeds
/// that of the nearest surviving point to its right. The result is
/// ascending in interval and non-decreasing in latency.
pub fn prune_non_increasing(troughs: &[DistributionPoint]) -> Vec<DistributionPoint> {
    let mut kept: Vec<DistributionPoint> = Vec::new();
    for p in troughs.iter().rev() {
        match kept.last() {
            Some(right) if p.latency > right.latency => {}
            _ => kept.push(*p),
        }
    }
    kept.reverse();
    kept
}

/// Splits candidates at the constraint; a point exactly at `a_min` goes to
/// the right side.
pub fn partition(
    pruned: &[DistributionPoint],
    a_min: Micros,
) -> Result<PartitionedCandidates, ScreenError> {
    let (b_left, b_right): (Vec<_>, Vec<_>) = pruned.iter().partition(|p| p.interval < a_min);
    if b_right.is_empty() {
        return Err(ScreenError::RightEmpty);
    }
    if b_left.is_empty() {
        return Err(ScreenError::LeftEmpty);
    }
    Ok(PartitionedCandidates { b_left, b_right })
}

/// Best left partner for one right point: the pair with the largest slope,
/// ties broken toward the larger left interval. For a right point at or
/// above `a_min`, a larger slope means a lower latency at the constraint
/// boundary.
pub fn best_left_for(
    right: DistributionPoint,
    b_left: &[DistributionPoint],
    a_min: Micros,
) -> CandidatePair {
    assert!(!b_left.is_empty(), "b_left must be nonempty");
    let mut best: Option<CandidatePair> = None;
    for &left in b_left {
        let pair = CandidatePair::new(left, right, a_min);
        // >= prefers the later (larger) left interval on exact slope ties.
        let better = match &best {
            None => true,
            Some(b) => pair.slope >= b.slope,
        };
        if better {
            best = Some(pair);
        }
    }
    best.expect("b_left nonempty")
}

/// One best pair per right point, in ascending right-interval order.
pub fn local_optimum_pairs(parts: &PartitionedCandidates, a_min: Micros) -> Vec<CandidatePair> {
    parts
        .b_right
        .iter()
        .map(|&r| best_left_for(r, &parts.b_left, a_min))
        .collect()
}

/// Final selection: among the per-right-point best pairs, the one whose
/// line has the smallest slope; ties broken toward smaller weighted
/// latency, then smaller right interval.
pub fn select_optimal_pair(
    parts: &PartitionedCandidates,
    a_min: Micros,
) -> Result<CandidatePair, ScreenError> {
    let pairs = local_optimum_pairs(parts, a_min);
    let mut best: Option<CandidatePair> = None;
    for pair in pairs {
        let better = match &best {
            None => true,
            Some(b) => {
                pair.slope < b.slope
                    || (pair.slope == b.slope
                        && (pair.weighted_latency < b.weighted_latency
                            || (pair.weighted_latency == b.weighted_latency
                                && pair.a_right.interval < b.a_right.interval)))
            }
        };
        if better {
            best = Some(pair);
        }
    }
    best.ok_or(ScreenError::RightEmpty)
}

/// Weighted average discovery latency of a dual-interval broadcast under
/// two scan modes: the left interval holds time share `c`, the modes hold
/// market shares `w1` and `w2`.
#[allow(clippy::too_many_arguments)]
pub fn weighted_latency(
    l1_left: f64,
    l2_left: f64,
    l1_right: f64,
    l2_right: f64,
    w1: f64,
    w2: f64,
    c: f64,
) -> f64 {
    c * (w1 * l1_left + w2 * l2_left) + (1.0 - c) * (w1 * l1_right + w2 * l2_right)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PointSummary {
    pub interval_ms: f64,
    pub latency_ms: f64,
}

impl From<DistributionPoint> for PointSummary {
    fn from(p: DistributionPoint) -> Self {
        Self {
            interval_ms: us_to_ms(p.interval),
            latency_ms: p.latency / MS as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairSummary {
    pub a_left_ms: f64,
    pub a_right_ms: f64,
    pub delta: f64,
    pub weighted_latency_ms: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Block-schedule rendering of delta over a 40 s period.
    pub schedule: String,
}

/// Seconds per block when delta is rendered over a 40 s alternation period.
pub fn block_schedule_seconds(delta: f64) -> (u64, u64) {
    let left = (delta * 40.0).round() as u64;
    (left, 40 - left)
}

impl From<&CandidatePair> for PairSummary {
    fn from(p: &CandidatePair) -> Self {
        let (left_s, right_s) = block_schedule_seconds(p.delta);
        let a_left_ms = us_to_ms(p.a_left.interval);
        let a_right_ms = us_to_ms(p.a_right.interval);
        Self {
            a_left_ms,
            a_right_ms,
            delta: p.delta,
            weighted_latency_ms: p.weighted_latency / MS as f64,
            slope: p.slope,
            intercept: p.intercept / MS as f64,
            schedule: format!("{a_left_ms}ms for {left_s}s / {a_right_ms}ms for {right_s}s"),
        }
    }
}

/// A known pair to print next to the computed one, e.g. a previously
/// published or fielded configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReferencePair {
    pub a_left_ms: f64,
    pub a_right_ms: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageArtifacts {
    pub series: Vec<String>,
    pub troughs: Vec<PointSummary>,
    pub pruned: Vec<PointSummary>,
    pub local_optimum_pairs: Vec<PairSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub scan_modes: Vec<ScanModeEcho>,
    pub a_min_ms: f64,
    pub quantile_p: f64,
    pub a_start_ms: f64,
    pub a_end_ms: f64,
    pub a_step_ms: f64,
    pub n_runs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanModeEcho {
    pub t_ms: f64,
    pub w_ms: f64,
    pub share: f64,
}

/// Full pipeline output with per-stage provenance for audit.
#[derive(Debug, Clone, Serialize)]
pub struct CpbisReport {
    pub config_echo: ConfigEcho,
    pub optimal_pair: Option<PairSummary>,
    /// Single-interval alternative when a pruned candidate sits exactly at
    /// the constraint.
    pub single_interval_at_constraint: Option<PointSummary>,
    /// Best single interval at or above the constraint, emitted when no
    /// left-side candidate exists.
    pub single_fallback: Option<PointSummary>,
    pub warning: Option<String>,
    pub reference_pair: Option<ReferencePair>,
    pub stages: StageArtifacts,
}

/// Runs the full pipeline: per-mode sweeps, superimposition, trough
/// extraction, pruning, partition and final selection.
#[allow(clippy::too_many_arguments)]
pub fn run_cpbis(
    catalog: &ScanCatalog,
    grid: &SweepGrid,
    advertiser_template: &AdvertiserConfig,
    horizon: Micros,
    constraint: &ConstraintConfig,
    seed: u64,
    cache_dir: Option<&Path>,
    reference_pair: Option<ReferencePair>,
) -> Result<CpbisReport, PipelineError> {
    let mut series = Vec::new();
    for mode in catalog.modes() {
        let s = match cache_dir {
            Some(dir) => sweep::load_or_build(dir, mode, grid, advertiser_template, horizon, seed),
            None => sweep::build_distribution(mode, grid, advertiser_template, horizon, seed),
        }
        .map_err(|e| at_stage("sweep")(e.into()))?;
        series.push(s);
    }
    let mixed = sweep::superimpose(&series, &catalog.shares())
        .map_err(|e| at_stage("superimpose")(e.into()))?;

    let troughs = find_troughs(&mixed).map_err(at_stage("troughs"))?;
    let pruned = prune_non_increasing(&troughs);

    let a_min = constraint.a_min;
    let single_interval_at_constraint = pruned
        .iter()
        .find(|p| p.interval == a_min)
        .map(|&p| PointSummary::from(p));

    let config_echo = ConfigEcho {
        scan_modes: catalog
            .modes()
            .iter()
            .map(|m| ScanModeEcho {
                t_ms: us_to_ms(m.scan_interval),
                w_ms: us_to_ms(m.scan_window),
                share: m.market_share,
            })
            .collect(),
        a_min_ms: us_to_ms(a_min),
        quantile_p: constraint.quantile_p,
        a_start_ms: us_to_ms(grid.a_start),
        a_end_ms: us_to_ms(grid.a_end),
        a_step_ms: us_to_ms(grid.a_step),
        n_runs: grid.n_runs,
        seed,
    };
    let stage_points = |pts: &[DistributionPoint]| pts.iter().map(|&p| p.into()).collect();

    match partition(&pruned, a_min) {
        Ok(parts) => {
            let pairs = local_optimum_pairs(&parts, a_min);
            let best = select_optimal_pair(&parts, a_min).map_err(at_stage("select"))?;
            Ok(CpbisReport {
                config_echo,
                optimal_pair: Some(PairSummary::from(&best)),
                single_interval_at_constraint,
                single_fallback: None,
                warning: None,
                reference_pair,
                stages: StageArtifacts {
                    series: series.iter().map(|s| s.label.clone()).collect(),
                    troughs: stage_points(&troughs),
                    pruned: stage_points(&pruned),
                    local_optimum_pairs: pairs.iter().map(PairSummary::from).collect(),
                },
            })
        }
        Err(ScreenError::LeftEmpty) => {
            // No candidate below the constraint: fall back to the lowest
            // latency single interval that satisfies it.
            let fallback = pruned
                .iter()
                .filter(|p| p.interval >= a_min)
                .min_by(|a, b| a.latency.partial_cmp(&b.latency).unwrap())
                .copied()
                .expect("right side nonempty when LeftEmpty");
            Ok(CpbisReport {
                config_echo,
                optimal_pair: None,
                single_interval_at_constraint,
                single_fallback: Some(fallback.into()),
                warning: Some(
                    "no candidate interval below the constraint; reporting the best single interval instead"
                        .to_string(),
                ),
                reference_pair,
                stages: StageArtifacts {
                    series: series.iter().map(|s| s.label.clone()).collect(),
                    troughs: stage_points(&troughs),
                    pruned: stage_points(&pruned),
                    local_optimum_pairs: Vec::new(),
                },
            })
        }
        Err(e) => Err(at_stage("partition")(e)),
    }
}
