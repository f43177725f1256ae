//! Trial-based evaluation of broadcast schedules: repeated simulated
//! discovery attempts under a time limit, per (schedule, scan mode) cell,
//! with market-share weighted aggregates.

use serde::Serialize;
use thiserror::Error;

use crate::sim::{derive_seed, estimate_cdf, SimError, SimScenario};
use crate::types::{AdvertiserConfig, Micros, ScanCatalog, ScanMode, TypeError, MS};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("schedule must have 1 or 2 blocks, got {0}")]
    BadBlockCount(usize),
    #[error("schedule block duration must be positive")]
    ZeroBlockDuration,
}

/// Single- or dual-interval advertising plan: (interval, block duration)
/// pairs repeated cyclically.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastSchedule {
    pub name: String,
    pub blocks: Vec<(Micros, Micros)>,
}

impl BroadcastSchedule {
    pub fn new(name: impl Into<String>, blocks: Vec<(Micros, Micros)>) -> Result<Self, EvalError> {
        if blocks.is_empty() || blocks.len() > 2 {
            return Err(EvalError::BadBlockCount(blocks.len()));
        }
        if blocks.iter().any(|&(_, d)| d == 0) {
            return Err(EvalError::ZeroBlockDuration);
        }
        Ok(Self {
            name: name.into(),
            blocks,
        })
    }

    pub fn cycle_period(&self) -> Micros {
        self.blocks.iter().map(|&(_, d)| d).sum()
    }

    /// Advertiser configuration realizing this schedule with the given
    /// radio mechanics (delay, PDU, channels).
    pub fn to_advertiser(&self, mechanics: &AdvertiserConfig) -> Result<AdvertiserConfig, EvalError> {
        let period = self.cycle_period();
        let intervals: Vec<Micros> = self.blocks.iter().map(|&(a, _)| a).collect();
        let proportions: Vec<f64> = self
            .blocks
            .iter()
            .map(|&(_, d)| d as f64 / period as f64)
            .collect();
        Ok(AdvertiserConfig::with_mechanics(
            intervals,
            proportions,
            mechanics.adv_delay_max,
            mechanics.pdu_duration,
            mechanics.channels,
            mechanics.inter_channel_gap,
            period,
        )?)
    }
}

/// One (schedule x scan mode) cell. Mean latency is over successful trials
/// only; `None` when nothing was discovered in time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub schedule: String,
    pub scan_mode: String,
    pub success_rate: f64,
    pub mean_latency_s: Option<f64>,
    /// Sample standard deviation of successful-trial latency, seconds.
    pub latency_std_s: Option<f64>,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedRow {
    pub schedule: String,
    pub success_rate: f64,
    pub mean_latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub cells: Vec<CellResult>,
    pub weighted: Vec<WeightedRow>,
    pub limit_s: f64,
    pub n_trials_per_cell: usize,
}

/// Runs `n` independent trials with random entry phase. Success means
/// discovery at or before `limit`.
pub fn run_trials(
    schedule: &BroadcastSchedule,
    mode: &ScanMode,
    mechanics: &AdvertiserConfig,
    limit: Micros,
    n: usize,
    seed: u64,
) -> Result<CellResult, EvalError> {
    let adv = schedule.to_advertiser(mechanics)?;
    // Horizon must exceed the largest interval for the scenario to be
    // valid; trials discovered after the limit still count as failures.
    let horizon = limit.max(adv.max_interval() + 1);
    let scenario = SimScenario::new(*mode, adv, horizon, seed)?;
    let cdf = estimate_cdf(&scenario, n)?;
    let successes: Vec<Micros> = cdf
        .sorted_latencies()
        .iter()
        .copied()
        .take_while(|&l| l <= limit)
        .collect();
    let success_rate = successes.len() as f64 / n as f64;
    let sec = 1000.0 * MS as f64;
    let (mean_latency_s, latency_std_s) = if successes.is_empty() {
        (None, None)
    } else {
        let m = successes.len() as f64;
        let mean: f64 = successes.iter().map(|&l| l as f64).sum::<f64>() / m;
        let std = if successes.len() > 1 {
            let var = successes
                .iter()
                .map(|&l| (l as f64 - mean).powi(2))
                .sum::<f64>()
                / (m - 1.0);
            Some(var.sqrt() / sec)
        } else {
            None
        };
        (Some(mean / sec), std)
    };
    Ok(CellResult {
        schedule: schedule.name.clone(),
        scan_mode: mode.label(),
        success_rate,
        mean_latency_s,
        latency_std_s,
        n_trials: n,
    })
}

/// Full grid of `run_trials` over schedules and catalog modes, with
/// market-share weighted rows per schedule.
pub fn compare_modes(
    schedules: &[BroadcastSchedule],
    catalog: &ScanCatalog,
    mechanics: &AdvertiserConfig,
    limit: Micros,
    n: usize,
    seed: u64,
) -> Result<TrialReport, EvalError> {
    let mut cells = Vec::new();
    let mut weighted = Vec::new();
    for (si, schedule) in schedules.iter().enumerate() {
        let mut w_success = 0.0;
        let mut w_latency = Some(0.0);
        for (mi, mode) in catalog.modes().iter().enumerate() {
            let cell_seed = derive_seed(seed, (si * 1024 + mi) as u64);
            let cell = run_trials(schedule, mode, mechanics, limit, n, cell_seed)?;
            w_success += mode.market_share * cell.success_rate;
            w_latency = match (w_latency, cell.mean_latency_s) {
                (Some(acc), Some(m)) => Some(acc + mode.market_share * m),
                _ => None,
            };
            cells.push(cell);
        }
        weighted.push(WeightedRow {
            schedule: schedule.name.clone(),
            success_rate: w_success,
            mean_latency_s: w_latency,
        });
    }
    Ok(TrialReport {
        cells,
        weighted,
        limit_s: limit as f64 / (1000.0 * MS as f64),
        n_trials_per_cell: n,
    })
}

impl TrialReport {
    /// `schedule,scan_mode,success_rate,mean_latency_s,n` rows; weighted
    /// aggregates use `weighted` as the scan-mode column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schedule,scan_mode,success_rate,mean_latency_s,n\n");
        let fmt_latency = |m: Option<f64>| match m {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.schedule,
                c.scan_mode,
                c.success_rate,
                fmt_latency(c.mean_latency_s),
                c.n_trials
            ));
        }
        for w in &self.weighted {
            out.push_str(&format!(
                "{},weighted,{},{},{}\n",
                w.schedule,
                w.success_rate,
                fmt_latency(w.mean_latency_s),
                self.n_trials_per_cell * self.cells.len() / self.weighted.len().max(1)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::validate_catalog;

    fn mechanics() -> AdvertiserConfig {
        AdvertiserConfig::new(vec![1000 * MS], vec![1.0]).unwrap()
    }

    fn schedule_a() -> BroadcastSchedule {
        BroadcastSchedule::new("A", vec![(4600 * MS, 40_000 * MS)]).unwrap()
    }

    #[test]
    fn schedule_block_count_bounds() {
        assert!(BroadcastSchedule::new("x", vec![]).is_err());
        assert!(BroadcastSchedule::new(
            "x",
            vec![(1000 * MS, MS), (2000 * MS, MS), (3000 * MS, MS)]
        )
        .is_err());
    }

    #[test]
    fn limit_shorter_than_pdu_never_succeeds() {
        let mode = ScanMode::from_ms(4096, 1024, 1.0).unwrap();
        let cell = run_trials(&schedule_a(), &mode, &mechanics(), 100, 200, 1).unwrap();
        assert_eq!(cell.success_rate, 0.0);
        assert_eq!(cell.mean_latency_s, None);
    }

    #[test]
    fn single_cell_report() {
        let catalog = validate_catalog(vec![ScanMode::from_ms(4096, 1024, 1.0).unwrap()]).unwrap();
        let report =
            compare_modes(&[schedule_a()], &catalog, &mechanics(), 40_000 * MS, 200, 5).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.weighted.len(), 1);
        assert_eq!(report.weighted[0].success_rate, report.cells[0].success_rate);
    }

    #[test]
    fn report_is_deterministic() {
        let catalog = validate_catalog(vec![
            ScanMode::from_ms(4096, 1024, 0.5).unwrap(),
            ScanMode::from_ms(5120, 512, 0.5).unwrap(),
        ])
        .unwrap();
        let a = compare_modes(&[schedule_a()], &catalog, &mechanics(), 40_000 * MS, 300, 9).unwrap();
        let b = compare_modes(&[schedule_a()], &catalog, &mechanics(), 40_000 * MS, 300, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn weighted_rows_are_convex_combinations() {
        let catalog = validate_catalog(vec![
            ScanMode::from_ms(4096, 1024, 0.3).unwrap(),
            ScanMode::from_ms(5120, 512, 0.7).unwrap(),
        ])
        .unwrap();
        let report =
            compare_modes(&[schedule_a()], &catalog, &mechanics(), 40_000 * MS, 500, 2).unwrap();
        let expect =
            0.3 * report.cells[0].success_rate + 0.7 * report.cells[1].success_rate;
        assert!((report.weighted[0].success_rate - expect).abs() < 1e-9);
    }

    // Success is determined per trial as latency <= limit, so with the same
    // seed a longer limit can only add successes.
    #[test]
    fn success_rate_monotone_in_limit() {
        let mode = ScanMode::from_ms(5120, 512, 1.0).unwrap();
        let short = run_trials(&schedule_a(), &mode, &mechanics(), 10_000 * MS, 500, 77).unwrap();
        let long = run_trials(&schedule_a(), &mode, &mechanics(), 40_000 * MS, 500, 77).unwrap();
        assert!(long.success_rate >= short.success_rate);
    }
}
