//! Discrete-event simulation of one BLE neighbor-discovery process.
//!
//! An advertiser emits advertising events spaced by its broadcast interval
//! plus a random advDelay; each event carries one PDU per enabled channel
//! back to back. A scanner listens for a window W on one channel at the
//! start of every interval T, advancing the channel each interval.
//! Discovery happens when a PDU is fully contained in listening time on its
//! own channel. Latency is measured from scanner entry to the end of that
//! PDU.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::types::{AdvertiserConfig, Micros, ScanMode, TypeError};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("horizon {horizon_us}us must exceed the largest broadcast interval {max_interval_us}us")]
    HorizonTooShort {
        horizon_us: Micros,
        max_interval_us: Micros,
    },
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("quantile probability must be in (0,1), got {0}")]
    BadQuantile(f64),
    #[error("quantile unreachable: need rank {needed} but only {available} of {total} runs discovered")]
    QuantileUnreachable {
        needed: usize,
        available: usize,
        total: usize,
    },
}

/// One simulation setup: scanner entry with random phase against a fixed
/// advertiser plan, observed up to `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub scan_mode: ScanMode,
    pub advertiser: AdvertiserConfig,
    pub horizon: Micros,
    pub rng_seed: u64,
}

impl SimScenario {
    pub fn new(
        scan_mode: ScanMode,
        advertiser: AdvertiserConfig,
        horizon: Micros,
        rng_seed: u64,
    ) -> Result<Self, SimError> {
        let max_interval = advertiser.max_interval();
        if horizon <= max_interval {
            return Err(SimError::HorizonTooShort {
                horizon_us: horizon,
                max_interval_us: max_interval,
            });
        }
        Ok(Self {
            scan_mode,
            advertiser,
            horizon,
            rng_seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Discovered(Micros),
    Timeout,
}

/// SplitMix64 finalizer; used to derive independent per-run sub-seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Position-deterministic sub-seed: depends only on (seed, index), so
/// parallel and serial execution agree.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index)))
}

fn interval_at(blocks: &[(Micros, Micros)], pos: Micros) -> Micros {
    let mut acc = 0;
    for &(interval, len) in blocks {
        acc += len;
        if pos < acc {
            return interval;
        }
    }
    blocks.last().expect("blocks nonempty").0
}

/// True when [start, end] is fully covered by scan windows on channel `ch`.
/// Windows start at k*t - offset, last w, and listen on channel k mod
/// `channels`. Adjacent same-channel windows merge, so continuous scanning
/// (W = T, one channel) covers everything.
fn covered(
    start: i64,
    end: i64,
    ch: i64,
    t: i64,
    w: i64,
    channels: i64,
    offset: i64,
) -> bool {
    let k_lo = (start + offset - w).div_euclid(t);
    let k_hi = (end + offset).div_euclid(t);
    let mut reached = start;
    for k in k_lo..=k_hi {
        if k.rem_euclid(channels) != ch {
            continue;
        }
        let ws = k * t - offset;
        let we = ws + w;
        if ws <= reached && we > reached {
            reached = we;
        }
        if reached >= end {
            return true;
        }
    }
    reached >= end
}

/// Simulates one discovery attempt. Pure function of (scenario, sub_seed).
pub fn simulate_one(scenario: &SimScenario, sub_seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
    let t = scenario.scan_mode.scan_interval as i64;
    let w = scenario.scan_mode.scan_window as i64;
    let adv = &scenario.advertiser;
    let channels = adv.channels as i64;
    let pdu = adv.pdu_duration as i64;
    let gap = adv.inter_channel_gap as i64;
    let horizon = scenario.horizon as i64;

    // Scanner entry at time 0 with uniform phase against the scan cycle
    // (interval plus channel rotation).
    let scan_offset = rng.gen_range(0..t * channels);

    // Advertiser phase: uniform position within its block schedule and a
    // uniform fraction of the current interval until the first event.
    let blocks = adv.blocks();
    let cycle: Micros = blocks.iter().map(|&(_, len)| len).sum();
    let sched_phase = rng.gen_range(0..cycle);
    let first_interval = interval_at(&blocks, sched_phase);
    let mut event_time = rng.gen_range(0..first_interval) as i64;
    let mut sched_pos = (sched_phase + event_time as Micros) % cycle;

    loop {
        if event_time > horizon {
            return Outcome::Timeout;
        }
        for c in 0..channels {
            let s = event_time + c * (pdu + gap);
            let e = s + pdu;
            if covered(s, e, c, t, w, channels, scan_offset) {
                if e <= horizon {
                    return Outcome::Discovered(e as Micros);
                }
                return Outcome::Timeout;
            }
        }
        let delay = if adv.adv_delay_max > 0 {
            rng.gen_range(0..=adv.adv_delay_max)
        } else {
            0
        };
        let step = interval_at(&blocks, sched_pos) + delay;
        event_time += step as i64;
        sched_pos = (sched_pos + step) % cycle;
    }
}

/// Empirical discovery-latency distribution. Timeouts are counted but
/// excluded from the sorted sample list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyCdf {
    sorted_latencies: Vec<Micros>,
    timeouts: usize,
    total: usize,
}

impl LatencyCdf {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = Outcome>) -> Self {
        let mut sorted = Vec::new();
        let mut timeouts = 0;
        for o in outcomes {
            match o {
                Outcome::Discovered(l) => sorted.push(l),
                Outcome::Timeout => timeouts += 1,
            }
        }
        sorted.sort_unstable();
        let total = sorted.len() + timeouts;
        Self {
            sorted_latencies: sorted,
            timeouts,
            total,
        }
    }

    pub fn sorted_latencies(&self) -> &[Micros] {
        &self.sorted_latencies
    }

    pub fn timeouts(&self) -> usize {
        self.timeouts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Empirical CDF value at latency `l`, with timeouts in the denominator.
    pub fn value_at(&self, l: Micros) -> f64 {
        let n = self.sorted_latencies.partition_point(|&x| x <= l);
        n as f64 / self.total as f64
    }

    /// Lower empirical quantile: the smallest latency with CDF >= p.
    pub fn quantile(&self, p: f64) -> Result<Micros, SimError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(SimError::BadQuantile(p));
        }
        // Smallest rank k with k/total >= p; snap near-integer products so
        // p = 0.9 with total = 10000 yields rank 9000, not 9001.
        let x = p * self.total as f64;
        let needed = if (x - x.round()).abs() < 1e-9 {
            x.round() as usize
        } else {
            x.ceil() as usize
        }
        .max(1);
        if needed > self.sorted_latencies.len() {
            return Err(SimError::QuantileUnreachable {
                needed,
                available: self.sorted_latencies.len(),
                total: self.total,
            });
        }
        Ok(self.sorted_latencies[needed - 1])
    }
}

/// Runs `n_runs` independent discovery attempts with position-derived
/// sub-seeds. Parallel and serial execution yield the same CDF.
pub fn estimate_cdf(scenario: &SimScenario, n_runs: usize) -> Result<LatencyCdf, SimError> {
    if n_runs == 0 {
        return Err(SimError::NoRuns);
    }
    let outcomes: Vec<Outcome> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| simulate_one(scenario, derive_seed(scenario.rng_seed, i)))
        .collect();
    Ok(LatencyCdf::from_outcomes(outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AdvertiserConfig, ScanMode, MS};

    fn continuous_scan_scenario(a_ms: Micros, seed: u64) -> SimScenario {
        let mode = ScanMode::from_ms(1000, 1000, 1.0).unwrap();
        let adv = AdvertiserConfig::with_mechanics(
            vec![a_ms * MS],
            vec![1.0],
            0,
            376,
            1,
            400,
            40_000 * MS,
        )
        .unwrap();
        SimScenario::new(mode, adv, 300_000 * MS, seed).unwrap()
    }

    #[test]
    fn continuous_scan_bounds_latency_by_one_interval() {
        let scenario = continuous_scan_scenario(100, 7);
        for i in 0..5_000 {
            match simulate_one(&scenario, derive_seed(scenario.rng_seed, i)) {
                Outcome::Discovered(l) => assert!(l <= 100 * MS + 376, "latency {l}us"),
                Outcome::Timeout => panic!("continuous scan must always discover"),
            }
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let mode = ScanMode::from_ms(5120, 512, 1.0).unwrap();
        let adv = AdvertiserConfig::new(vec![4600 * MS], vec![1.0]).unwrap();
        let scenario = SimScenario::new(mode, adv, 300_000 * MS, 99).unwrap();
        let a = simulate_one(&scenario, 12345);
        let b = simulate_one(&scenario, 12345);
        assert_eq!(a, b);
    }

    #[test]
    fn estimate_cdf_is_reproducible() {
        let mode = ScanMode::from_ms(4096, 1024, 1.0).unwrap();
        let adv = AdvertiserConfig::new(vec![2000 * MS], vec![1.0]).unwrap();
        let scenario = SimScenario::new(mode, adv, 120_000 * MS, 4242).unwrap();
        let a = estimate_cdf(&scenario, 2_000).unwrap();
        let b = estimate_cdf(&scenario, 2_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_run_gives_single_step_cdf() {
        let scenario = continuous_scan_scenario(100, 3);
        let cdf = estimate_cdf(&scenario, 1).unwrap();
        assert_eq!(cdf.total(), 1);
        assert_eq!(cdf.sorted_latencies().len() + cdf.timeouts(), 1);
    }

    #[test]
    fn cdf_value_is_monotone_and_bounded() {
        let scenario = continuous_scan_scenario(100, 11);
        let cdf = estimate_cdf(&scenario, 500).unwrap();
        let mut prev = 0.0;
        for l in (0..110).map(|ms| ms * MS) {
            let v = cdf.value_at(l);
            assert!(v >= prev && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn quantile_lower_definition() {
        let cdf = LatencyCdf::from_outcomes([1, 2, 3, 4].map(Outcome::Discovered));
        assert_eq!(cdf.quantile(0.5).unwrap(), 2);
        let single = LatencyCdf::from_outcomes([Outcome::Discovered(5)]);
        assert_eq!(single.quantile(0.9).unwrap(), 5);
    }

    #[test]
    fn quantile_unreachable_with_timeouts() {
        let cdf = LatencyCdf::from_outcomes([
            Outcome::Discovered(10),
            Outcome::Timeout,
            Outcome::Timeout,
            Outcome::Timeout,
        ]);
        assert!(matches!(
            cdf.quantile(0.5),
            Err(SimError::QuantileUnreachable { .. })
        ));
        assert_eq!(cdf.quantile(0.25).unwrap(), 10);
    }

    #[test]
    fn quantile_probability_bounds() {
        let cdf = LatencyCdf::from_outcomes([Outcome::Discovered(5)]);
        assert!(matches!(cdf.quantile(0.0), Err(SimError::BadQuantile(_))));
        assert!(matches!(cdf.quantile(1.0), Err(SimError::BadQuantile(_))));
    }

    #[test]
    fn horizon_must_exceed_interval() {
        let mode = ScanMode::from_ms(1000, 100, 1.0).unwrap();
        let adv = AdvertiserConfig::new(vec![5000 * MS], vec![1.0]).unwrap();
        assert!(matches!(
            SimScenario::new(mode, adv, 5000 * MS, 1),
            Err(SimError::HorizonTooShort { .. })
        ));
    }

    // Widening the scan window with paired seeds never delays discovery:
    // the event stream is identical and coverage only grows.
    #[test]
    fn wider_window_never_increases_quantile() {
        let adv = AdvertiserConfig::new(vec![777 * MS], vec![1.0]).unwrap();
        let quantile_for = |w_ms: Micros| {
            let mode = ScanMode::from_ms(2048, w_ms, 1.0).unwrap();
            let scenario = SimScenario::new(mode, adv.clone(), 300_000 * MS, 555).unwrap();
            estimate_cdf(&scenario, 10_000).unwrap().quantile(0.9).unwrap()
        };
        let q_narrow = quantile_for(256);
        let q_wide = quantile_for(512);
        assert!(q_wide <= q_narrow, "q_wide={q_wide} q_narrow={q_narrow}");
    }
}
