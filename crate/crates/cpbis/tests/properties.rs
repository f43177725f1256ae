//! Property tests for the screening pipeline against independent
//! brute-force oracles, plus constructor fuzzing.

use proptest::prelude::*;

use cpbis::screen::{
    best_left_for, find_troughs, local_optimum_pairs, prune_non_increasing, select_optimal_pair,
    weighted_latency, PartitionedCandidates,
};
use cpbis::types::{
    AdvertiserConfig, DistributionPoint, DistributionSeries, Micros, ScanMode, MS,
};

const A_MIN: Micros = 4000 * MS;

fn point(interval: Micros, latency: f64) -> DistributionPoint {
    DistributionPoint::new(interval, latency).unwrap()
}

/// Strictly ascending intervals in [lo, hi) with arbitrary positive latencies.
fn points_strategy(
    len: std::ops::Range<usize>,
    lo: Micros,
    hi: Micros,
) -> impl Strategy<Value = Vec<DistributionPoint>> {
    prop::collection::btree_set(lo..hi, len)
        .prop_flat_map(|intervals| {
            let n = intervals.len();
            (
                Just(intervals),
                prop::collection::vec(1.0f64..50_000_000.0, n),
            )
        })
        .prop_map(|(intervals, latencies)| {
            intervals
                .into_iter()
                .zip(latencies)
                .map(|(a, l)| point(a, l))
                .collect()
        })
}

/// A post-pruning shaped candidate set: ascending intervals straddling the
/// constraint with non-decreasing latencies.
fn pruned_strategy() -> impl Strategy<Value = (Vec<DistributionPoint>, Vec<DistributionPoint>)> {
    let left = prop::collection::btree_set(100 * MS..A_MIN, 1..50);
    let right = prop::collection::btree_set(A_MIN..20_000 * MS, 1..50);
    (left, right)
        .prop_flat_map(|(l, r)| {
            let n = l.len() + r.len();
            (
                Just(l),
                Just(r),
                1.0f64..10_000_000.0,
                prop::collection::vec(0.0f64..2_000_000.0, n),
            )
        })
        .prop_map(|(l, r, base, increments)| {
            let n_left = l.len();
            let mut latency = base;
            let mut all = Vec::new();
            for (a, inc) in l.into_iter().chain(r).zip(increments) {
                latency += inc;
                all.push(point(a, latency));
            }
            let right = all.split_off(n_left);
            (all, right)
        })
}

/// Line through two points evaluated at the constraint; the quantity the
/// final selection minimizes.
fn line_at_a_min(left: DistributionPoint, right: DistributionPoint) -> f64 {
    let k = (right.latency - left.latency) / (right.interval - left.interval) as f64;
    let b = right.latency - k * right.interval as f64;
    k * A_MIN as f64 + b
}

/// Weighted latency of a pair at the maximum feasible left-interval share.
fn pair_latency_at_boundary(left: DistributionPoint, right: DistributionPoint) -> f64 {
    let delta = (right.interval - A_MIN) as f64 / (right.interval - left.interval) as f64;
    delta * left.latency + (1.0 - delta) * right.latency
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    // Right-to-left pruning equals the fixpoint of "delete any element with
    // larger latency than its successor".
    #[test]
    fn prune_matches_fixpoint_oracle(points in points_strategy(1..40, 100 * MS, 20_000 * MS)) {
        let mut expected = points.clone();
        loop {
            let before = expected.len();
            let mut i = 0;
            while i + 1 < expected.len() {
                if expected[i].latency > expected[i + 1].latency {
                    expected.remove(i);
                } else {
                    i += 1;
                }
            }
            if expected.len() == before {
                break;
            }
        }
        prop_assert_eq!(prune_non_increasing(&points), expected);
    }

    #[test]
    fn pruned_is_ascending_in_both_axes(points in points_strategy(1..40, 100 * MS, 20_000 * MS)) {
        let pruned = prune_non_increasing(&points);
        for w in pruned.windows(2) {
            prop_assert!(w[0].interval < w[1].interval);
            prop_assert!(w[0].latency <= w[1].latency);
        }
    }

    // Trough extraction equals an independent per-index local-minimum scan.
    #[test]
    fn troughs_match_reference_scan(points in points_strategy(3..60, 100 * MS, 20_000 * MS)) {
        let series = DistributionSeries::new("fuzz", points.clone()).unwrap();
        let mut expected = Vec::new();
        for i in 0..points.len().saturating_sub(1) {
            if points[i + 1].latency <= points[i].latency {
                continue; // not the rightmost of a dip
            }
            // Walk left across the plateau; the first different latency
            // must be strictly higher and must exist (endpoints excluded).
            let mut j = i;
            while j > 0 && points[j - 1].latency == points[i].latency {
                j -= 1;
            }
            if j > 0 && points[j - 1].latency > points[i].latency {
                expected.push(points[i]);
            }
        }
        match find_troughs(&series) {
            Ok(troughs) => prop_assert_eq!(troughs, expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    // Max-slope pairing equals exhaustive minimization of the weighted
    // latency with the proportion at its constraint maximum.
    #[test]
    fn best_left_matches_exhaustive_oracle((b_left, b_right) in pruned_strategy()) {
        for &right in &b_right {
            let pair = best_left_for(right, &b_left, A_MIN);
            let best_direct = b_left
                .iter()
                .map(|&l| pair_latency_at_boundary(l, right))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(close(pair.weighted_latency, best_direct),
                "pair {} vs oracle {}", pair.weighted_latency, best_direct);
        }
    }

    // Final smallest-slope selection equals global brute force over all
    // left x right combinations.
    #[test]
    fn select_matches_global_brute_force((b_left, b_right) in pruned_strategy()) {
        let parts = PartitionedCandidates {
            b_left: b_left.clone(),
            b_right: b_right.clone(),
        };
        let selected = select_optimal_pair(&parts, A_MIN).unwrap();
        let brute = b_left
            .iter()
            .flat_map(|&l| b_right.iter().map(move |&r| line_at_a_min(l, r)))
            .fold(f64::INFINITY, f64::min);
        prop_assert!(close(selected.weighted_latency, brute),
            "selected {} vs brute {}", selected.weighted_latency, brute);
    }

    // The chosen proportion always sits on the constraint boundary.
    #[test]
    fn delta_pins_the_equivalent_interval((b_left, b_right) in pruned_strategy()) {
        for pair in local_optimum_pairs(
            &PartitionedCandidates { b_left, b_right },
            A_MIN,
        ) {
            prop_assert!((0.0..=1.0).contains(&pair.delta));
            prop_assert!((pair.equivalent_interval() - A_MIN as f64).abs() <= 1e-6 * MS as f64);
            prop_assert!(pair.a_left.interval < A_MIN && A_MIN <= pair.a_right.interval);
        }
    }

    // The dual-interval weighted latency identity: mixing per-mode
    // latencies first or last gives the same number.
    #[test]
    fn eq2_commutes_with_superimposition(
        l1l in 1.0f64..1e7, l2l in 1.0f64..1e7,
        l1r in 1.0f64..1e7, l2r in 1.0f64..1e7,
        w1 in 0.0f64..=1.0, c in 0.0f64..=1.0,
    ) {
        let w2 = 1.0 - w1;
        let direct = weighted_latency(l1l, l2l, l1r, l2r, w1, w2, c);
        let mix_left = w1 * l1l + w2 * l2l;
        let mix_right = w1 * l1r + w2 * l2r;
        let via_mix = c * mix_left + (1.0 - c) * mix_right;
        prop_assert!(close(direct, via_mix));
    }

    // Validating constructors reject violated invariants.
    #[test]
    fn scan_mode_rejects_window_larger_than_interval(
        t in 1u64..10_000_000,
        extra in 1u64..10_000_000,
        share in 0.0f64..=1.0,
    ) {
        prop_assert!(ScanMode::new(t, t + extra, share).is_err());
    }

    #[test]
    fn scan_mode_rejects_bad_share(t in 1u64..10_000_000, share in 1.0001f64..100.0) {
        prop_assert!(ScanMode::new(t, t, share).is_err());
        prop_assert!(ScanMode::new(t, t, -share).is_err());
    }

    #[test]
    fn advertiser_rejects_bad_proportion_sum(
        a in 1_000u64..10_000_000,
        p in 0.0f64..0.999,
    ) {
        prop_assert!(AdvertiserConfig::new(vec![a, 2 * a], vec![p, 1.0 - p - 1e-3]).is_err());
    }
}
