use std::collections::BTreeMap;

use callpack::trace::{
    generate_trace, read_trace, write_trace, Action, BurstProfile, CallTrace, SeriesJitter,
    TraceGenConfig, BURST_WINDOW_S,
};
use proptest::prelude::*;

fn bytes(trace: &CallTrace) -> Vec<u8> {
    let mut out = Vec::new();
    write_trace(trace, &mut out).unwrap();
    out
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn ten_k(seed: u64) -> CallTrace {
    generate_trace(&TraceGenConfig {
        n_calls: 10_000,
        seed,
        ..TraceGenConfig::default()
    })
    .unwrap()
}

#[test]
fn same_config_same_bytes() {
    let cfg = TraceGenConfig {
        n_calls: 2_000,
        seed: 17,
        ..TraceGenConfig::default()
    };
    let a = generate_trace(&cfg).unwrap();
    let b = generate_trace(&cfg).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    let c = generate_trace(&TraceGenConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(bytes(&a), bytes(&c));
}

#[test]
fn zero_calls_give_an_empty_trace() {
    let t = generate_trace(&TraceGenConfig {
        n_calls: 0,
        ..TraceGenConfig::default()
    })
    .unwrap();
    assert!(t.calls.is_empty());
    assert_eq!(t.warmup_s, 0);
}

#[test]
fn participant_quantiles_fall_in_bands() {
    for seed in [1, 2, 3] {
        let t = ten_k(seed);
        let mut sizes: Vec<f64> = t.live_calls().map(|c| c.max_participants() as f64).collect();
        assert_eq!(sizes.len(), 10_000);
        sizes.sort_by(f64::total_cmp);
        let (p50, p90, p95) = (quantile(&sizes, 0.5), quantile(&sizes, 0.9), quantile(&sizes, 0.95));
        assert!((3.0..=5.0).contains(&p50), "seed {seed}: P50 {p50}");
        assert!((8.0..=13.0).contains(&p90), "seed {seed}: P90 {p90}");
        assert!((11.0..=15.0).contains(&p95), "seed {seed}: P95 {p95}");
    }
}

#[test]
fn joiner_durations_track_targets() {
    let t = ten_k(4);
    let mut d: Vec<f64> = t
        .live_calls()
        .filter(|c| c.participants.len() >= 2)
        .filter_map(|c| c.joiner_duration_s())
        .map(f64::from)
        .collect();
    d.sort_by(f64::total_cmp);
    for (p, target) in [(0.5, 12.0), (0.75, 46.0), (0.95, 293.0), (0.99, 550.0)] {
        let got = quantile(&d, p);
        assert!(
            (got - target).abs() <= 0.25 * target,
            "P{}: {got} vs {target}",
            p * 100.0
        );
    }
}

#[test]
fn starts_cluster_around_half_hour_marks() {
    let t = ten_k(5);
    let near = t
        .live_calls()
        .filter(|c| {
            let off = (c.start_s - t.warmup_s) % 1800;
            off <= BURST_WINDOW_S || off >= 1800 - BURST_WINDOW_S
        })
        .count() as f64
        / 10_000.0;
    let ratio = near / BurstProfile::offpeak_window_share();
    let expected = BurstProfile::default().expected_burst_ratio();
    assert!(ratio > 2.0, "burst ratio {ratio}");
    assert!(
        (ratio - expected).abs() <= 0.1 * expected,
        "burst ratio {ratio} vs configured {expected}"
    );
}

#[test]
fn burst_weight_zero_is_flat_near_marks() {
    let t = generate_trace(&TraceGenConfig {
        n_calls: 10_000,
        seed: 6,
        burst: BurstProfile {
            weight: 0.0,
            ..BurstProfile::default()
        },
        ..TraceGenConfig::default()
    })
    .unwrap();
    let near = t
        .live_calls()
        .filter(|c| {
            let off = (c.start_s - t.warmup_s) % 1800;
            off <= BURST_WINDOW_S || off >= 1800 - BURST_WINDOW_S
        })
        .count() as f64
        / 10_000.0;
    let ratio = near / BurstProfile::offpeak_window_share();
    assert!((ratio - 1.0).abs() < 0.15, "ratio {ratio}");
}

fn series_sizes(t: &CallTrace) -> BTreeMap<&str, Vec<u32>> {
    let mut by: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
    for c in &t.calls {
        if let Some(s) = &c.series_id {
            by.entry(s.as_str()).or_default().push(c.max_participants());
        }
    }
    by
}

#[test]
fn zero_jitter_series_repeat_their_size() {
    let t = generate_trace(&TraceGenConfig {
        n_calls: 40,
        recurring_fraction: 1.0,
        n_series: Some(10),
        series_jitter: SeriesJitter::none(),
        p_early_leave: 0.0,
        seed: 9,
        ..TraceGenConfig::default()
    })
    .unwrap();
    let by = series_sizes(&t);
    assert_eq!(by.len(), 10);
    for (s, sizes) in by {
        // 4 occurrences in the reported day plus 5 weekly history occurrences
        assert_eq!(sizes.len(), 9, "{s}");
        assert!(sizes.iter().all(|&n| n == sizes[0]), "{s}: {sizes:?}");
    }
}

#[test]
fn series_spread_matches_target_shape() {
    let t = ten_k(7);
    let stds: Vec<f64> = series_sizes(&t)
        .values()
        .map(|v| {
            let n = v.len() as f64;
            let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
            (v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let n = stds.len() as f64;
    let zero = stds.iter().filter(|&&s| s == 0.0).count() as f64 / n;
    let le1 = stds.iter().filter(|&&s| s <= 1.0).count() as f64 / n;
    assert!((0.15..=0.35).contains(&zero), "std 0 share {zero}");
    assert!((0.55..=0.75).contains(&le1), "std <= 1 share {le1}");
}

#[test]
fn history_gives_every_series_enough_occurrences() {
    let t = ten_k(8);
    assert!(t.warmup_s > 0);
    for (s, sizes) in series_sizes(&t) {
        assert!(sizes.len() >= 5, "{s}");
    }
    assert_eq!(t.live_calls().count(), 10_000);
}

fn arb_config() -> impl Strategy<Value = TraceGenConfig> {
    (
        0usize..40,
        0.0f64..=1.0,
        0u32..6,
        any::<u64>(),
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0),
        (0.0f64..=1.0, 30.0f64..600.0),
        prop::option::of(1usize..8),
        1800u32..=86_400,
    )
        .prop_map(
            |(n_calls, rf, n_weeks, seed, (pv, poff, pss, pel), (bw, sig), n_series, dur)| {
                TraceGenConfig {
                    n_calls,
                    duration_s: dur,
                    recurring_fraction: rf,
                    n_weeks,
                    n_series,
                    p_video: pv,
                    p_video_off: poff,
                    p_screen_share: pss,
                    p_early_leave: pel,
                    burst: BurstProfile {
                        weight: bw,
                        sigma_s: sig,
                        ..BurstProfile::default()
                    },
                    seed,
                    ..TraceGenConfig::default()
                }
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_calls_are_well_formed(cfg in arb_config()) {
        let t = generate_trace(&cfg).unwrap();
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(t.live_calls().count(), cfg.n_calls);
        for c in &t.calls {
            prop_assert!(c.events.windows(2).all(|w| w[0].time_s <= w[1].time_s));
            let mut count: i64 = 0;
            for ev in &c.events {
                prop_assert!(ev.time_s >= c.start_s && ev.time_s <= c.end_s);
                match ev.action {
                    Action::Join => count += 1,
                    Action::Leave => count -= 1,
                    _ => {}
                }
                prop_assert!(count >= 0);
            }
            prop_assert_eq!(count, 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_is_structural_and_byte_stable(cfg in arb_config()) {
        let t = generate_trace(&cfg).unwrap();
        let first = bytes(&t);
        let back = read_trace(first.as_slice()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(bytes(&back), first);
    }
}
