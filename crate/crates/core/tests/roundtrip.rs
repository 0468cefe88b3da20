use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xybook::ingest::{extract_xy, extract_xy_with_tick, parse_log, write_log, LogFormat};
use xybook::reconstruct::{reconstruct_stream, TransitionKind};
use xybook::synth::{random_log, SynthConfig};
use xybook::{BookEvent, Tick, XySeries};

fn log(seed: u64, cfg: &SynthConfig) -> Vec<BookEvent> {
    random_log(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extract_then_replay_is_identity(
        seed in any::<u64>(),
        events in 1usize..3000,
        p_deplete in 0.0f64..0.5,
        p_inside in 0.0f64..0.5,
        max_qty in 1i64..60,
        max_spread in 1i64..10,
    ) {
        let cfg = SynthConfig { events, p_deplete, p_inside, max_qty, max_spread, ..SynthConfig::default() };
        let raw = log(seed, &cfg);
        let (series, report) = extract_xy(&raw).unwrap();
        prop_assert_eq!(report.dropped(), 0);
        prop_assert_eq!(series.segments.len(), 1);
        prop_assert_eq!(series.len(), events);
        prop_assert!(series.events().all(|e| e.y() != 0));

        let seg = &series.segments[0];
        prop_assert_eq!(seg.start, raw[0].state());
        let replay = reconstruct_stream(&seg.start, &seg.events).unwrap();
        let mut prev = seg.start;
        for (tr, snap) in replay.iter().zip(&raw[1..]) {
            prop_assert_eq!(tr.state_after, snap.state());
            let s = tr.state_after;
            prop_assert!(s.q_b > 0 && s.q_a > 0);
            let dspread = s.spread_ticks() - prev.spread_ticks();
            prop_assert!((-1..=1).contains(&dspread));
            if matches!(tr.kind, TransitionKind::NarrowAsk | TransitionKind::NarrowBid) {
                prop_assert!(prev.spread_ticks() >= 2);
            }
            // mid moves by half a tick at most
            prop_assert!((s.mid_half_ticks() - prev.mid_half_ticks()).abs() <= 1);
            prev = s;
        }
    }

    #[test]
    fn exactly_one_side_per_flow(seed in any::<u64>()) {
        let raw = log(seed, &SynthConfig { events: 300, ..SynthConfig::default() });
        for w in raw.windows(2) {
            let f = xybook::book::derive_flow(&w[0], &w[1]).unwrap();
            prop_assert!((f.v_b == 0) != (f.v_a == 0));
        }
    }
}

#[test]
fn no_price_move_log_gives_queue_differences() {
    let cfg = SynthConfig {
        events: 500,
        p_deplete: 0.0,
        p_inside: 0.0,
        ..SynthConfig::default()
    };
    let raw = log(11, &cfg);
    let (series, _) = extract_xy(&raw).unwrap();
    for (ev, w) in series.events().zip(raw.windows(2)) {
        let dq = (w[1].bid_qty - w[0].bid_qty) + (w[1].ask_qty - w[0].ask_qty);
        // x is the signed change of the touched queue, negated on the bid
        let expect = match ev.side() {
            xybook::Side::Ask => dq,
            xybook::Side::Bid => -dq,
        };
        assert_eq!(ev.x(), expect);
    }
}

#[test]
fn csv_log_and_series_file_round_trip() {
    let tick: Tick = "0.05".parse().unwrap();
    let raw = log(5, &SynthConfig { events: 2000, ..SynthConfig::default() });
    let mut buf = Vec::new();
    write_log(&mut buf, &raw, tick).unwrap();
    let parsed = parse_log(&buf[..], LogFormat::csv(tick)).unwrap();
    assert_eq!(parsed, raw);

    let (series, report_a) = extract_xy_with_tick(&parsed, Some(tick)).unwrap();
    let (_, report_b) = extract_xy_with_tick(&parse_log(&buf[..], LogFormat::csv(tick)).unwrap(), Some(tick)).unwrap();
    assert_eq!(report_a, report_b);

    let mut out = Vec::new();
    series.write(&mut out).unwrap();
    let back = XySeries::read(&out[..]).unwrap();
    assert_eq!(back, series);
}

#[test]
fn planted_jumps_are_counted_exactly() {
    let events = 2000;
    let jumps = (1..=events).filter(|j| j % 20 == 7).collect();
    let cfg = SynthConfig {
        events,
        jumps,
        ..SynthConfig::default()
    };
    let raw = log(3, &cfg);
    let (series, report) = extract_xy(&raw).unwrap();
    assert_eq!(report.a2_violations, 100);
    assert_eq!(report.a2_violation_rate, 0.05);
    let hist_total: u64 = report.spread_histogram.values().sum();
    assert_eq!(hist_total, report.total_events - report.dropped());
    assert_eq!(series.len() as u64, report.emitted_events);

    // every segment still replays onto the log
    let mut pos = 0;
    for seg in &series.segments {
        let replay = reconstruct_stream(&seg.start, &seg.events).unwrap();
        let first = pos + raw[pos..].iter().position(|e| e.state() == seg.start).unwrap();
        for (k, tr) in replay.iter().enumerate() {
            assert_eq!(tr.state_after, raw[first + 1 + k].state());
        }
        pos = first + replay.len();
    }
}
