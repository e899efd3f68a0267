mod support;

use proptest::prelude::*;
use qkdlab::model::preset;
use qkdlab::timetag::{
    generate_stream, generate_stream_with, grid, sift, sweep_filters, FilterWindow,
    GeneratorConfig, Record, TagStream, CH_TRIGGER,
};
use qkdlab::Error;

const PERIOD: u64 = 25_000;

fn small_stream(seed: u64) -> TagStream {
    // Bright and noisy so every class of pulse shows up in 1 ms.
    let mut inst = preset("baseline").unwrap();
    inst.source.mu_tran = 0.8;
    inst.source.eta_tran = 0.9;
    inst.receiver.eta_rec = 1.0;
    inst.receiver.p_dc = 0.05;
    inst.receiver.p_mis = 0.1;
    generate_stream(&inst, 1e-3, seed).unwrap()
}

#[test]
fn sift_matches_naive_reference() {
    let s = small_stream(3);
    for &(t0, dt) in &[
        (0.0, 25.0),
        (0.5, 10.0),
        (2.0, 3.0),
        (4.0, 12.0),
        (0.1, 0.1),
    ] {
        let w = FilterWindow::new(t0, dt);
        let got = sift(&s, w).unwrap();
        let want = support::naive_sift(&s, w);
        assert_eq!(
            (got.n_received, got.n_errors, got.n_double, got.n_empty),
            want,
            "window {t0},{dt}"
        );
    }
}

#[test]
fn sweep_cells_equal_single_sifts() {
    let s = small_stream(5);
    let t0 = grid(0.0, 4.0, 0.5).unwrap();
    let dt = grid(3.0, 12.0, 1.5).unwrap();
    let sweep = sweep_filters(&s, &t0, &dt, |st, _| {
        st.n_received as f64 - 3.0 * st.n_errors as f64
    })
    .unwrap();
    for (i, &a) in t0.iter().enumerate() {
        for (j, &b) in dt.iter().enumerate() {
            let w = FilterWindow::new(a, b);
            let c = sweep.stats[i][j];
            assert_eq!(
                (c.n_received, c.n_errors, c.n_double, c.n_empty),
                support::naive_sift(&s, w)
            );
            assert_eq!(c.total_pulses(), s.trigger_count());
        }
    }
    let best = sweep.best_stats();
    let best_val = best.n_received as f64 - 3.0 * best.n_errors as f64;
    assert!(sweep
        .skr_map
        .iter()
        .flatten()
        .all(|&v| v <= best_val.max(0.0)));
}

#[test]
fn qtt1_and_csv_round_trip() {
    let s = small_stream(9);
    let mut bin = Vec::new();
    s.write_qtt1(&mut bin).unwrap();
    assert_eq!(bin.len() as u64, 24 + 9 * s.record_count());
    let back = TagStream::read_qtt1(bin.as_slice()).unwrap();
    assert_eq!(back.triggers, s.triggers);
    assert_eq!(back.clicks, s.clicks);

    let mut text = Vec::new();
    s.write_csv(&mut text).unwrap();
    let back = TagStream::read_csv(text.as_slice(), PERIOD).unwrap();
    assert_eq!(back.clicks, s.clicks);
    assert_eq!(back.trigger_count(), s.trigger_count());
}

fn format_offset(e: Error) -> u64 {
    match e {
        Error::Format { offset, .. } => offset,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn malformed_qtt1_reports_byte_offsets() {
    let s = small_stream(1);
    let mut bin = Vec::new();
    s.write_qtt1(&mut bin).unwrap();

    let mut bad_magic = bin.clone();
    bad_magic[0] = b'X';
    assert_eq!(
        format_offset(TagStream::read_qtt1(bad_magic.as_slice()).unwrap_err()),
        0
    );

    let truncated = &bin[..24 + 9 * 5 + 4];
    assert_eq!(
        format_offset(TagStream::read_qtt1(truncated).unwrap_err()),
        24 + 9 * 5
    );

    let mut bad_channel = bin.clone();
    bad_channel[24 + 9 * 7] = 9;
    assert_eq!(
        format_offset(TagStream::read_qtt1(bad_channel.as_slice()).unwrap_err()),
        24 + 9 * 7
    );

    let mut trailing = bin.clone();
    trailing.push(0);
    assert_eq!(
        format_offset(TagStream::read_qtt1(trailing.as_slice()).unwrap_err()),
        bin.len() as u64
    );
}

#[test]
fn malformed_csv_reports_byte_offsets() {
    let text = b"channel,timestamp_ps\n2,0\n0,100\nx,5\n";
    assert_eq!(
        format_offset(TagStream::read_csv(&text[..], PERIOD).unwrap_err()),
        31
    );
}

#[test]
fn empty_stream_sifts_to_zero() {
    let recs = (0..100).map(|k| Record {
        timestamp_ps: k * PERIOD,
        channel: CH_TRIGGER,
    });
    let s = TagStream::from_records(recs, PERIOD).unwrap();
    let st = sift(&s, FilterWindow::new(0.5, 10.0)).unwrap();
    assert_eq!((st.n_received, st.n_double, st.n_empty), (0, 0, 100));
    assert_eq!(st.qber, 0.0);
}

#[test]
fn generation_is_seed_deterministic() {
    let inst = preset("baseline").unwrap();
    let cfg = GeneratorConfig::free_space_link();
    let a = generate_stream_with(&inst, 0.05, 42, &cfg).unwrap();
    let b = generate_stream_with(&inst, 0.05, 42, &cfg).unwrap();
    let c = generate_stream_with(&inst, 0.05, 43, &cfg).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.clicks, c.clicks);
}

fn arb_stream() -> impl Strategy<Value = TagStream> {
    (
        1u64..60,
        prop::collection::vec((0u64..60 * PERIOD, 0u8..2), 0..200),
    )
        .prop_map(|(n, clicks)| {
            let mut recs: Vec<Record> = (0..n)
                .map(|k| Record {
                    timestamp_ps: 1_000 + k * PERIOD,
                    channel: CH_TRIGGER,
                })
                .collect();
            recs.extend(clicks.into_iter().map(|(t, channel)| Record {
                timestamp_ps: t,
                channel,
            }));
            recs.sort_unstable();
            TagStream::from_records(recs, PERIOD).unwrap()
        })
}

proptest! {
    #[test]
    fn sift_conserves_and_matches_reference(s in arb_stream(), t0 in 0.0f64..10.0, dt in 0.1f64..15.0) {
        let w = FilterWindow::new(t0, dt);
        let st = sift(&s, w).unwrap();
        prop_assert_eq!(st.total_pulses(), s.trigger_count());
        prop_assert!(st.n_errors <= st.n_received);
        prop_assert_eq!((st.n_received, st.n_errors, st.n_double, st.n_empty), support::naive_sift(&s, w));
    }

    #[test]
    fn sweep_agrees_with_sift(s in arb_stream()) {
        let t0 = [0.0, 1.3, 4.0];
        let dt = [3.0, 7.7, 12.0];
        let sw = sweep_filters(&s, &t0, &dt, |st, _| st.n_received as f64).unwrap();
        for (i, &a) in t0.iter().enumerate() {
            for (j, &b) in dt.iter().enumerate() {
                prop_assert_eq!(sw.stats[i][j], sift(&s, FilterWindow::new(a, b)).unwrap());
            }
        }
    }

    #[test]
    fn qtt1_round_trip(s in arb_stream()) {
        let mut bin = Vec::new();
        s.write_qtt1(&mut bin).unwrap();
        let back = TagStream::read_qtt1(bin.as_slice()).unwrap();
        prop_assert_eq!(back.clicks, s.clicks);
        prop_assert_eq!(back.triggers, s.triggers);
    }
}
