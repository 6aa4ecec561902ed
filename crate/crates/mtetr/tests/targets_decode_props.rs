use emotrans_core::{EmotionLabel, TimedSegment};
use emotrans_mtetr::decode::decode;
use emotrans_mtetr::targets::{boundary_frames, make_frame_targets, one_hot};
use emotrans_mtetr::SmoothingConfig;
use proptest::prelude::*;

const FR: f64 = 50.0;

fn segments_strategy() -> impl Strategy<Value = Vec<TimedSegment>> {
    (1usize..=4)
        .prop_flat_map(|n| {
            (
                0usize..5,
                prop::collection::vec(1usize..5, n - 1),
                prop::collection::vec(0.5f64..10.0, n),
            )
        })
        .prop_map(|(first, steps, durs)| {
            let mut emotions = vec![first];
            for s in steps {
                emotions.push((emotions.last().unwrap() + s) % 5);
            }
            let mut t = 0.0;
            emotions
                .iter()
                .zip(durs)
                .map(|(&e, d)| {
                    let s = TimedSegment::new(t, t + d, EmotionLabel::from_index(e).unwrap()).unwrap();
                    t += d;
                    s
                })
                .collect()
        })
}

fn frames_for(segs: &[TimedSegment]) -> usize {
    (segs.last().unwrap().end_s * FR).round() as usize
}

proptest! {
    #[test]
    fn decode_inverts_targets(segs in segments_strategy()) {
        let n = frames_for(&segs);
        let t = make_frame_targets(&segs, FR, n, 2).unwrap();
        let out = decode(one_hot(&t.dia).view(), FR, &SmoothingConfig::default());
        prop_assert_eq!(out.len(), segs.len());
        for (a, b) in out.iter().zip(&segs) {
            prop_assert_eq!(a.emotion, b.emotion);
            prop_assert!((a.start_s - b.start_s).abs() <= 1.0 / FR + 1e-9);
            prop_assert!((a.end_s - b.end_s).abs() <= 1.0 / FR + 1e-9);
        }
        prop_assert_eq!(t.positive_runs(), segs.len() - 1);
    }

    #[test]
    fn dia_is_constant_inside_segments(segs in segments_strategy()) {
        let n = frames_for(&segs);
        let t = make_frame_targets(&segs, FR, n, 2).unwrap();
        for (f, &l) in t.dia.iter().enumerate() {
            let centre = (f as f64 + 0.5) / FR;
            if let Some(s) = segs.iter().find(|s| s.start_s <= centre && centre < s.end_s) {
                prop_assert_eq!(l as usize, s.emotion.index());
            }
        }
    }

    #[test]
    fn shifting_moves_boundaries_by_whole_frames(segs in segments_strategy(), shift in 0usize..200) {
        let delta = shift as f64 / FR;
        let mut moved = segs.clone();
        for s in moved.iter_mut() {
            s.start_s += delta;
            s.end_s += delta;
        }
        moved[0].start_s = 0.0;
        let before = boundary_frames(&segs, FR);
        let after = boundary_frames(&moved, FR);
        for (a, b) in before.iter().zip(&after) {
            prop_assert_eq!(*b, a + (delta * FR).round() as usize);
        }
        let n = frames_for(&moved);
        let ta = make_frame_targets(&moved, FR, n, 2).unwrap();
        let tb = make_frame_targets(&segs, FR, frames_for(&segs), 2).unwrap();
        prop_assert_eq!(&ta.det[n - tb.det.len()..], &tb.det[..]);
    }

    #[test]
    fn decoded_segments_cover_the_sequence(labels in prop::collection::vec(0u8..5, 1..300)) {
        let out = emotrans_mtetr::decode::decode_labels(&labels, FR, &SmoothingConfig::default());
        prop_assert_eq!(out[0].start_s, 0.0);
        prop_assert!((out.last().unwrap().end_s - labels.len() as f64 / FR).abs() < 1e-9);
        for w in out.windows(2) {
            prop_assert_eq!(w[0].end_s, w[1].start_s);
            prop_assert_ne!(w[0].emotion, w[1].emotion);
        }
        if out.len() > 1 {
            for s in &out {
                prop_assert!(s.duration() >= 0.5 - 1e-9);
            }
        }
    }
}

/// Noise robustness against a decoder run on the clean signal.
#[test]
fn scattered_flips_do_not_change_decoding() {
    let mut rng = emotrans_core::seed::rng(5);
    use rand::Rng;
    for _ in 0..100 {
        let a = rng.gen_range(60..300);
        let b = rng.gen_range(60..300);
        let (ca, cb) = (rng.gen_range(0..5u8), rng.gen_range(0..5u8));
        if ca == cb {
            continue;
        }
        let mut clean = vec![ca; a];
        clean.extend(std::iter::repeat(cb).take(b));
        let mut noisy = clean.clone();
        for _ in 0..3 {
            let t = rng.gen_range(0..a + b);
            if t.abs_diff(a) > 13 {
                noisy[t] = (noisy[t] + 1 + rng.gen_range(0..4)) % 5;
            }
        }
        let cfg = SmoothingConfig::default();
        assert_eq!(
            emotrans_mtetr::decode::decode_labels(&noisy, FR, &cfg),
            emotrans_mtetr::decode::decode_labels(&clean, FR, &cfg)
        );
    }
}
