use emotrans_core::attributes::{estimate_energy, estimate_pitch, Band, Level};
use emotrans_core::builder::{concatenate, normalize_loudness};
use emotrans_core::preprocess::{remove_silence, AlignmentMap};
use emotrans_core::{EmotionLabel, Waveform};
use proptest::prelude::*;

fn noise(len: usize, amp: f64, seed: u64) -> Waveform {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let samples = (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            amp * (((state >> 33) as f64 / (1u64 << 31) as f64) * 2.0 - 1.0)
        })
        .collect();
    Waveform::new(samples, 16000).unwrap()
}

fn direct_rms(w: &Waveform) -> f64 {
    (w.samples().iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt()
}

proptest! {
    #[test]
    fn loudness_equalizes_and_is_idempotent(
        amps in prop::collection::vec(0.01f64..0.9, 1..5),
        lens in prop::collection::vec(200usize..2000, 5),
        seed in any::<u64>(),
    ) {
        let segs: Vec<Waveform> = amps.iter().enumerate().map(|(i, &a)| noise(lens[i], a, seed + i as u64)).collect();
        let mean = segs.iter().map(direct_rms).sum::<f64>() / segs.len() as f64;
        let once = normalize_loudness(&segs).unwrap();
        for w in &once {
            prop_assert!((direct_rms(w) - mean).abs() <= 1e-6 * mean);
        }
        let twice = normalize_loudness(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            for (x, y) in a.samples().iter().zip(b.samples()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn concatenation_preserves_samples_and_tiles(
        lens in prop::collection::vec(1usize..5000, 1..6),
    ) {
        let segs: Vec<Waveform> = lens.iter().map(|&n| noise(n, 0.1, n as u64)).collect();
        let emotions: Vec<EmotionLabel> = (0..lens.len()).map(|i| EmotionLabel::from_index(i % 2).unwrap()).collect();
        let (out, timeline) = concatenate(&segs, &emotions).unwrap();
        prop_assert_eq!(out.len(), lens.iter().sum::<usize>());
        prop_assert_eq!(timeline.len(), lens.len());
        prop_assert_eq!(timeline[0].start_s, 0.0);
        for w in timeline.windows(2) {
            prop_assert!(w[0].end_s < w[1].end_s);
            prop_assert_eq!(w[0].end_s, w[1].start_s);
        }
        prop_assert!((timeline.last().unwrap().end_s - out.duration_s()).abs() < 1e-12);
    }

    #[test]
    fn map_to_original_is_monotone(
        gaps in prop::collection::vec((0.0f64..2.0, 0.01f64..3.0), 1..6),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let mut t = 0.0;
        let mut spans = Vec::new();
        for (gap, len) in gaps {
            t += gap;
            spans.push((t, t + len));
            t += len;
        }
        let map = AlignmentMap { kept_spans: spans };
        let total = map.kept_duration();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f_lo = map.map_to_original(lo * total).unwrap();
        let f_hi = map.map_to_original(hi * total).unwrap();
        prop_assert!(f_lo <= f_hi);
        prop_assert!((map.map_to_trimmed(f_lo) - lo * total).abs() < 1e-9);
    }

    #[test]
    fn trimmed_audio_is_concatenation_of_spans(
        cuts in prop::collection::vec(0usize..16000, 2..8),
    ) {
        let w = noise(16000, 0.3, 9);
        let mut cuts = cuts;
        cuts.sort_unstable();
        let spans: Vec<(f64, f64)> = cuts.chunks_exact(2).map(|c| (c[0] as f64 / 16000.0, c[1] as f64 / 16000.0)).collect();
        let (trimmed, map) = remove_silence(&w, &spans).unwrap();
        prop_assert!((trimmed.len() as f64 / 16000.0 - map.kept_duration()).abs() < 1e-9);
        let mut expected = Vec::new();
        for &(a, b) in &map.kept_spans {
            expected.extend_from_slice(&w.samples()[(a * 16000.0).round() as usize..(b * 16000.0).round() as usize]);
        }
        prop_assert_eq!(trimmed.samples(), &expected[..]);
    }

    #[test]
    fn gain_shifts_energy_by_its_decibels(g in 0.05f64..4.0, seed in any::<u64>()) {
        let w = noise(4000, 0.2, seed);
        let shift = estimate_energy(&w.scaled(g)) - estimate_energy(&w);
        prop_assert!((shift - 20.0 * g.log10()).abs() < 1e-6);
    }

    #[test]
    fn categories_are_exhaustive(x in -1000.0f64..1000.0, lo in -50.0f64..50.0, width in 0.0f64..50.0) {
        let band = Band { low: lo, high: lo + width };
        let level = band.classify(x);
        let expected = if x < lo { Level::Low } else if x < lo + width { Level::Medium } else { Level::High };
        prop_assert_eq!(level, expected);
    }
}

#[test]
fn pitch_is_gain_invariant() {
    let sr = 16000.0;
    let samples: Vec<f64> = (0..16000)
        .map(|i| {
            let t = i as f64 / sr;
            (1..=4).map(|h| (2.0 * std::f64::consts::PI * 150.0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.2
        })
        .collect();
    let w = Waveform::new(samples, 16000).unwrap();
    let base = estimate_pitch(&w).unwrap();
    for g in [0.01, 0.3, 3.0] {
        assert!((estimate_pitch(&w.scaled(g)).unwrap() - base).abs() < 1e-9);
    }
}
