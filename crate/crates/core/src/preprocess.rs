//! Silence elimination with a reversible timeline, plus transcription.
//!
//! Frames are classified by an energy detector, aggregated with a windowed
//! hysteresis automaton, and cut out. The returned [`AlignmentMap`] maps any
//! time in the trimmed audio back to the original recording.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::audio::{rms, Waveform};
use crate::clients::{AsrClient, Transcript};
use crate::error::{Error, Result};

pub const SUPPORTED_RATES: [u32; 4] = [8000, 16000, 32000, 48000];
pub const SUPPORTED_FRAME_MS: [u32; 3] = [10, 20, 30];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameDecision {
    Speech,
    Nonspeech,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDecisionSequence {
    pub frame_ms: u32,
    pub decisions: Vec<FrameDecision>,
}

impl FrameDecisionSequence {
    pub fn frame_s(&self) -> f64 {
        f64::from(self.frame_ms) / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VadParams {
    pub frame_ms: u32,
    pub aggressiveness: u8,
    pub window_frames: usize,
    pub trigger_ratio: f64,
}

impl Default for VadParams {
    fn default() -> Self {
        Self {
            frame_ms: 30,
            aggressiveness: 2,
            window_frames: 10,
            trigger_ratio: 0.9,
        }
    }
}

/// Frame-level energy threshold, in dBFS, per aggressiveness mode 0..=3.
pub fn energy_threshold_db(aggressiveness: u8) -> Option<f64> {
    [-60.0, -55.0, -50.0, -45.0]
        .get(usize::from(aggressiveness))
        .copied()
}

/// Classifies every whole frame as speech or non-speech; the trailing
/// partial frame is dropped.
pub fn vad_classify(
    waveform: &Waveform,
    frame_ms: u32,
    aggressiveness: u8,
) -> Result<FrameDecisionSequence> {
    let sr = waveform.sample_rate();
    if !SUPPORTED_RATES.contains(&sr) {
        return Err(Error::Format(format!("unsupported sample rate {sr} Hz")));
    }
    if !SUPPORTED_FRAME_MS.contains(&frame_ms) {
        return Err(Error::Format(format!("unsupported frame length {frame_ms} ms")));
    }
    let threshold = energy_threshold_db(aggressiveness)
        .ok_or_else(|| Error::Format(format!("aggressiveness {aggressiveness} not in 0..=3")))?;
    let frame_len = (sr * frame_ms / 1000) as usize;
    let decisions = waveform
        .samples()
        .chunks_exact(frame_len)
        .map(|frame| {
            let level = rms(frame);
            if level > 0.0 && 20.0 * level.log10() >= threshold {
                FrameDecision::Speech
            } else {
                FrameDecision::Nonspeech
            }
        })
        .collect();
    Ok(FrameDecisionSequence {
        frame_ms,
        decisions,
    })
}

/// Windowed hysteresis over frame decisions.
///
/// A segment opens once at least `trigger_ratio` of the last `window_frames`
/// frames are speech, starting at the first speech frame in that window. It
/// closes once the same share of the window is non-speech, ending after the
/// last speech frame seen.
pub fn aggregate_segments(
    decisions: &FrameDecisionSequence,
    window_frames: usize,
    trigger_ratio: f64,
) -> Vec<(f64, f64)> {
    let window_frames = window_frames.max(1);
    let need = trigger_ratio * window_frames as f64 - 1e-9;
    let frame_s = decisions.frame_s();
    let mut ring: VecDeque<(usize, FrameDecision)> = VecDeque::with_capacity(window_frames);
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &d) in decisions.decisions.iter().enumerate() {
        if ring.len() == window_frames {
            ring.pop_front();
        }
        ring.push_back((i, d));
        match open.as_mut() {
            None => {
                let speech = ring.iter().filter(|(_, d)| *d == FrameDecision::Speech);
                if speech.clone().count() as f64 >= need {
                    let first = speech.clone().next().map(|(j, _)| *j).unwrap_or(i);
                    let last = speech.last().map(|(j, _)| *j).unwrap_or(i);
                    open = Some((first, last));
                    ring.clear();
                }
            }
            Some((first, last)) => {
                if d == FrameDecision::Speech {
                    *last = i;
                }
                let silent = ring
                    .iter()
                    .filter(|(_, d)| *d == FrameDecision::Nonspeech)
                    .count();
                if silent as f64 >= need {
                    out.push((*first as f64 * frame_s, (*last + 1) as f64 * frame_s));
                    open = None;
                    ring.clear();
                }
            }
        }
    }
    if let Some((first, last)) = open {
        out.push((first as f64 * frame_s, (last + 1) as f64 * frame_s));
    }
    out
}

/// Kept spans of the original timeline, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub kept_spans: Vec<(f64, f64)>,
}

impl AlignmentMap {
    pub fn identity(duration_s: f64) -> Self {
        Self {
            kept_spans: vec![(0.0, duration_s)],
        }
    }

    pub fn kept_duration(&self) -> f64 {
        self.kept_spans.iter().map(|(a, b)| b - a).sum()
    }

    /// Trimmed-domain time to original time. A time that falls exactly on a
    /// join belongs to the earlier span.
    pub fn map_to_original(&self, t_trimmed: f64) -> Result<f64> {
        const EPS: f64 = 1e-9;
        let total = self.kept_duration();
        if !t_trimmed.is_finite() || t_trimmed < -EPS || t_trimmed > total + EPS {
            return Err(Error::Range(format!(
                "trimmed time {t_trimmed} outside [0, {total}]"
            )));
        }
        let mut offset = 0.0;
        for &(a, b) in &self.kept_spans {
            let len = b - a;
            if t_trimmed <= offset + len + EPS {
                return Ok(a + (t_trimmed - offset).clamp(0.0, len));
            }
            offset += len;
        }
        Err(Error::Range("alignment map has no spans".into()))
    }

    /// Original time to trimmed time; times inside a removed gap collapse to
    /// the join.
    pub fn map_to_trimmed(&self, t_original: f64) -> f64 {
        let mut offset = 0.0;
        for &(a, b) in &self.kept_spans {
            if t_original < a {
                return offset;
            }
            if t_original <= b {
                return offset + (t_original - a);
            }
            offset += b - a;
        }
        offset
    }
}

pub fn map_to_original(align: &AlignmentMap, t_trimmed: f64) -> Result<f64> {
    align.map_to_original(t_trimmed)
}

/// Concatenates the kept spans (sample boundaries floored).
pub fn remove_silence(waveform: &Waveform, segments: &[(f64, f64)]) -> Result<(Waveform, AlignmentMap)> {
    let sr = f64::from(waveform.sample_rate());
    let mut spans: Vec<(usize, usize)> = segments
        .iter()
        .map(|&(a, b)| (waveform.index_at(a), waveform.index_at(b)))
        .filter(|(a, b)| b > a)
        .collect();
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let mut samples = Vec::with_capacity(merged.iter().map(|(a, b)| b - a).sum());
    for &(a, b) in &merged {
        samples.extend_from_slice(&waveform.samples()[a..b]);
    }
    let map = AlignmentMap {
        kept_spans: merged
            .iter()
            .map(|&(a, b)| (a as f64 / sr, b as f64 / sr))
            .collect(),
    };
    Ok((Waveform::new(samples, waveform.sample_rate())?, map))
}

/// VAD, aggregation and trimming in one call.
pub fn trim_silence(waveform: &Waveform, params: &VadParams) -> Result<(Waveform, AlignmentMap)> {
    let decisions = vad_classify(waveform, params.frame_ms, params.aggressiveness)?;
    let spans = aggregate_segments(&decisions, params.window_frames, params.trigger_ratio);
    remove_silence(waveform, &spans)
}

/// Runs the ASR client and checks that character timings are monotone.
pub fn transcribe(asr: &dyn AsrClient, waveform: &Waveform) -> Result<Transcript> {
    let t = asr.transcribe(waveform)?;
    if let Some(timings) = &t.char_timings {
        let bad = timings.iter().any(|c| c.end_s < c.start_s)
            || timings.windows(2).any(|w| w[1].start_s < w[0].start_s);
        if bad {
            return Err(Error::Transcription("character timings are not monotone".into()));
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::ClientResult;
    use crate::error::ClientError;
    use rand::{Rng, SeedableRng};
    use FrameDecision::*;

    fn decisions(pattern: &[(FrameDecision, usize)]) -> FrameDecisionSequence {
        FrameDecisionSequence {
            frame_ms: 30,
            decisions: pattern
                .iter()
                .flat_map(|&(d, n)| std::iter::repeat(d).take(n))
                .collect(),
        }
    }

    #[test]
    fn digital_silence_is_nonspeech() {
        let d = vad_classify(&Waveform::silence(1.0, 16000), 30, 2).unwrap();
        assert_eq!(d.decisions.len(), 33);
        assert!(d.decisions.iter().all(|&x| x == Nonspeech));
    }

    #[test]
    fn noise_burst_is_mostly_speech() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // band-limited by a two-tap smoother, full-scale
        let raw: Vec<f64> = (0..16001).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let noise: Vec<f64> = raw.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        let w = Waveform::new(noise.clone(), 16000).unwrap();
        let d = vad_classify(&w, 30, 2).unwrap();
        // oracle: per-frame energy computed independently
        let oracle = noise
            .chunks_exact(480)
            .filter(|f| {
                let e = f.iter().map(|x| x * x).sum::<f64>() / 480.0;
                10.0 * e.log10() >= -50.0
            })
            .count();
        let speech = d.decisions.iter().filter(|&&x| x == Speech).count();
        assert_eq!(speech, oracle);
        assert!(speech * 2 > d.decisions.len());
    }

    #[test]
    fn empty_waveform_gives_no_decisions() {
        let d = vad_classify(&Waveform::new(vec![], 16000).unwrap(), 30, 2).unwrap();
        assert!(d.decisions.is_empty());
    }

    #[test]
    fn unsupported_formats_are_rejected() {
        assert!(vad_classify(&Waveform::silence(1.0, 22050), 30, 2).is_err());
        assert!(vad_classify(&Waveform::silence(1.0, 16000), 25, 2).is_err());
        assert!(vad_classify(&Waveform::silence(1.0, 16000), 30, 4).is_err());
    }

    #[test]
    fn aggregation_edge_cases() {
        let all = decisions(&[(Speech, 40)]);
        assert_eq!(aggregate_segments(&all, 5, 0.8), vec![(0.0, 1.2)]);
        let none = decisions(&[(Nonspeech, 40)]);
        assert!(aggregate_segments(&none, 5, 0.8).is_empty());
    }

    #[test]
    fn aggregation_two_bursts() {
        let d = decisions(&[(Speech, 10), (Nonspeech, 20), (Speech, 10)]);
        let segs = aggregate_segments(&d, 5, 0.8);
        assert_eq!(segs.len(), 2);
        assert!((segs[0].0 - 0.0).abs() < 1e-12 && (segs[0].1 - 0.3).abs() < 1e-12);
        assert!((segs[1].0 - 0.9).abs() < 1e-12 && (segs[1].1 - 1.2).abs() < 1e-12);
        assert!((segs[1].0 - segs[0].1 - 0.6).abs() < 1e-9);
    }

    #[test]
    fn remove_silence_cases() {
        let w = Waveform::new((0..48000).map(|i| (i as f64 * 0.01).sin()).collect(), 16000).unwrap();
        let (same, map) = remove_silence(&w, &[(0.0, 3.0)]).unwrap();
        assert_eq!(same, w);
        assert_eq!(map, AlignmentMap::identity(3.0));
        let (two, map) = remove_silence(&w, &[(0.0, 1.0), (2.0, 3.0)]).unwrap();
        assert_eq!(two.duration_s(), 2.0);
        assert_eq!(two.samples()[16000], w.samples()[32000]);
        assert_eq!(map.kept_spans, vec![(0.0, 1.0), (2.0, 3.0)]);
        let (empty, map) = remove_silence(&w, &[]).unwrap();
        assert!(empty.is_empty() && map.kept_spans.is_empty());
    }

    #[test]
    fn mapping_back_to_the_original_timeline() {
        let id = AlignmentMap::identity(3.0);
        assert_eq!(id.map_to_original(1.7).unwrap(), 1.7);
        let map = AlignmentMap {
            kept_spans: vec![(0.0, 1.0), (2.0, 3.0)],
        };
        assert_eq!(map.map_to_original(1.5).unwrap(), 2.5);
        assert_eq!(map.map_to_original(0.0).unwrap(), 0.0);
        assert_eq!(map.map_to_original(1.0).unwrap(), 1.0);
        assert!(matches!(map.map_to_original(2.5), Err(Error::Range(_))));
        assert_eq!(map.map_to_trimmed(2.5), 1.5);
        assert_eq!(map.map_to_trimmed(1.5), 1.0);
        let shifted = AlignmentMap {
            kept_spans: vec![(0.4, 1.0)],
        };
        assert_eq!(shifted.map_to_original(0.0).unwrap(), 0.4);
    }

    struct StubAsr(Transcript);
    impl AsrClient for StubAsr {
        fn transcribe(&self, _: &Waveform) -> ClientResult<Transcript> {
            Ok(self.0.clone())
        }
    }

    struct DownAsr;
    impl AsrClient for DownAsr {
        fn transcribe(&self, _: &Waveform) -> ClientResult<Transcript> {
            Err(ClientError::Unreachable("asr".into()))
        }
    }

    #[test]
    fn transcription_paths() {
        let w = Waveform::silence(1.0, 16000);
        let fixed = Transcript {
            text: "hello there".into(),
            char_timings: None,
        };
        assert_eq!(transcribe(&StubAsr(fixed.clone()), &w).unwrap(), fixed);
        let empty = Transcript::default();
        assert_eq!(transcribe(&StubAsr(empty), &w).unwrap().text, "");
        assert!(matches!(transcribe(&DownAsr, &w), Err(Error::Client(_))));
    }
}
