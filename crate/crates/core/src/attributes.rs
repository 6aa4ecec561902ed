//! Speaking-style measurements per emotional segment.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::types::{EmotionLabel, Language, TimedSegment, TransitionPlan};

pub const ENERGY_FLOOR_DB: f64 = -120.0;
pub const PITCH_MIN_HZ: f64 = 60.0;
pub const PITCH_MAX_HZ: f64 = 400.0;
const VOICING_THRESHOLD: f64 = 0.6;
const MAX_PITCH_FRAMES: usize = 200;

/// Mean F0 over voiced frames by normalized autocorrelation in 60-400 Hz.
pub fn estimate_pitch(waveform: &Waveform) -> Result<f64> {
    let sr = f64::from(waveform.sample_rate());
    let x = waveform.samples();
    let lag_min = (sr / PITCH_MAX_HZ).floor().max(2.0) as usize;
    let lag_max = (sr / PITCH_MIN_HZ).ceil() as usize;
    let win = (0.03 * sr) as usize;
    let span = win + lag_max + 1;
    if x.len() < span {
        return Err(Error::Unvoiced);
    }
    let available = x.len() - span + 1;
    let hop = ((0.02 * sr) as usize).max(available / MAX_PITCH_FRAMES).max(1);
    let mut f0s = Vec::new();
    let mut r = vec![0.0; lag_max + 2];
    for start in (0..available).step_by(hop) {
        let frame = &x[start..start + span];
        let e0: f64 = frame[..win].iter().map(|v| v * v).sum();
        if e0 <= 1e-12 * win as f64 {
            continue;
        }
        // running energy of the lagged window
        let mut el: f64 = frame[lag_min - 1..lag_min - 1 + win].iter().map(|v| v * v).sum();
        for lag in lag_min - 1..=lag_max + 1 {
            if lag >= lag_min {
                el += frame[lag + win - 1].powi(2) - frame[lag - 1].powi(2);
            }
            let cross: f64 = frame[..win]
                .iter()
                .zip(&frame[lag..lag + win])
                .map(|(a, b)| a * b)
                .sum();
            r[lag] = if el > 0.0 { cross / (e0 * el).sqrt() } else { 0.0 };
        }
        let best = (lag_min..=lag_max).map(|l| r[l]).fold(f64::MIN, f64::max);
        if best < VOICING_THRESHOLD {
            continue;
        }
        // shortest lag that is a local peak close to the global maximum
        let Some(lag) = (lag_min..=lag_max)
            .find(|&l| r[l] >= 0.9 * best && r[l] >= r[l - 1] && r[l] >= r[l + 1])
        else {
            continue;
        };
        let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom.abs() > 1e-12 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        f0s.push(sr / (lag as f64 + shift));
    }
    if f0s.is_empty() {
        return Err(Error::Unvoiced);
    }
    Ok(f0s.iter().sum::<f64>() / f0s.len() as f64)
}

/// RMS level in dBFS, floored at [`ENERGY_FLOOR_DB`].
pub fn estimate_energy(waveform: &Waveform) -> f64 {
    let r = waveform.rms();
    if r <= 0.0 {
        return ENERGY_FLOOR_DB;
    }
    (20.0 * r.log10()).max(ENERGY_FLOOR_DB)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub units_per_s: f64,
    /// Set when the transcript had no countable units.
    pub empty_transcript: bool,
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2EBEF)
}

/// Words (en) or CJK characters (zh).
pub fn count_units(text: &str, language: Language) -> usize {
    match language {
        Language::En => text.split_whitespace().count(),
        Language::Zh => text.chars().filter(|&c| is_cjk(c)).count(),
    }
}

pub fn estimate_speed(transcript: &str, duration_s: f64, language: Language) -> Result<SpeedEstimate> {
    if !(duration_s > 0.0) {
        return Err(Error::InvalidInput(format!("duration {duration_s} must be positive")));
    }
    let units = count_units(transcript, language);
    if units == 0 {
        log::warn!("empty transcript; speaking rate reported as 0");
    }
    Ok(SpeedEstimate {
        units_per_s: units as f64 / duration_s,
        empty_transcript: units == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Medium => "medium",
            Level::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Slow,
    Medium,
    Fast,
}

impl Speed {
    pub fn as_str(self) -> &'static str {
        match self {
            Speed::Slow => "slow",
            Speed::Medium => "medium",
            Speed::Fast => "fast",
        }
    }
}

/// Half-open band: `[low, high)` is the middle category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn classify(&self, x: f64) -> Level {
        if x < self.low {
            Level::Low
        } else if x < self.high {
            Level::Medium
        } else {
            Level::High
        }
    }

    /// Tertile cut points of a sample.
    pub fn tertiles(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (i, frac) = (pos.floor() as usize, pos.fract());
            let next = v[(i + 1).min(v.len() - 1)];
            v[i] + frac * (next - v[i])
        };
        Some(Self {
            low: q(1.0 / 3.0),
            high: q(2.0 / 3.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeThresholds {
    pub pitch_hz: Band,
    pub energy_db: Band,
    pub speed_en: Band,
    pub speed_zh: Band,
}

impl Default for AttributeThresholds {
    fn default() -> Self {
        Self {
            pitch_hz: Band {
                low: 140.0,
                high: 220.0,
            },
            energy_db: Band {
                low: -30.0,
                high: -20.0,
            },
            speed_en: Band { low: 2.5, high: 4.0 },
            speed_zh: Band { low: 3.5, high: 5.5 },
        }
    }
}

impl AttributeThresholds {
    pub fn speed(&self, language: Language, units_per_s: f64) -> Speed {
        let band = match language {
            Language::En => self.speed_en,
            Language::Zh => self.speed_zh,
        };
        match band.classify(units_per_s) {
            Level::Low => Speed::Slow,
            Level::Medium => Speed::Medium,
            Level::High => Speed::Fast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBucket {
    Child,
    Teenager,
    YoungAdult,
    MiddleAged,
    Senior,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub gender: Gender,
    pub age_bucket: AgeBucket,
}

impl SpeakerProfile {
    pub fn is_unknown(&self) -> bool {
        self.gender == Gender::Unknown && self.age_bucket == AgeBucket::Unknown
    }
}

/// Raw measurements for one segment before categorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnalysis {
    pub start_s: f64,
    pub end_s: f64,
    pub emotion: EmotionLabel,
    pub transcript: String,
    pub pitch_hz: f64,
    pub energy_db: f64,
    pub speed_ups: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAttributes {
    pub start_s: f64,
    pub end_s: f64,
    pub emotion: EmotionLabel,
    pub transcript: String,
    pub pitch_hz: f64,
    pub pitch_cat: Level,
    pub energy_db: f64,
    pub energy_cat: Level,
    pub speed_ups: f64,
    pub speed_cat: Speed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSequence {
    pub profile: SpeakerProfile,
    pub segments: Vec<SegmentAttributes>,
}

impl AttributeSequence {
    pub fn plan(&self) -> Result<TransitionPlan> {
        TransitionPlan::from_collapsed(self.segments.iter().map(|s| s.emotion))
    }
}

/// Measures one slice of audio.
pub fn analyze_segment(
    waveform: &Waveform,
    segment: &TimedSegment,
    transcript: &str,
    language: Language,
) -> Result<SegmentAnalysis> {
    let piece = waveform.slice_s(segment.start_s, segment.end_s);
    let pitch_hz = match estimate_pitch(&piece) {
        Ok(f0) => f0,
        Err(Error::Unvoiced) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(SegmentAnalysis {
        start_s: segment.start_s,
        end_s: segment.end_s,
        emotion: segment.emotion,
        transcript: transcript.to_string(),
        pitch_hz,
        energy_db: estimate_energy(&piece),
        speed_ups: estimate_speed(transcript, segment.duration(), language)?.units_per_s,
    })
}

/// Orders analyses along the segment list, derives categories, and (when a
/// plan is given) checks the emotion order against it.
pub fn build_attribute_sequence(
    language: Language,
    expected_plan: Option<&TransitionPlan>,
    segments: &[TimedSegment],
    analyses: &[SegmentAnalysis],
    profile: SpeakerProfile,
    thresholds: &AttributeThresholds,
) -> Result<AttributeSequence> {
    if analyses.len() != segments.len() {
        return Err(Error::Alignment(format!(
            "{} analyses for {} segments",
            analyses.len(),
            segments.len()
        )));
    }
    let mut ordered: Vec<&SegmentAnalysis> = analyses.iter().collect();
    ordered.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut out = Vec::with_capacity(segments.len());
    for (i, (seg, a)) in segments.iter().zip(ordered).enumerate() {
        if (seg.start_s - a.start_s).abs() > 1e-6 || (seg.end_s - a.end_s).abs() > 1e-6 {
            return Err(Error::Alignment(format!(
                "analysis {i} spans {}..{} but segment is {}..{}",
                a.start_s, a.end_s, seg.start_s, seg.end_s
            )));
        }
        if a.emotion != seg.emotion {
            return Err(Error::Alignment(format!(
                "analysis {i} is {} but segment is {}",
                a.emotion, seg.emotion
            )));
        }
        out.push(SegmentAttributes {
            start_s: a.start_s,
            end_s: a.end_s,
            emotion: a.emotion,
            transcript: a.transcript.clone(),
            pitch_hz: a.pitch_hz,
            pitch_cat: thresholds.pitch_hz.classify(a.pitch_hz),
            energy_db: a.energy_db,
            energy_cat: thresholds.energy_db.classify(a.energy_db),
            speed_ups: a.speed_ups,
            speed_cat: thresholds.speed(language, a.speed_ups),
        });
    }
    let seq = AttributeSequence {
        profile,
        segments: out,
    };
    if let Some(plan) = expected_plan {
        let found = seq.plan()?;
        if &found != plan {
            return Err(Error::Alignment(format!(
                "segments read as `{found}` but the plan is `{plan}`"
            )));
        }
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use EmotionLabel::*;

    fn harmonic(f0: f64, amp: f64, secs: f64) -> Waveform {
        let sr = 16000.0;
        let n = (secs * sr) as usize;
        Waveform::new(
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    amp * (1..=5)
                        .map(|h| (2.0 * PI * f0 * h as f64 * t).sin() / h as f64)
                        .sum::<f64>()
                        / 2.0
                })
                .collect(),
            16000,
        )
        .unwrap()
    }

    #[test]
    fn pitch_of_known_tones() {
        let p = estimate_pitch(&harmonic(220.0, 0.5, 1.0)).unwrap();
        assert!((p - 220.0).abs() <= 2.0, "{p}");
        let p = estimate_pitch(&harmonic(110.0, 0.5, 1.0)).unwrap();
        assert!((p - 110.0).abs() <= 2.0, "{p}");
        assert!(matches!(
            estimate_pitch(&Waveform::silence(1.0, 16000)),
            Err(Error::Unvoiced)
        ));
    }

    #[test]
    fn energy_of_reference_signals() {
        let square = Waveform::new((0..1600).map(|i| if i % 40 < 20 { 1.0 } else { -1.0 }).collect(), 16000).unwrap();
        assert!(estimate_energy(&square).abs() < 1e-12);
        let sine = Waveform::new(
            (0..16000).map(|i| 0.5 * (2.0 * PI * 100.0 * i as f64 / 16000.0).sin()).collect(),
            16000,
        )
        .unwrap();
        let expected = 20.0 * (0.5 / 2f64.sqrt()).log10();
        assert!((estimate_energy(&sine) - expected).abs() < 1e-6);
        assert!((expected + 9.03).abs() < 0.01);
        assert_eq!(estimate_energy(&Waveform::silence(1.0, 16000)), ENERGY_FLOOR_DB);
    }

    #[test]
    fn gain_shifts_energy_and_keeps_pitch() {
        let w = harmonic(180.0, 0.4, 0.8);
        for g in [0.1, 0.5, 2.0] {
            let scaled = w.scaled(g);
            let shift = estimate_energy(&scaled) - estimate_energy(&w);
            assert!((shift - 20.0 * g.log10()).abs() < 1e-6);
            let (a, b) = (estimate_pitch(&w).unwrap(), estimate_pitch(&scaled).unwrap());
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn speaking_rates() {
        let ten = "one two three four five six seven eight nine ten";
        assert_eq!(estimate_speed(ten, 5.0, Language::En).unwrap().units_per_s, 2.0);
        let zh = "今天天气很好我们一起去公园散步吧大家开心";
        assert_eq!(count_units(zh, Language::Zh), 20);
        assert_eq!(estimate_speed(zh, 4.0, Language::Zh).unwrap().units_per_s, 5.0);
        let empty = estimate_speed("", 3.0, Language::En).unwrap();
        assert_eq!(empty.units_per_s, 0.0);
        assert!(empty.empty_transcript);
        assert!(estimate_speed("a", 0.0, Language::En).is_err());
    }

    #[test]
    fn bands_are_half_open() {
        let t = AttributeThresholds::default();
        assert_eq!(t.pitch_hz.classify(139.999), Level::Low);
        assert_eq!(t.pitch_hz.classify(140.0), Level::Medium);
        assert_eq!(t.pitch_hz.classify(220.0), Level::High);
        assert_eq!(t.speed(Language::Zh, 3.5), Speed::Medium);
        assert_eq!(t.speed(Language::En, 4.1), Speed::Fast);
        let b = Band::tertiles(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(b.low < b.high);
    }

    fn analysis(start: f64, end: f64, emotion: EmotionLabel) -> SegmentAnalysis {
        SegmentAnalysis {
            start_s: start,
            end_s: end,
            emotion,
            transcript: "words here".into(),
            pitch_hz: 200.0,
            energy_db: -25.0,
            speed_ups: 3.0,
        }
    }

    #[test]
    fn attribute_sequence_assembly() {
        let segs = [
            TimedSegment::new(0.0, 5.0, Angry).unwrap(),
            TimedSegment::new(5.0, 8.0, Sad).unwrap(),
        ];
        let plan = TransitionPlan::new(vec![Angry, Sad]).unwrap();
        let t = AttributeThresholds::default();
        let a = vec![analysis(0.0, 5.0, Angry), analysis(5.0, 8.0, Sad)];
        let seq = build_attribute_sequence(Language::En, Some(&plan), &segs, &a, SpeakerProfile::default(), &t).unwrap();
        assert_eq!(seq.segments.len(), 2);
        assert_eq!(seq.segments[0].emotion, Angry);
        assert_eq!(seq.segments[0].pitch_cat, Level::Medium);
        let shuffled = vec![a[1].clone(), a[0].clone()];
        let again = build_attribute_sequence(Language::En, Some(&plan), &segs, &shuffled, SpeakerProfile::default(), &t).unwrap();
        assert_eq!(seq, again);
        let other = TransitionPlan::new(vec![Angry, Happy]).unwrap();
        assert!(matches!(
            build_attribute_sequence(Language::En, Some(&other), &segs, &a, SpeakerProfile::default(), &t),
            Err(Error::Alignment(_))
        ));
    }
}
