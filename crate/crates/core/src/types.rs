use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attributes::AttributeSequence;
use crate::error::{Error, Result};

/// The five basic emotions covered by the dataset.
///
/// Variants are declared in alphabetical order of their canonical names, so the
/// derived `Ord` and [`EmotionLabel::index`] both follow lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionLabel {
    Angry,
    Happy,
    Neutral,
    Sad,
    Surprised,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 5] = [
        EmotionLabel::Angry,
        EmotionLabel::Happy,
        EmotionLabel::Neutral,
        EmotionLabel::Sad,
        EmotionLabel::Surprised,
    ];

    pub const COUNT: usize = 5;

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "angry",
            EmotionLabel::Happy => "happy",
            EmotionLabel::Neutral => "neutral",
            EmotionLabel::Sad => "sad",
            EmotionLabel::Surprised => "surprised",
        }
    }

    /// Class index used for frame-level labels.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    /// Capitalized name used in timestamp annotations (`emotion: "Sadness"`).
    pub fn annotation_name(self) -> &'static str {
        match self {
            EmotionLabel::Angry => "Angry",
            EmotionLabel::Happy => "Happy",
            EmotionLabel::Neutral => "Neutral",
            EmotionLabel::Sad => "Sadness",
            EmotionLabel::Surprised => "Surprised",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == lower || e.annotation_name().eq_ignore_ascii_case(&lower))
            .ok_or_else(|| Error::Parse(format!("unknown emotion `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::En, Language::Zh];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "zh" => Ok(Language::Zh),
            other => Err(Error::Parse(format!("unknown language `{other}`"))),
        }
    }
}

/// Ordered emotion sequence with no two adjacent entries equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<EmotionLabel>", into = "Vec<EmotionLabel>")]
pub struct TransitionPlan(Vec<EmotionLabel>);

impl TransitionPlan {
    pub fn new(emotions: Vec<EmotionLabel>) -> Result<Self> {
        if emotions.is_empty() {
            return Err(Error::validation("plan", "a plan needs at least one emotion"));
        }
        if let Some(i) = emotions.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::validation(
                format!("plan[{}]", i + 1),
                format!("repeats the previous emotion `{}`", emotions[i]),
            ));
        }
        Ok(Self(emotions))
    }

    /// Collapses adjacent duplicates before validating.
    pub fn from_collapsed<I: IntoIterator<Item = EmotionLabel>>(emotions: I) -> Result<Self> {
        let mut out: Vec<EmotionLabel> = Vec::new();
        for e in emotions {
            if out.last() != Some(&e) {
                out.push(e);
            }
        }
        Self::new(out)
    }

    pub fn emotions(&self) -> &[EmotionLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.0.len() - 1
    }
}

impl TryFrom<Vec<EmotionLabel>> for TransitionPlan {
    type Error = Error;

    fn try_from(value: Vec<EmotionLabel>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<TransitionPlan> for Vec<EmotionLabel> {
    fn from(plan: TransitionPlan) -> Self {
        plan.0
    }
}

impl fmt::Display for TransitionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|e| e.as_str()).collect();
        f.write_str(&names.join(" -> "))
    }
}

/// A time span carrying one emotion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub emotion: EmotionLabel,
}

impl TimedSegment {
    pub fn new(start_s: f64, end_s: f64, emotion: EmotionLabel) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) || start_s < 0.0 || end_s <= start_s {
            return Err(Error::validation(
                "segment",
                format!("invalid span {start_s}..{end_s}"),
            ));
        }
        Ok(Self {
            start_s,
            end_s,
            emotion,
        })
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Checks the list invariants: sorted, non-overlapping, adjacent emotions distinct.
pub fn validate_segments(segments: &[TimedSegment]) -> Result<()> {
    for (i, s) in segments.iter().enumerate() {
        TimedSegment::new(s.start_s, s.end_s, s.emotion)
            .map_err(|_| Error::validation(format!("segments[{i}]"), "end must exceed start"))?;
    }
    for (i, w) in segments.windows(2).enumerate() {
        if w[1].start_s < w[0].end_s - 1e-9 {
            return Err(Error::validation(
                format!("segments[{}].start_s", i + 1),
                "overlaps the previous segment",
            ));
        }
        if w[0].emotion == w[1].emotion {
            return Err(Error::validation(
                format!("segments[{}].emotion", i + 1),
                "repeats the previous emotion",
            ));
        }
    }
    Ok(())
}

/// Formats seconds as zero-padded `MM:SS`, flooring to the whole second.
pub fn format_timestamp(t: f64) -> Result<String> {
    if !t.is_finite() || !(0.0..3600.0).contains(&t) {
        return Err(Error::Range(format!("timestamp {t} outside [0, 3600)")));
    }
    let secs = t.floor() as u64;
    Ok(format!("{:02}:{:02}", secs / 60, secs % 60))
}

/// Parses `MM:SS` back to seconds.
pub fn parse_timestamp(s: &str) -> Result<f64> {
    let (m, sec) = s
        .trim()
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("timestamp `{s}` is not MM:SS")))?;
    let m: u32 = m
        .parse()
        .map_err(|_| Error::Parse(format!("bad minutes in `{s}`")))?;
    let sec: u32 = sec
        .parse()
        .map_err(|_| Error::Parse(format!("bad seconds in `{s}`")))?;
    if sec >= 60 || m >= 60 {
        return Err(Error::Parse(format!("timestamp `{s}` out of range")));
    }
    Ok(f64::from(m * 60 + sec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    pub emotion: EmotionLabel,
    pub start_s: f64,
    pub end_s: f64,
    pub audio_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub v_i: String,
    pub v_d: String,
    pub encoded_plan: TransitionPlan,
}

/// Persistent record of one discourse-level utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceManifest {
    pub id: String,
    pub language: Language,
    pub speaker_id: String,
    pub plan: TransitionPlan,
    pub sentences: Vec<SentenceRecord>,
    pub discourse_audio_ref: String,
    #[serde(default)]
    pub captions: Option<CaptionRecord>,
    #[serde(default)]
    pub attributes: Option<AttributeSequence>,
    pub seed: u64,
    /// Fields written by other tools; carried through untouched.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

const TIMING_SLACK_S: f64 = 1e-6;

impl UtteranceManifest {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("id", "must not be empty"));
        }
        if self.sentences.is_empty() {
            return Err(Error::validation("sentences", "must not be empty"));
        }
        let mut prev_end = 0.0;
        for (i, s) in self.sentences.iter().enumerate() {
            if s.text.trim().is_empty() {
                return Err(Error::validation(format!("sentences[{i}].text"), "empty text"));
            }
            if (s.start_s - prev_end).abs() > TIMING_SLACK_S {
                return Err(Error::validation(
                    format!("sentences[{i}].start_s"),
                    format!("expected {prev_end}, found {}", s.start_s),
                ));
            }
            if !(s.end_s > s.start_s) {
                return Err(Error::validation(
                    format!("sentences[{i}].end_s"),
                    "must exceed start_s",
                ));
            }
            prev_end = s.end_s;
        }
        let collapsed = TransitionPlan::from_collapsed(self.sentences.iter().map(|s| s.emotion))?;
        if collapsed != self.plan {
            return Err(Error::validation(
                "plan",
                format!("sentences read as `{collapsed}` but plan is `{}`", self.plan),
            ));
        }
        if let Some(c) = &self.captions {
            TransitionPlan::new(c.encoded_plan.emotions().to_vec())
                .map_err(|_| Error::validation("captions.encoded_plan", "invalid plan"))?;
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.sentences.last().map_or(0.0, |s| s.end_s)
    }

    pub fn timed_segments(&self) -> Vec<TimedSegment> {
        let mut out: Vec<TimedSegment> = Vec::new();
        for s in &self.sentences {
            match out.last_mut() {
                Some(last) if last.emotion == s.emotion => last.end_s = s.end_s,
                _ => out.push(TimedSegment {
                    start_s: s.start_s,
                    end_s: s.end_s,
                    emotion: s.emotion,
                }),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    #[test]
    fn timestamps_floor_and_carry() {
        assert_eq!(format_timestamp(0.0).unwrap(), "00:00");
        assert_eq!(format_timestamp(5.0).unwrap(), "00:05");
        assert_eq!(format_timestamp(65.9).unwrap(), "01:05");
        assert_eq!(format_timestamp(3599.99).unwrap(), "59:59");
        assert!(matches!(format_timestamp(3600.0), Err(Error::Range(_))));
        assert!(matches!(format_timestamp(-0.1), Err(Error::Range(_))));
        assert!(format_timestamp(f64::NAN).is_err());
        assert_eq!(parse_timestamp("01:05").unwrap(), 65.0);
    }

    #[test]
    fn emotion_strings_are_canonical() {
        for e in EmotionLabel::ALL {
            assert_eq!(e.as_str().parse::<EmotionLabel>().unwrap(), e);
            assert_eq!(serde_json::to_string(&e).unwrap(), format!("\"{}\"", e.as_str()));
            assert_eq!(EmotionLabel::from_index(e.index()), Some(e));
        }
        assert_eq!("Sadness".parse::<EmotionLabel>().unwrap(), Sad);
        let mut sorted = EmotionLabel::ALL;
        sorted.sort_by_key(|e| e.as_str());
        assert_eq!(sorted, EmotionLabel::ALL);
    }

    #[test]
    fn plan_validation_is_exhaustively_correct() {
        // every sequence of length 1..=4 over the five emotions
        for len in 1..=4u32 {
            for code in 0..5usize.pow(len) {
                let mut c = code;
                let seq: Vec<_> = (0..len)
                    .map(|_| {
                        let e = EmotionLabel::ALL[c % 5];
                        c /= 5;
                        e
                    })
                    .collect();
                let ok = seq.windows(2).all(|w| w[0] != w[1]);
                assert_eq!(TransitionPlan::new(seq).is_ok(), ok);
            }
        }
        assert!(TransitionPlan::new(vec![]).is_err());
    }

    #[test]
    fn plan_serializes_as_list_and_rejects_repeats() {
        let plan = TransitionPlan::new(vec![Sad, Happy]).unwrap();
        assert_eq!(serde_json::to_string(&plan).unwrap(), r#"["sad","happy"]"#);
        assert!(serde_json::from_str::<TransitionPlan>(r#"["sad","sad"]"#).is_err());
        assert_eq!(plan.transition_count(), 1);
    }

    #[test]
    fn segment_list_invariants() {
        let a = TimedSegment::new(0.0, 5.0, Angry).unwrap();
        let b = TimedSegment::new(5.0, 8.0, Sad).unwrap();
        assert!(validate_segments(&[a, b]).is_ok());
        let c = TimedSegment::new(4.0, 8.0, Sad).unwrap();
        assert!(validate_segments(&[a, c]).is_err());
        let d = TimedSegment::new(5.0, 8.0, Angry).unwrap();
        assert!(validate_segments(&[a, d]).is_err());
        assert!(TimedSegment::new(3.0, 3.0, Angry).is_err());
    }
}
