//! Sentence-wise speech construction: reference lookup, synthesis gated by an
//! emotion-consistency check, loudness equalization and concatenation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::clients::{SerClient, TtsClient};
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{EmotionLabel, TimedSegment};

/// RMS below this (full scale) counts as silence.
pub const SILENCE_EPSILON: f64 = 1e-4;
pub const DEFAULT_MAX_ATTEMPTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub speaker_id: String,
    pub emotion: EmotionLabel,
    pub key: String,
}

/// Emotional reference prompts per (speaker, emotion).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<ReferenceEntry>", into = "Vec<ReferenceEntry>")]
pub struct ReferenceCatalog {
    entries: BTreeMap<(String, EmotionLabel), String>,
}

impl From<Vec<ReferenceEntry>> for ReferenceCatalog {
    fn from(v: Vec<ReferenceEntry>) -> Self {
        Self {
            entries: v
                .into_iter()
                .map(|e| ((e.speaker_id, e.emotion), e.key))
                .collect(),
        }
    }
}

impl From<ReferenceCatalog> for Vec<ReferenceEntry> {
    fn from(c: ReferenceCatalog) -> Self {
        c.entries
            .into_iter()
            .map(|((speaker_id, emotion), key)| ReferenceEntry {
                speaker_id,
                emotion,
                key,
            })
            .collect()
    }
}

impl ReferenceCatalog {
    pub fn insert(&mut self, speaker_id: &str, emotion: EmotionLabel, key: impl Into<String>) {
        self.entries
            .insert((speaker_id.to_string(), emotion), key.into());
    }

    /// Catalog for the offline voice, keyed `synthetic://<speaker>/<emotion>`.
    pub fn synthetic<S: AsRef<str>>(speakers: &[S]) -> Self {
        let mut c = Self::default();
        for s in speakers {
            for e in EmotionLabel::ALL {
                c.insert(s.as_ref(), e, format!("synthetic://{}/{}", s.as_ref(), e));
            }
        }
        c
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(s, _)| s.as_str()).collect()
    }

    /// Every listed speaker must have all five emotions.
    pub fn validate_complete(&self) -> Result<()> {
        for s in self.speakers() {
            for e in EmotionLabel::ALL {
                if !self.entries.contains_key(&(s.to_string(), e)) {
                    return Err(Error::Catalog {
                        speaker: s.to_string(),
                        emotion: e,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn select_reference(&self, speaker_id: &str, emotion: EmotionLabel) -> Result<&str> {
        self.entries
            .get(&(speaker_id.to_string(), emotion))
            .map(String::as_str)
            .ok_or_else(|| Error::Catalog {
                speaker: speaker_id.to_string(),
                emotion,
            })
    }
}

pub fn select_reference<'c>(
    catalog: &'c ReferenceCatalog,
    speaker_id: &str,
    emotion: EmotionLabel,
) -> Result<&'c str> {
    catalog.select_reference(speaker_id, emotion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    pub waveform: Waveform,
    /// 1-based attempt that passed the consistency check.
    pub attempts: usize,
    pub seed: u64,
}

/// Synthesizes `text` until the SER client agrees with `emotion`, at most
/// `max_attempts` times. Attempt `n` uses `derive_seed(base_seed, "tts", n)`.
pub fn synthesize_with_retry(
    tts: &dyn TtsClient,
    ser: &dyn SerClient,
    text: &str,
    emotion: EmotionLabel,
    reference: &str,
    max_attempts: usize,
    base_seed: u64,
) -> Result<SynthesisOutcome> {
    if max_attempts == 0 {
        return Err(Error::InvalidInput("max_attempts must be at least 1".into()));
    }
    for attempt in 1..=max_attempts {
        let seed = seed::derive_seed(base_seed, "tts", attempt as u64);
        let waveform = tts.synthesize(text, reference, seed)?;
        let verdict = ser.classify(&waveform)?;
        if verdict.emotion == emotion {
            return Ok(SynthesisOutcome {
                waveform,
                attempts: attempt,
                seed,
            });
        }
        log::debug!(
            "attempt {attempt}: wanted {emotion}, SER heard {} ({:.2})",
            verdict.emotion,
            verdict.score
        );
    }
    Err(Error::Consistency {
        target: emotion,
        attempts: max_attempts,
    })
}

/// Scales every non-silent segment to the mean RMS of the non-silent inputs.
pub fn normalize_loudness(segments: &[Waveform]) -> Result<Vec<Waveform>> {
    if let Some(i) = segments.iter().position(Waveform::is_empty) {
        return Err(Error::Normalization(format!("segment {i} is empty")));
    }
    let levels: Vec<f64> = segments.iter().map(Waveform::rms).collect();
    let voiced: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|&r| r >= SILENCE_EPSILON)
        .collect();
    if voiced.is_empty() {
        return Err(Error::Normalization("every segment is silent".into()));
    }
    let target = voiced.iter().sum::<f64>() / voiced.len() as f64;
    Ok(segments
        .iter()
        .zip(&levels)
        .map(|(w, &r)| {
            if r < SILENCE_EPSILON {
                w.clone()
            } else {
                w.scaled(target / r)
            }
        })
        .collect())
}

/// Joins segments end to end and reports where each one landed.
pub fn concatenate(
    segments: &[Waveform],
    emotions: &[EmotionLabel],
) -> Result<(Waveform, Vec<TimedSegment>)> {
    concatenate_with_ramp(segments, emotions, None)
}

/// Like [`concatenate`], optionally applying a linear fade of `ramp_s` on
/// both sides of every internal join. The ramp never changes lengths.
pub fn concatenate_with_ramp(
    segments: &[Waveform],
    emotions: &[EmotionLabel],
    ramp_s: Option<f64>,
) -> Result<(Waveform, Vec<TimedSegment>)> {
    if segments.len() != emotions.len() {
        return Err(Error::InvalidInput(format!(
            "{} segments but {} emotions",
            segments.len(),
            emotions.len()
        )));
    }
    let Some(first) = segments.first() else {
        return Err(Error::InvalidInput("nothing to concatenate".into()));
    };
    let sr = first.sample_rate();
    if let Some(w) = segments.iter().find(|w| w.sample_rate() != sr) {
        return Err(Error::Format(format!(
            "mixed sample rates: {sr} Hz and {} Hz",
            w.sample_rate()
        )));
    }
    if let Some(i) = emotions.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(format!(
            "emotion {} repeats at position {}",
            emotions[i],
            i + 1
        )));
    }
    if let Some(i) = segments.iter().position(Waveform::is_empty) {
        return Err(Error::InvalidInput(format!("segment {i} is empty")));
    }
    let total: usize = segments.iter().map(Waveform::len).sum();
    let mut samples = Vec::with_capacity(total);
    let mut timeline = Vec::with_capacity(segments.len());
    let n = segments.len();
    for (i, (w, &emotion)) in segments.iter().zip(emotions).enumerate() {
        let start = samples.len();
        samples.extend_from_slice(w.samples());
        if let Some(r) = ramp_s {
            let ramp = ((r * f64::from(sr)) as usize).min(w.len() / 2);
            let seg = &mut samples[start..];
            for j in 0..ramp {
                let g = j as f64 / ramp as f64;
                if i > 0 {
                    seg[j] *= g;
                }
                if i + 1 < n {
                    let len = seg.len();
                    seg[len - 1 - j] *= g;
                }
            }
        }
        timeline.push(TimedSegment {
            start_s: start as f64 / f64::from(sr),
            end_s: samples.len() as f64 / f64::from(sr),
            emotion,
        });
    }
    Ok((Waveform::new(samples, sr)?, timeline))
}
