//! Deterministic offline implementations of every client trait.
//!
//! The tone voice renders each syllable as a harmonic tone whose spectral
//! rolloff, level, pitch and tempo depend on the emotion; the tone classifier
//! inverts the rolloff from the centroid-to-F0 ratio. Together they give the
//! pipeline a closed loop without any model weights.

use std::f64::consts::PI;

use rand::Rng;

use crate::attributes::{estimate_pitch, is_cjk, SpeakerProfile};
use crate::audio::Waveform;
use crate::clients::{
    AsrClient, CharTiming, ClientResult, EmbedderClient, ProfileClient, SerClient, SerPrediction,
    Transcript, TtsClient,
};
use crate::error::ClientError;
use crate::features::{frame_descriptors, spectral_centroid, DESCRIPTOR_DIM};
use crate::metrics::EmbeddingVector;
use crate::seed;
use crate::types::EmotionLabel;

pub use crate::features::DescriptorExtractor;

pub const HARMONICS: usize = 10;
const LEAD_S: f64 = 0.12;
const WORD_GAP_S: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneStyle {
    pub f0_factor: f64,
    pub amplitude: f64,
    pub rolloff: f64,
    pub syllable_s: f64,
}

pub fn tone_style(e: EmotionLabel) -> ToneStyle {
    let (f0_factor, amplitude, rolloff, syllable_s) = match e {
        EmotionLabel::Angry => (1.15, 0.55, 0.3, 0.16),
        EmotionLabel::Happy => (1.3, 0.45, 1.3, 0.18),
        EmotionLabel::Neutral => (1.0, 0.3, 1.9, 0.22),
        EmotionLabel::Sad => (0.85, 0.2, 2.7, 0.3),
        EmotionLabel::Surprised => (1.45, 0.4, 0.8, 0.2),
    };
    ToneStyle {
        f0_factor,
        amplitude,
        rolloff,
        syllable_s,
    }
}

/// Centroid-to-F0 ratio of a harmonic tone with amplitude rolloff `r`.
pub fn prototype_ratio(rolloff: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for h in 1..=HARMONICS {
        let p = (h as f64).powf(-2.0 * rolloff);
        num += h as f64 * p;
        den += p;
    }
    num / den
}

/// Speaker base pitch in 100..200 Hz, fixed per speaker id.
pub fn speaker_f0(speaker: &str) -> f64 {
    100.0 + (seed::derive_seed(0, speaker, 0) % 1000) as f64 / 10.0
}

/// Parses `synthetic://<speaker>/<emotion>`.
pub fn parse_reference_key(key: &str) -> Option<(String, EmotionLabel)> {
    let rest = key.strip_prefix("synthetic://")?;
    let (speaker, emotion) = rest.rsplit_once('/')?;
    Some((speaker.to_string(), emotion.parse().ok()?))
}

fn syllables(word: &str) -> usize {
    let mut count = 0;
    let mut in_vowel = false;
    for c in word.chars().flat_map(char::to_lowercase) {
        let v = "aeiouy".contains(c);
        if v && !in_vowel {
            count += 1;
        }
        in_vowel = v;
    }
    count.max(1)
}

/// Syllable counts per spoken word (CJK characters are one word each).
fn word_syllables(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for token in text.split_whitespace() {
        let mut latin = String::new();
        for c in token.chars() {
            if is_cjk(c) {
                if !latin.is_empty() {
                    out.push(syllables(&latin));
                    latin.clear();
                }
                out.push(1);
            } else if c.is_alphanumeric() {
                latin.push(c);
            }
        }
        if !latin.is_empty() {
            out.push(syllables(&latin));
        }
    }
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Harmonic-tone voice keyed by `synthetic://` references.
#[derive(Debug, Clone)]
pub struct ToneVoice {
    pub sample_rate: u32,
}

impl Default for ToneVoice {
    fn default() -> Self {
        Self { sample_rate: 16000 }
    }
}

impl ToneVoice {
    pub fn render(&self, text: &str, speaker: &str, emotion: EmotionLabel, seed: u64) -> Waveform {
        let sr = f64::from(self.sample_rate);
        let style = tone_style(emotion);
        let base = speaker_f0(speaker) * style.f0_factor;
        let mut rng = seed::rng(seed);
        let norm: f64 = (1..=HARMONICS).map(|h| (h as f64).powf(-style.rolloff)).sum();
        let lead = (LEAD_S * sr) as usize;
        let gap = (WORD_GAP_S * sr) as usize;
        let syl = (style.syllable_s * sr) as usize;
        let ramp = (0.015 * sr) as usize;
        let mut out = vec![0.0; lead];
        let mut phase = 0.0f64;
        for (wi, n) in word_syllables(text).into_iter().enumerate() {
            if wi > 0 {
                out.extend(std::iter::repeat(0.0).take(gap));
            }
            for _ in 0..n {
                let f0 = base * (1.0 + rng.gen_range(-0.03..0.03));
                for i in 0..syl {
                    let env = if i < ramp {
                        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
                    } else if i >= syl - ramp {
                        0.5 - 0.5 * (PI * (syl - i) as f64 / ramp as f64).cos()
                    } else {
                        1.0
                    };
                    let mut v = 0.0;
                    for h in 1..=HARMONICS {
                        let f = f0 * h as f64;
                        if f >= sr / 2.0 {
                            break;
                        }
                        v += (h as f64).powf(-style.rolloff) * (h as f64 * phase).sin();
                    }
                    out.push(style.amplitude * env * v / norm);
                    phase += 2.0 * PI * f0 / sr;
                }
            }
        }
        out.extend(std::iter::repeat(0.0).take(lead));
        Waveform::new(out, self.sample_rate).expect("finite samples")
    }
}

impl TtsClient for ToneVoice {
    fn synthesize(&self, text: &str, reference_key: &str, seed: u64) -> ClientResult<Waveform> {
        let (speaker, emotion) = parse_reference_key(reference_key)
            .ok_or_else(|| ClientError::Protocol(format!("unknown reference `{reference_key}`")))?;
        Ok(self.render(text, &speaker, emotion, seed))
    }
}

/// Emotion classifier matched to [`ToneVoice`].
#[derive(Debug, Clone, Default)]
pub struct ToneSer;

impl SerClient for ToneSer {
    fn classify(&self, waveform: &Waveform) -> ClientResult<SerPrediction> {
        let f0 = estimate_pitch(waveform).map_err(|e| ClientError::Service(e.to_string()))?;
        let ratio = spectral_centroid(waveform) / f0;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(ClientError::Service("no spectral energy".into()));
        }
        let distances: Vec<(EmotionLabel, f64)> = EmotionLabel::ALL
            .iter()
            .map(|&e| (e, (ratio.ln() - prototype_ratio(tone_style(e).rolloff).ln()).abs()))
            .collect();
        let (emotion, best) = distances
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("five emotions");
        let z: f64 = distances.iter().map(|(_, d)| (-(d - best) * 10.0).exp()).sum();
        Ok(SerPrediction {
            emotion,
            score: (1.0 / z) as f32,
        })
    }
}

/// Transcript known in advance, with character timings spread uniformly over
/// each sentence span.
#[derive(Debug, Clone)]
pub struct ManifestAsr {
    sentences: Vec<(String, f64, f64)>,
}

impl ManifestAsr {
    pub fn new(sentences: Vec<(String, f64, f64)>) -> Self {
        Self { sentences }
    }

    pub fn transcript(&self) -> Transcript {
        let mut text = String::new();
        let mut timings = Vec::new();
        for (i, (s, start, end)) in self.sentences.iter().enumerate() {
            if i > 0 {
                text.push(' ');
            }
            text.push_str(s);
            let chars: Vec<char> = s.chars().collect();
            let step = (end - start) / chars.len().max(1) as f64;
            timings.extend(chars.iter().enumerate().map(|(j, &ch)| CharTiming {
                ch,
                start_s: start + j as f64 * step,
                end_s: start + (j + 1) as f64 * step,
            }));
        }
        Transcript {
            text,
            char_timings: Some(timings),
        }
    }
}

impl AsrClient for ManifestAsr {
    fn transcribe(&self, _: &Waveform) -> ClientResult<Transcript> {
        Ok(self.transcript())
    }
}

/// Returns the same transcript for every input.
#[derive(Debug, Clone, Default)]
pub struct FixedAsr(pub Transcript);

impl AsrClient for FixedAsr {
    fn transcribe(&self, _: &Waveform) -> ClientResult<Transcript> {
        Ok(self.0.clone())
    }
}

/// Mean frame descriptor over voiced frames, unit-normalized.
#[derive(Debug, Clone)]
pub struct ToneEmbedder {
    pub frame_rate: f64,
}

impl Default for ToneEmbedder {
    fn default() -> Self {
        Self { frame_rate: 50.0 }
    }
}

impl EmbedderClient for ToneEmbedder {
    fn embed(&self, waveform: &Waveform) -> ClientResult<EmbeddingVector> {
        let rows = frame_descriptors(waveform, self.frame_rate);
        let voiced: Vec<&[f32; DESCRIPTOR_DIM]> = rows.iter().filter(|r| r[DESCRIPTOR_DIM - 1] > 0.0).collect();
        let pool: Vec<&[f32; DESCRIPTOR_DIM]> = if voiced.is_empty() { rows.iter().collect() } else { voiced };
        let mut mean = vec![0.0f64; DESCRIPTOR_DIM + 1];
        for r in &pool {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += f64::from(*v) / pool.len() as f64;
            }
        }
        mean[DESCRIPTOR_DIM] = 1e-3;
        EmbeddingVector::normalized(mean).map_err(|e| ClientError::Service(e.to_string()))
    }
}

/// Profile read from metadata rather than inferred from audio.
#[derive(Debug, Clone, Copy, Default)]
pub struct MetadataProfile(pub SpeakerProfile);

impl ProfileClient for MetadataProfile {
    fn profile(&self, _: &Waveform) -> ClientResult<SpeakerProfile> {
        Ok(self.0)
    }
}
