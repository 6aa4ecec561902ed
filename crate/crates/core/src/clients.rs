//! Interfaces to external models. Every pipeline stage talks to its model
//! through one of these traits; offline implementations live in
//! [`crate::fallback`].

use serde::{Deserialize, Serialize};

use crate::attributes::SpeakerProfile;
use crate::audio::Waveform;
use crate::error::ClientError;
use crate::features::FeatureSequence;
use crate::metrics::EmbeddingVector;
use crate::types::{EmotionLabel, Language};

pub type ClientResult<T> = std::result::Result<T, ClientError>;

/// Text generation (discourse texts and captions).
pub trait TextGenClient: Send + Sync {
    /// Returns the response split into lines.
    fn send(&self, prompt: &str, language: Language, seed: u64) -> ClientResult<Vec<String>>;
}

pub trait TtsClient: Send + Sync {
    fn synthesize(&self, text: &str, reference_key: &str, seed: u64) -> ClientResult<Waveform>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerPrediction {
    pub emotion: EmotionLabel,
    pub score: f32,
}

pub trait SerClient: Send + Sync {
    fn classify(&self, waveform: &Waveform) -> ClientResult<SerPrediction>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharTiming {
    pub ch: char,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    #[serde(default)]
    pub char_timings: Option<Vec<CharTiming>>,
}

pub trait AsrClient: Send + Sync {
    fn transcribe(&self, waveform: &Waveform) -> ClientResult<Transcript>;
}

pub trait EmbedderClient: Send + Sync {
    fn embed(&self, waveform: &Waveform) -> ClientResult<EmbeddingVector>;
}

pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, waveform: &Waveform) -> ClientResult<FeatureSequence>;
}

pub trait ProfileClient: Send + Sync {
    fn profile(&self, waveform: &Waveform) -> ClientResult<SpeakerProfile>;
}
