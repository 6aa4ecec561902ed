//! Core of the emotion-transition captioning pipeline.
//!
//! The crate is organised the way data flows through a dataset build:
//!
//! * [`types`] and [`manifest`] hold the shared domain model and its JSONL persistence.
//! * [`planner`] enumerates transition plans and produces discourse texts.
//! * [`builder`] synthesizes, gates, normalizes and concatenates sentence audio.
//! * [`preprocess`] removes silence while keeping a map back to the original timeline.
//! * [`attributes`] measures pitch, energy and speaking rate per emotional segment.
//! * [`caption`] and [`ssml`] turn attribute sequences into validated captions.
//! * [`metrics`] scores captions, diarization output and synthesized audio.
//!
//! External models (text generation, TTS, SER, ASR, embedders, feature extractors)
//! are reached only through the traits in [`clients`]; [`fallback`] provides
//! deterministic offline implementations of each.

pub mod attributes;
pub mod audio;
pub mod builder;
pub mod caption;
pub mod clients;
pub mod error;
pub mod fallback;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod planner;
pub mod preprocess;
pub mod seed;
pub mod ssml;
pub mod types;

pub use audio::Waveform;
pub use error::{ClientError, Error, Result};
pub use features::FeatureSequence;
pub use types::{
    format_timestamp, CaptionRecord, EmotionLabel, Language, SentenceRecord, TimedSegment,
    TransitionPlan, UtteranceManifest,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
