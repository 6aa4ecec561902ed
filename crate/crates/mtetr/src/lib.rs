//! Multi-task emotion transition recognition.
//!
//! Frame features pass through a kernel-1 residual stack, a Transformer
//! encoder and a bidirectional LSTM before two linear heads: 5-way emotion
//! diarization per frame and binary boundary detection per frame. The two
//! task losses are combined with learnable log-variances.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod synth;
pub mod targets;
pub mod train;

pub use config::{ModelConfig, SmoothingConfig, TrainConfig, FRAME_RATE};
pub use decode::{decode, format_segments};
pub use error::{Error, Result};
pub use loss::{uncertainty_grad, uncertainty_loss, UncertaintyState};
pub use model::{Mtetr, Prediction};
pub use targets::{make_frame_targets, FrameTargets};
pub use train::{train, TrainExample, TrainReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
