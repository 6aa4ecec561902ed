use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_RATE: f64 = 50.0;

/// Network hyperparameters. Defaults follow the full-size model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub res_blocks: usize,
    pub in_planes: usize,
    pub planes: usize,
    pub embed_dim: usize,
    pub kernel: usize,
    pub stride: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Recurrent hidden size per direction.
    pub lstm_hidden: usize,
    pub head_hidden: usize,
    pub dia_out: usize,
    pub det_out: usize,
    pub use_resnet: bool,
    pub use_transformer: bool,
    pub use_lstm: bool,
    pub multi_task: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            res_blocks: 8,
            in_planes: 768,
            planes: 512,
            embed_dim: 128,
            kernel: 1,
            stride: 1,
            transformer_layers: 2,
            heads: 4,
            d_model: 128,
            ff_dim: 1024,
            dropout: 0.5,
            lstm_hidden: 64,
            head_hidden: 256,
            dia_out: 5,
            det_out: 1,
            use_resnet: true,
            use_transformer: true,
            use_lstm: true,
            multi_task: true,
        }
    }
}

impl ModelConfig {
    /// Two residual blocks, everything else unchanged.
    pub fn reduced() -> Self {
        Self {
            res_blocks: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.kernel != 1 || self.stride != 1 {
            return bad("only kernel 1 / stride 1 convolutions preserve the frame count");
        }
        if self.embed_dim != self.d_model {
            return bad("embed_dim must equal d_model");
        }
        if self.use_lstm && 2 * self.lstm_hidden != self.d_model {
            return bad("bidirectional recurrent width must equal d_model");
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be divisible by heads");
        }
        if self.dia_out != 5 || self.det_out != 1 {
            return bad("heads must emit 5 emotion classes and 1 boundary logit");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.in_planes == 0 || self.planes == 0 || self.ff_dim == 0 || self.head_hidden == 0 {
            return bad("layer widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dilation_frames: usize,
    pub max_pos_weight: f64,
    /// Stop after the epoch during which this wall-clock budget ran out.
    pub time_budget_s: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            dilation_frames: 2,
            max_pos_weight: 100.0,
            time_budget_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub median_frames: usize,
    pub min_segment_s: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            median_frames: 25,
            min_segment_s: 0.5,
        }
    }
}

/// Named variants for the component and task ablation.
pub fn ablation_variants(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    vec![
        ("full", base.clone()),
        (
            "single_task",
            ModelConfig {
                multi_task: false,
                ..base.clone()
            },
        ),
        (
            "no_resnet",
            ModelConfig {
                use_resnet: false,
                ..base.clone()
            },
        ),
        (
            "no_transformer",
            ModelConfig {
                use_transformer: false,
                ..base.clone()
            },
        ),
        (
            "no_lstm",
            ModelConfig {
                use_lstm: false,
                ..base.clone()
            },
        ),
    ]
}
