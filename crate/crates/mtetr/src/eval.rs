//! Frame accuracy, boundary EER and decoded-sequence accuracy on held-out data.

use std::collections::BTreeMap;

use emotrans_core::metrics::{self, EvalPair, DEFAULT_EER_TOLERANCE};
use emotrans_core::{FeatureSequence, TimedSegment, TransitionPlan};
use serde::{Deserialize, Serialize};

use crate::config::{ablation_variants, ModelConfig, SmoothingConfig, TrainConfig};
use crate::decode::{argmax_rows, decode};
use crate::error::Result;
use crate::model::Mtetr;
use crate::targets::FrameTargets;
use crate::train::{train, TrainExample, TrainReport};

#[derive(Debug, Clone)]
pub struct EvalExample {
    pub features: FeatureSequence,
    pub targets: FrameTargets,
    pub plan: TransitionPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fea: f64,
    pub eer: Option<f64>,
    pub sequence_accuracy: f64,
    pub sequence_accuracy_by_k: BTreeMap<usize, f64>,
    pub count_accuracy: f64,
    pub utterances: usize,
}

pub fn plan_of(segments: &[TimedSegment]) -> Result<TransitionPlan> {
    Ok(TransitionPlan::from_collapsed(segments.iter().map(|s| s.emotion))?)
}

pub fn evaluate(model: &Mtetr, data: &[EvalExample], smoothing: &SmoothingConfig) -> Result<EvalReport> {
    let mut pred_frames = Vec::new();
    let mut true_frames = Vec::new();
    let mut scores = Vec::new();
    let mut bounds = Vec::new();
    let mut pairs = Vec::with_capacity(data.len());
    for ex in data {
        let p = model.predict(&ex.features)?;
        pred_frames.extend(argmax_rows(p.dia_probs.view()));
        true_frames.extend_from_slice(&ex.targets.dia);
        scores.extend(p.det_scores.iter().map(|&s| f64::from(s)));
        bounds.extend_from_slice(&ex.targets.det);
        let segs = decode(p.dia_probs.view(), ex.features.frame_rate(), smoothing);
        pairs.push(EvalPair::new(plan_of(&segs)?, ex.plan.clone()));
    }
    let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for p in &pairs {
        let e = by_k.entry(p.k).or_default();
        e.0 += usize::from(p.sequence_correct());
        e.1 += 1;
    }
    Ok(EvalReport {
        fea: metrics::fea(&pred_frames, &true_frames)?,
        eer: metrics::eer_fast(&scores, &bounds, DEFAULT_EER_TOLERANCE)?,
        sequence_accuracy: metrics::exact_sequence_accuracy(&pairs)?,
        sequence_accuracy_by_k: by_k
            .into_iter()
            .map(|(k, (c, n))| (k, 100.0 * c as f64 / n as f64))
            .collect(),
        count_accuracy: metrics::acc_etc(&pairs)?,
        utterances: data.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub variant: String,
    pub train: TrainReport,
    pub eval: EvalReport,
}

/// Trains and scores every component/task ablation of `base` under the same seed.
pub fn run_ablation(
    base: &ModelConfig,
    train_set: &[TrainExample],
    test_set: &[EvalExample],
    train_cfg: &TrainConfig,
    smoothing: &SmoothingConfig,
) -> Result<Vec<AblationResult>> {
    ablation_variants(base)
        .into_iter()
        .map(|(name, cfg)| {
            let model = Mtetr::new(cfg, train_cfg.seed)?;
            let report = train(&model, train_set, train_cfg)?;
            Ok(AblationResult {
                variant: name.to_string(),
                train: report,
                eval: evaluate(&model, test_set, smoothing)?,
            })
        })
        .collect()
}
