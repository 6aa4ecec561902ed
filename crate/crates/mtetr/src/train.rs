use std::time::Instant;

use candle_core::{Tensor, D};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use emotrans_core::FeatureSequence;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{Batch, Mtetr, Pass};
use crate::targets::FrameTargets;

#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: FeatureSequence,
    pub targets: FrameTargets,
}

impl TrainExample {
    pub fn new(features: FeatureSequence, targets: FrameTargets) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature frames but {} target frames",
                features.len(),
                targets.len()
            )));
        }
        Ok(Self { features, targets })
    }
}

/// Per-epoch means over minibatches, weighted by frame count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dia_loss: f64,
    pub det_loss: f64,
    pub s_dia: f64,
    pub s_det: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub pos_weight: f64,
    pub elapsed_s: f64,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.loss).collect()
    }
}

/// `neg / pos` over all boundary labels, capped.
pub fn positive_weight(data: &[TrainExample], cap: f64) -> f64 {
    let pos: usize = data.iter().map(|e| e.targets.det.iter().filter(|&&d| d).count()).sum();
    let total: usize = data.iter().map(|e| e.targets.len()).sum();
    if pos == 0 {
        return 1.0;
    }
    ((total - pos) as f64 / pos as f64).clamp(1.0, cap)
}

fn softplus(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?)?)
}

pub struct BatchLosses {
    pub total: Tensor,
    pub dia: f64,
    pub det: f64,
}

/// Masked frame losses for one batch combined by the uncertainty weighting.
pub fn batch_loss(
    model: &Mtetr,
    examples: &[&TrainExample],
    pos_weight: f64,
    pass: &mut Pass<'_>,
) -> Result<BatchLosses> {
    let feats: Vec<&FeatureSequence> = examples.iter().map(|e| &e.features).collect();
    let batch = Batch::new(&feats, model.device())?;
    let (dia, det) = model.forward_batch(&batch, pass)?;
    let (b, t) = (batch.size(), batch.max_len);
    let dev = model.device();

    let mut labels = vec![0u32; b * t];
    let mut bounds = vec![0f32; b * t];
    for (i, e) in examples.iter().enumerate() {
        for (j, (&l, &d)) in e.targets.dia.iter().zip(&e.targets.det).enumerate() {
            labels[i * t + j] = u32::from(l);
            bounds[i * t + j] = if d { 1.0 } else { 0.0 };
        }
    }
    let mask = Tensor::from_vec(batch.frame_mask(), b * t, dev)?;
    let frames = batch.lengths.iter().sum::<usize>() as f64;
    let labels = Tensor::from_vec(labels, (b * t, 1), dev)?;
    let y = Tensor::from_vec(bounds, b * t, dev)?;

    let logp = candle_nn::ops::log_softmax(&dia.reshape((b * t, dia.dim(2)?))?, D::Minus1)?;
    let picked = logp.gather(&labels, 1)?.squeeze(1)?;
    let l_dia = ((picked * &mask)?.sum_all()? * (-1.0 / frames))?;

    let z = det.reshape(b * t)?;
    let pos_term = ((softplus(&z.neg()?)? * &y)? * pos_weight)?;
    let neg_term = (softplus(&z)? * y.affine(-1.0, 1.0)?)?;
    let l_det = (((pos_term + neg_term)? * &mask)?.sum_all()? * (1.0 / frames))?;

    let total = if model.config().multi_task {
        let (s_dia, s_det) = model.uncertainty_vars();
        let term = |l: &Tensor, s: &Tensor| -> Result<Tensor> {
            Ok(((l * s.neg()?.exp()?)? * 0.5 + (s * 0.5)?)?)
        };
        (term(&l_dia, s_dia.as_tensor())? + term(&l_det, s_det.as_tensor())?)?
    } else {
        l_dia.clone()
    };
    Ok(BatchLosses {
        total,
        dia: f64::from(l_dia.to_scalar::<f32>()?),
        det: f64::from(l_det.to_scalar::<f32>()?),
    })
}

pub fn train(model: &Mtetr, data: &[TrainExample], cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let started = Instant::now();
    let pos_weight = positive_weight(data, cfg.max_pos_weight);
    let mut vars = model.params().vars();
    if !model.config().multi_task {
        let (a, b) = model.uncertainty_vars();
        vars.retain(|v| v.id() != a.id() && v.id() != b.id());
    }
    let mut opt = AdamW::new(
        vars,
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..ParamsAdamW::default()
        },
    )?;
    let mut dropout_rng = emotrans_core::seed::substream(cfg.seed, "mtetr-dropout", 0);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut emotrans_core::seed::substream(cfg.seed, "mtetr-shuffle", epoch as u64));
        let (mut sum, mut sum_dia, mut sum_det, mut n) = (0.0, 0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let examples: Vec<&TrainExample> = chunk.iter().map(|&i| &data[i]).collect();
            let mut pass = Pass {
                train: true,
                rng: Some(&mut dropout_rng),
            };
            let losses = batch_loss(model, &examples, pos_weight, &mut pass)?;
            let value = f64::from(losses.total.to_scalar::<f32>()?);
            if !value.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            opt.backward_step(&losses.total)?;
            let w = examples.iter().map(|e| e.targets.len()).sum::<usize>() as f64;
            sum += value * w;
            sum_dia += losses.dia * w;
            sum_det += losses.det * w;
            n += w;
        }
        let u = model.uncertainty()?;
        let rec = EpochRecord {
            epoch,
            loss: sum / n,
            dia_loss: sum_dia / n,
            det_loss: sum_det / n,
            s_dia: u.s_dia,
            s_det: u.s_det,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (dia {:.4}, det {:.4})",
            rec.loss,
            rec.dia_loss,
            rec.det_loss
        );
        history.push(rec);
        if cfg
            .time_budget_s
            .is_some_and(|b| started.elapsed().as_secs_f64() >= b)
        {
            break;
        }
    }
    Ok(TrainReport {
        history,
        pos_weight,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}
