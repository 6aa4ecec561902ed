//! The residual → attention → recurrent → two-head frame network.

use candle_core::{DType, Device, Tensor, Var, D};
use emotrans_core::FeatureSequence;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::loss::UncertaintyState;

const LN_EPS: f64 = 1e-5;

/// Ordered registry of model tensors: trainable parameters and
/// normalization statistics.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<(String, Var, bool)>,
}

impl ParamStore {
    fn add(&mut self, name: String, var: Var, trainable: bool) -> Var {
        self.entries.push((name, var.clone(), trainable));
        var
    }

    /// Every stored tensor in registration order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.entries.iter().map(|(n, v, _)| (n.as_str(), v))
    }

    /// Trainable parameters only.
    pub fn vars(&self) -> Vec<Var> {
        self.entries.iter().filter(|e| e.2).map(|e| e.1.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.entries.iter().find(|e| e.0 == name).map(|e| &e.1)
    }

    pub fn parameter_count(&self) -> usize {
        self.entries.iter().filter(|e| e.2).map(|e| e.1.elem_count()).sum()
    }
}

struct Init<'a> {
    rng: ChaCha8Rng,
    device: &'a Device,
    store: ParamStore,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| self.rng.gen_range(-bound..bound) as f32).collect();
        let var = Var::from_vec(data, shape, self.device)?;
        Ok(self.store.add(name, var, true))
    }

    fn constant(&mut self, name: String, shape: &[usize], value: f32) -> Result<Var> {
        let n: usize = shape.iter().product();
        let var = Var::from_vec(vec![value; n], shape, self.device)?;
        Ok(self.store.add(name, var, true))
    }

    fn buffer(&mut self, name: String, dim: usize, value: f32) -> Result<Var> {
        let var = Var::from_vec(vec![value; dim], dim, self.device)?;
        Ok(self.store.add(name, var, false))
    }

    fn linear(&mut self, name: &str, input: usize, output: usize) -> Result<Linear> {
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Linear {
            w: self.uniform(format!("{name}.weight"), &[output, input], bound)?,
            b: self.uniform(format!("{name}.bias"), &[output], bound)?,
        })
    }

    fn batch_norm(&mut self, name: &str, dim: usize) -> Result<BatchNorm> {
        Ok(BatchNorm {
            gamma: self.constant(format!("{name}.gamma"), &[dim], 1.0)?,
            beta: self.constant(format!("{name}.beta"), &[dim], 0.0)?,
            running_mean: self.buffer(format!("{name}.running_mean"), dim, 0.0)?,
            running_var: self.buffer(format!("{name}.running_var"), dim, 1.0)?,
        })
    }

    fn norm(&mut self, name: &str, dim: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.constant(format!("{name}.gamma"), &[dim], 1.0)?,
            beta: self.constant(format!("{name}.beta"), &[dim], 0.0)?,
        })
    }
}

struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    /// Applies to the last dimension of a rank-2 or rank-3 tensor.
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let flat = x.flatten_to(dims.len() - 2)?;
        let y = flat.matmul(&self.w.t()?)?.broadcast_add(self.b.as_tensor())?;
        let mut out = dims;
        *out.last_mut().unwrap() = self.b.dims()[0];
        Ok(y.reshape(out)?)
    }
}

struct Norm {
    gamma: Var,
    beta: Var,
}

impl Norm {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
        Ok(xn
            .broadcast_mul(self.gamma.as_tensor())?
            .broadcast_add(self.beta.as_tensor())?)
    }
}

/// Per-channel normalization over all real frames of a batch.
struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm {
    const MOMENTUM: f64 = 0.1;

    /// `x` is `(B, T, C)`; `mask` is `(B * T, 1)` with `frames` ones.
    fn forward(&self, x: &Tensor, mask: &Tensor, frames: usize, train: bool) -> Result<Tensor> {
        let (b, t, c) = x.dims3()?;
        let flat = x.reshape((b * t, c))?;
        let (mean, var) = if train {
            let n = frames as f64;
            let mean = (flat.broadcast_mul(mask)?.sum_keepdim(0)? / n)?;
            let centred = flat.broadcast_sub(&mean)?;
            let var = (centred.sqr()?.broadcast_mul(mask)?.sum_keepdim(0)? / n)?;
            let m = Self::MOMENTUM;
            let unbiased = if frames > 1 { n / (n - 1.0) } else { 1.0 };
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().squeeze(0)? * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (var.detach().squeeze(0)? * (m * unbiased))?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().unsqueeze(0)?,
                self.running_var.as_tensor().unsqueeze(0)?,
            )
        };
        let y = flat
            .broadcast_sub(&mean)?
            .broadcast_div(&(var + LN_EPS)?.sqrt()?)?
            .broadcast_mul(self.gamma.as_tensor())?
            .broadcast_add(self.beta.as_tensor())?;
        Ok(y.reshape((b, t, c))?)
    }
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// Per-call state: training mode and the dropout stream.
pub struct Pass<'a> {
    pub train: bool,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Pass<'_> {
    pub fn eval() -> Pass<'static> {
        Pass { train: false, rng: None }
    }

    fn dropout(&mut self, x: &Tensor, p: f64) -> Result<Tensor> {
        if !self.train || p <= 0.0 {
            return Ok(x.clone());
        }
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x.clone());
        };
        let keep = 1.0 - p;
        let scale = (1.0 / keep) as f32;
        let mask: Vec<f32> = (0..x.elem_count())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
        Ok((x * mask)?)
    }
}

struct ResBlock {
    a: Linear,
    na: BatchNorm,
    b: Linear,
    nb: BatchNorm,
}

struct EncoderLayer {
    qkv: Linear,
    out: Linear,
    n1: Norm,
    ff1: Linear,
    ff2: Linear,
    n2: Norm,
}

struct LstmDir {
    ih: Linear,
    hh: Var,
}

/// Padded batch of frame features.
pub struct Batch {
    pub x: Tensor,
    pub lengths: Vec<usize>,
    pub max_len: usize,
}

impl Batch {
    pub fn new(seqs: &[&FeatureSequence], device: &Device) -> Result<Self> {
        let dim = seqs.first().map(|s| s.dim()).ok_or_else(|| Error::Shape("empty batch".into()))?;
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut data = vec![0f32; seqs.len() * max_len * dim];
        for (b, s) in seqs.iter().enumerate() {
            if s.dim() != dim {
                return Err(Error::Shape("mixed feature widths in one batch".into()));
            }
            let off = b * max_len * dim;
            for (t, row) in s.frames().rows().into_iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    data[off + t * dim + j] = v;
                }
            }
        }
        Ok(Self {
            x: Tensor::from_vec(data, (seqs.len(), max_len, dim), device)?,
            lengths: seqs.iter().map(|s| s.len()).collect(),
            max_len,
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    /// 1.0 on real frames, 0.0 on padding, shape `(B * T)`.
    pub fn frame_mask(&self) -> Vec<f32> {
        let mut m = vec![0f32; self.size() * self.max_len];
        for (b, &l) in self.lengths.iter().enumerate() {
            m[b * self.max_len..b * self.max_len + l].fill(1.0);
        }
        m
    }
}

pub struct Mtetr {
    config: ModelConfig,
    device: Device,
    params: ParamStore,
    stem: Option<(Linear, BatchNorm)>,
    embed_norm: Option<BatchNorm>,
    blocks: Vec<ResBlock>,
    embed: Linear,
    layers: Vec<EncoderLayer>,
    enc_norm: Option<Norm>,
    lstm: Option<(LstmDir, LstmDir)>,
    dia1: Linear,
    dia2: Linear,
    det1: Linear,
    det2: Linear,
    s_dia: Var,
    s_det: Var,
}

impl Mtetr {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let mut init = Init {
            rng: emotrans_core::seed::substream(seed, "mtetr-init", 0),
            device: &device,
            store: ParamStore::default(),
        };
        let c = &config;
        let (stem, blocks, embed) = if c.use_resnet {
            let stem = (init.linear("res.stem", c.in_planes, c.planes)?, init.batch_norm("res.stem_norm", c.planes)?);
            let mut blocks = Vec::with_capacity(c.res_blocks);
            for i in 0..c.res_blocks {
                blocks.push(ResBlock {
                    a: init.linear(&format!("res.{i}.a"), c.planes, c.planes)?,
                    na: init.batch_norm(&format!("res.{i}.a_norm"), c.planes)?,
                    b: init.linear(&format!("res.{i}.b"), c.planes, c.planes)?,
                    nb: init.batch_norm(&format!("res.{i}.b_norm"), c.planes)?,
                });
            }
            (Some(stem), blocks, init.linear("res.embed", c.planes, c.embed_dim)?)
        } else {
            (None, Vec::new(), init.linear("embed", c.in_planes, c.embed_dim)?)
        };
        let embed_norm = if c.use_resnet { Some(init.batch_norm("res.embed_norm", c.embed_dim)?) } else { None };
        let mut layers = Vec::new();
        if c.use_transformer {
            for i in 0..c.transformer_layers {
                layers.push(EncoderLayer {
                    qkv: init.linear(&format!("enc.{i}.qkv"), c.d_model, 3 * c.d_model)?,
                    out: init.linear(&format!("enc.{i}.out"), c.d_model, c.d_model)?,
                    n1: init.norm(&format!("enc.{i}.norm1"), c.d_model)?,
                    ff1: init.linear(&format!("enc.{i}.ff1"), c.d_model, c.ff_dim)?,
                    ff2: init.linear(&format!("enc.{i}.ff2"), c.ff_dim, c.d_model)?,
                    n2: init.norm(&format!("enc.{i}.norm2"), c.d_model)?,
                });
            }
        }
        let enc_norm = if layers.is_empty() { None } else { Some(init.norm("enc.norm", c.d_model)?) };
        let lstm = if c.use_lstm {
            let h = c.lstm_hidden;
            let mut dir = |name: &str| -> Result<LstmDir> {
                let ih = init.linear(&format!("lstm.{name}.ih"), c.d_model, 4 * h)?;
                let hh = init.uniform(format!("lstm.{name}.hh"), &[4 * h, h], 1.0 / (h as f64).sqrt())?;
                Ok(LstmDir { ih, hh })
            };
            Some((dir("fwd")?, dir("bwd")?))
        } else {
            None
        };
        let dia1 = init.linear("dia.hidden", c.d_model, c.head_hidden)?;
        let dia2 = init.linear("dia.out", c.head_hidden, c.dia_out)?;
        let det1 = init.linear("det.hidden", c.d_model, c.head_hidden)?;
        let det2 = init.linear("det.out", c.head_hidden, c.det_out)?;
        let s_dia = init.constant("uncertainty.s_dia".into(), &[], 0.0)?;
        let s_det = init.constant("uncertainty.s_det".into(), &[], 0.0)?;
        let params = init.store;
        Ok(Self {
            config,
            device,
            params,
            stem,
            embed_norm,
            blocks,
            embed,
            layers,
            enc_norm,
            lstm,
            dia1,
            dia2,
            det1,
            det2,
            s_dia,
            s_det,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn uncertainty_vars(&self) -> (&Var, &Var) {
        (&self.s_dia, &self.s_det)
    }

    pub fn uncertainty(&self) -> Result<UncertaintyState> {
        Ok(UncertaintyState {
            s_dia: f64::from(self.s_dia.to_scalar::<f32>()?),
            s_det: f64::from(self.s_det.to_scalar::<f32>()?),
        })
    }

    /// Overwrites one named tensor; shape must match.
    pub fn set_param(&self, name: &str, values: Vec<f32>) -> Result<()> {
        let var = self
            .params
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
        let t = Tensor::from_vec(values, var.shape(), &self.device)?;
        var.set(&t)?;
        Ok(())
    }

    /// Sets both output heads' final layers to zero.
    pub fn zero_heads(&self) -> Result<()> {
        for l in [&self.dia2, &self.det2] {
            l.w.set(&l.w.zeros_like()?)?;
            l.b.set(&l.b.zeros_like()?)?;
        }
        Ok(())
    }

    fn key_bias(&self, batch: &Batch) -> Result<Tensor> {
        let (b, t) = (batch.size(), batch.max_len);
        let mask = batch.frame_mask();
        let bias: Vec<f32> = mask.iter().map(|&m| if m > 0.0 { 0.0 } else { -1e9 }).collect();
        Ok(Tensor::from_vec(bias, (b, 1, 1, t), &self.device)?)
    }

    fn positional(&self, t: usize) -> Result<Tensor> {
        let d = self.config.d_model;
        let mut pe = vec![0f32; t * d];
        for pos in 0..t {
            for i in 0..d / 2 {
                let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
                pe[pos * d + 2 * i] = angle.sin() as f32;
                pe[pos * d + 2 * i + 1] = angle.cos() as f32;
            }
        }
        Ok(Tensor::from_vec(pe, (1, t, d), &self.device)?)
    }

    fn encoder_layer(&self, l: &EncoderLayer, x: &Tensor, bias: &Tensor, pass: &mut Pass<'_>) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let h = self.config.heads;
        let dh = d / h;
        let qkv = l.qkv.forward(&l.n1.forward(x)?)?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv
                .narrow(2, i * d, d)?
                .reshape((b, t, h, dh))?
                .transpose(1, 2)?
                .contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?.broadcast_add(bias)?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let ctx = attn.matmul(&v)?.transpose(1, 2)?.reshape((b, t, d))?;
        let x = (x + pass.dropout(&l.out.forward(&ctx)?, self.config.dropout)?)?;
        let f = l.ff1.forward(&l.n2.forward(&x)?)?.relu()?;
        let f = pass.dropout(&f, self.config.dropout)?;
        let f = pass.dropout(&l.ff2.forward(&f)?, self.config.dropout)?;
        Ok((x + f)?)
    }

    fn run_lstm(&self, dir: &LstmDir, x: &Tensor) -> Result<Tensor> {
        let (b, t, _) = x.dims3()?;
        let hsz = self.config.lstm_hidden;
        let xw = dir.ih.forward(x)?;
        let whh = dir.hh.t()?;
        let mut h = Tensor::zeros((b, hsz), DType::F32, &self.device)?;
        let mut c = h.clone();
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let g = (xw.narrow(1, step, 1)?.squeeze(1)? + h.matmul(&whh)?)?;
            let i = sigmoid(&g.narrow(1, 0, hsz)?)?;
            let f = sigmoid(&g.narrow(1, hsz, hsz)?)?;
            let gg = g.narrow(1, 2 * hsz, hsz)?.tanh()?;
            let o = sigmoid(&g.narrow(1, 3 * hsz, hsz)?)?;
            c = ((f * &c)? + (i * gg)?)?;
            h = (o * c.tanh()?)?;
            outs.push(h.clone());
        }
        Ok(Tensor::stack(&outs, 1)?)
    }

    /// Reverses each sequence within its own length, leaving padding in place.
    fn reverse_within(&self, x: &Tensor, lengths: &[usize]) -> Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let mut idx = Vec::with_capacity(b * t);
        for (bi, &len) in lengths.iter().enumerate() {
            for ti in 0..t {
                let src = if ti < len { len - 1 - ti } else { ti };
                idx.push((bi * t + src) as u32);
            }
        }
        let idx = Tensor::from_vec(idx, b * t, &self.device)?;
        Ok(x.reshape((b * t, d))?.index_select(&idx, 0)?.reshape((b, t, d))?)
    }

    /// Logits for a padded batch: `(B, T, 5)` and `(B, T)`.
    pub fn forward_batch(&self, batch: &Batch, pass: &mut Pass<'_>) -> Result<(Tensor, Tensor)> {
        let c = &self.config;
        let width = batch.x.dim(2)?;
        if width != c.in_planes {
            return Err(Error::Shape(format!("feature width {width} but the model expects {}", c.in_planes)));
        }
        let mut x = batch.x.clone();
        let frames = batch.lengths.iter().sum::<usize>();
        let mask = Tensor::from_vec(batch.frame_mask(), (batch.size() * batch.max_len, 1), &self.device)?;
        let train = pass.train;
        if let Some((stem, norm)) = &self.stem {
            x = norm.forward(&stem.forward(&x)?, &mask, frames, train)?.relu()?;
            for blk in &self.blocks {
                let y = blk.na.forward(&blk.a.forward(&x)?, &mask, frames, train)?.relu()?;
                let y = blk.nb.forward(&blk.b.forward(&y)?, &mask, frames, train)?;
                x = (x + y)?.relu()?;
            }
        }
        x = self.embed.forward(&x)?;
        if let Some(n) = &self.embed_norm {
            x = n.forward(&x, &mask, frames, train)?;
        }
        if !self.layers.is_empty() {
            x = x.broadcast_add(&self.positional(batch.max_len)?)?;
            let bias = self.key_bias(batch)?;
            for l in &self.layers {
                x = self.encoder_layer(l, &x, &bias, pass)?;
            }
            if let Some(n) = &self.enc_norm {
                x = n.forward(&x)?;
            }
        }
        if let Some((fwd, bwd)) = &self.lstm {
            let hf = self.run_lstm(fwd, &x)?;
            let rev = self.reverse_within(&x, &batch.lengths)?;
            let hb = self.reverse_within(&self.run_lstm(bwd, &rev)?, &batch.lengths)?;
            x = Tensor::cat(&[hf, hb], 2)?;
        }
        let dia = self.dia2.forward(&self.dia1.forward(&x)?.relu()?)?;
        let det = self.det2.forward(&self.det1.forward(&x)?.relu()?)?.squeeze(2)?;
        Ok((dia, det))
    }

    /// Evaluation-mode logits for one utterance: `T x 5` and `T`.
    pub fn forward(&self, features: &FeatureSequence) -> Result<(Array2<f32>, Vec<f32>)> {
        let batch = Batch::new(&[features], &self.device)?;
        let (dia, det) = self.forward_batch(&batch, &mut Pass::eval())?;
        let t = features.len();
        let dia = dia.squeeze(0)?.to_vec2::<f32>()?;
        let mut out = Array2::zeros((t, self.config.dia_out));
        for (i, row) in dia.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok((out, det.squeeze(0)?.to_vec1::<f32>()?))
    }

    /// Class posteriors and boundary probabilities.
    pub fn predict(&self, features: &FeatureSequence) -> Result<Prediction> {
        let (mut dia, det) = self.forward(features)?;
        for mut row in dia.rows_mut() {
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let det = det.into_iter().map(|z| 1.0 / (1.0 + (-z).exp())).collect();
        Ok(Prediction {
            dia_probs: dia,
            det_scores: det,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub dia_probs: Array2<f32>,
    pub det_scores: Vec<f32>,
}
