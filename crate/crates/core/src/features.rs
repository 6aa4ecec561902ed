//! Frame-level feature sequences and the offline descriptor extractor.

use ndarray::{Array2, Axis};
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::clients::{ClientResult, FeatureExtractor};
use crate::error::{ClientError, Error, Result};
use crate::seed;

/// `T x D` frame features at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    frames: Array2<f32>,
    frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f32>, frame_rate: f64) -> Result<Self> {
        if frames.nrows() == 0 {
            return Err(Error::Shape("feature sequence needs at least one frame".into()));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("frame rate {frame_rate}")));
        }
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &Array2<f32> {
        &self.frames
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

pub const BAND_COUNT: usize = 16;
pub const DESCRIPTOR_DIM: usize = BAND_COUNT + 4;
const POWER_FLOOR: f64 = 1e-12;

/// Short-time power spectra with a Hann window.
pub(crate) struct Stft {
    pub fft_len: usize,
    pub hop: usize,
    pub win: usize,
    pub sample_rate: u32,
}

impl Stft {
    pub fn new(sample_rate: u32, hop: usize, win: usize) -> Self {
        Self {
            fft_len: win.next_power_of_two(),
            hop,
            win,
            sample_rate,
        }
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * f64::from(self.sample_rate) / self.fft_len as f64
    }

    /// One spectrum per hop; frames reaching past the end are zero padded.
    pub fn power_spectra(&self, samples: &[f64], frames: usize) -> Vec<Vec<f64>> {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(self.fft_len);
        let window: Vec<f64> = (0..self.win)
            .map(|i| {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / self.win as f64).cos()
            })
            .collect();
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        (0..frames)
            .map(|f| {
                let start = f * self.hop;
                buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                for (i, w) in window.iter().enumerate() {
                    if let Some(s) = samples.get(start + i) {
                        buf[i].re = s * w;
                    }
                }
                fft.process(&mut buf);
                buf[..self.fft_len / 2].iter().map(|c| c.norm_sqr()).collect()
            })
            .collect()
    }
}

fn band_edges(sample_rate: u32) -> Vec<f64> {
    let lo: f64 = 80.0;
    let hi = (f64::from(sample_rate) / 2.0).min(8000.0);
    (0..=BAND_COUNT)
        .map(|i| lo * (hi / lo).powf(i as f64 / BAND_COUNT as f64))
        .collect()
}

/// Spectral centroid in Hz over the whole waveform.
pub fn spectral_centroid(w: &Waveform) -> f64 {
    let stft = Stft::new(w.sample_rate(), 256, 1024);
    let frames = w.len().saturating_sub(stft.win) / stft.hop + 1;
    let spectra = stft.power_spectra(w.samples(), frames);
    let mut num = 0.0;
    let mut den = 0.0;
    for spec in &spectra {
        for (k, p) in spec.iter().enumerate() {
            num += stft.bin_hz(k) * p;
            den += p;
        }
    }
    if den <= POWER_FLOOR {
        0.0
    } else {
        num / den
    }
}

/// Loudness-independent spectral shape plus level, one row per frame.
pub fn frame_descriptors(w: &Waveform, frame_rate: f64) -> Vec<[f32; DESCRIPTOR_DIM]> {
    let sr = w.sample_rate();
    let hop = ((f64::from(sr) / frame_rate).round() as usize).max(1);
    let frames = (w.len() / hop).max(1);
    let stft = Stft::new(sr, hop, 2 * hop);
    let edges = band_edges(sr);
    let spectra = stft.power_spectra(w.samples(), frames);
    spectra
        .iter()
        .enumerate()
        .map(|(f, spec)| {
            let mut bands = [0.0f64; BAND_COUNT];
            let mut total = 0.0;
            let mut centroid_num = 0.0;
            for (k, p) in spec.iter().enumerate() {
                let hz = stft.bin_hz(k);
                total += p;
                centroid_num += hz * p;
                if let Some(b) = edges.windows(2).position(|e| hz >= e[0] && hz < e[1]) {
                    bands[b] += p;
                }
            }
            let start = f * hop;
            let end = (start + hop).min(w.len());
            let level_db = 20.0 * crate::audio::rms(&w.samples()[start.min(end)..end]).max(1e-5).log10();
            let mut d = [0.0f32; DESCRIPTOR_DIM];
            let log_bands: Vec<f64> = bands
                .iter()
                .map(|b| (b / (total + POWER_FLOOR) + 1e-6).log10())
                .collect();
            for (i, lb) in log_bands.iter().enumerate() {
                d[i] = (*lb / 3.0 + 1.0) as f32;
            }
            let centroid = if total > POWER_FLOOR {
                centroid_num / total
            } else {
                0.0
            };
            let mean_idx = (BAND_COUNT as f64 - 1.0) / 2.0;
            let mean_lb = log_bands.iter().sum::<f64>() / BAND_COUNT as f64;
            let (mut cov, mut var) = (0.0, 0.0);
            for (i, lb) in log_bands.iter().enumerate() {
                cov += (i as f64 - mean_idx) * (lb - mean_lb);
                var += (i as f64 - mean_idx).powi(2);
            }
            d[BAND_COUNT] = (centroid / 1000.0 - 1.5) as f32;
            d[BAND_COUNT + 1] = (cov / var * 5.0) as f32;
            d[BAND_COUNT + 2] = (level_db / 30.0 + 1.5) as f32;
            d[BAND_COUNT + 3] = if level_db > -60.0 { 1.0 } else { -1.0 };
            d
        })
        .collect()
}

/// Offline stand-in for a self-supervised emotion feature extractor: frame
/// descriptors lifted to `dim` channels through a fixed random projection.
#[derive(Debug, Clone)]
pub struct DescriptorExtractor {
    frame_rate: f64,
    projection: Array2<f32>,
}

impl DescriptorExtractor {
    pub const PROJECTION_SEED: u64 = 0x0E70_7A45;

    pub fn new(dim: usize, frame_rate: f64) -> Self {
        let mut rng = seed::rng(Self::PROJECTION_SEED);
        let scale = 1.0 / (DESCRIPTOR_DIM as f64).sqrt();
        let projection = Array2::from_shape_fn((DESCRIPTOR_DIM, dim), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (z * scale) as f32
        });
        Self {
            frame_rate,
            projection,
        }
    }

    pub fn descriptors(&self, w: &Waveform) -> Array2<f32> {
        let rows = frame_descriptors(w, self.frame_rate);
        let mut m = Array2::zeros((rows.len(), DESCRIPTOR_DIM));
        for (mut row, d) in m.axis_iter_mut(Axis(0)).zip(&rows) {
            row.iter_mut().zip(d).for_each(|(a, b)| *a = *b);
        }
        m
    }
}

impl Default for DescriptorExtractor {
    fn default() -> Self {
        Self::new(768, 50.0)
    }
}

impl FeatureExtractor for DescriptorExtractor {
    fn extract(&self, waveform: &Waveform) -> ClientResult<FeatureSequence> {
        let frames = self.descriptors(waveform).dot(&self.projection);
        FeatureSequence::new(frames, self.frame_rate)
            .map_err(|e| ClientError::Service(e.to_string()))
    }
}
