//! Class-conditioned Gaussian frame features for offline training runs.

use emotrans_core::{EmotionLabel, FeatureSequence, TimedSegment, TransitionPlan};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::FRAME_RATE;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SyntheticDiscourse {
    pub features: FeatureSequence,
    pub segments: Vec<TimedSegment>,
    pub plan: TransitionPlan,
}

#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    pub frame_rate: f64,
    pub noise_std: f32,
    pub discourse_offset_std: f32,
    pub min_segment_s: f64,
    pub max_segment_s: f64,
    means: Array2<f32>,
}

impl SyntheticGenerator {
    pub const MEAN_SCALE: f32 = 0.13;

    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = emotrans_core::seed::substream(seed, "synthetic-means", 0);
        let means = Array2::from_shape_fn((EmotionLabel::COUNT, dim), |_| {
            let z: f32 = StandardNormal.sample(&mut rng);
            z * Self::MEAN_SCALE
        });
        Self {
            frame_rate: FRAME_RATE,
            noise_std: 1.0,
            discourse_offset_std: 0.05,
            min_segment_s: 0.5,
            max_segment_s: 2.0,
            means,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn class_mean(&self, e: EmotionLabel) -> ndarray::ArrayView1<'_, f32> {
        self.means.row(e.index())
    }

    /// A uniformly drawn adjacent-distinct plan with `k` transitions.
    pub fn random_plan<R: Rng>(rng: &mut R, k: usize) -> TransitionPlan {
        let mut v = vec![EmotionLabel::ALL[rng.gen_range(0..EmotionLabel::COUNT)]];
        for _ in 0..k {
            let prev = *v.last().unwrap_or(&EmotionLabel::Neutral);
            let others: Vec<EmotionLabel> = EmotionLabel::ALL.into_iter().filter(|&e| e != prev).collect();
            v.push(others[rng.gen_range(0..others.len())]);
        }
        TransitionPlan::new(v).expect("adjacent-distinct by construction")
    }

    pub fn generate<R: Rng>(&self, plan: &TransitionPlan, rng: &mut R) -> Result<SyntheticDiscourse> {
        let fr = self.frame_rate;
        let mut bounds = Vec::with_capacity(plan.len());
        let mut frame = 0usize;
        for _ in plan.emotions() {
            let dur = rng.gen_range(self.min_segment_s..=self.max_segment_s);
            let n = ((dur * fr).round() as usize).max(1);
            bounds.push((frame, frame + n));
            frame += n;
        }
        let dim = self.dim();
        let offset: Array1<f32> = Array1::from_shape_fn(dim, |_| {
            let z: f32 = StandardNormal.sample(rng);
            z * self.discourse_offset_std
        });
        let mut frames = Array2::zeros((frame, dim));
        let mut segments = Vec::with_capacity(plan.len());
        for (&e, &(a, b)) in plan.emotions().iter().zip(&bounds) {
            let mean = self.class_mean(e);
            for t in a..b {
                let mut row = frames.row_mut(t);
                for j in 0..dim {
                    let z: f32 = StandardNormal.sample(rng);
                    row[j] = mean[j] + offset[j] + z * self.noise_std;
                }
            }
            segments.push(TimedSegment::new(a as f64 / fr, b as f64 / fr, e)?);
        }
        Ok(SyntheticDiscourse {
            features: FeatureSequence::new(frames, fr)?,
            segments,
            plan: plan.clone(),
        })
    }

    /// `count` discourses with transition counts cycling through `ks`.
    pub fn dataset(&self, seed: u64, label: &str, count: usize, ks: &[usize]) -> Result<Vec<SyntheticDiscourse>> {
        let mut rng = emotrans_core::seed::substream(seed, label, 0);
        (0..count)
            .map(|i| {
                let k = ks[i % ks.len()];
                let plan = Self::random_plan(&mut rng, k);
                self.generate(&plan, &mut rng)
            })
            .collect()
    }
}
