//! Turning frame posteriors into timed emotion segments.

use emotrans_core::{format_timestamp, EmotionLabel, TimedSegment};
use ndarray::ArrayView2;

use crate::config::SmoothingConfig;
use crate::error::Result;

pub fn argmax_rows(probs: ArrayView2<'_, f32>) -> Vec<u8> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best as u8
        })
        .collect()
}

/// Sliding majority vote over a centred window truncated at the edges.
/// A frame keeps its label when no class holds a strict majority.
pub fn majority_filter(labels: &[u8], width: usize) -> Vec<u8> {
    let n = labels.len();
    if width <= 1 || n == 0 {
        return labels.to_vec();
    }
    let half = width / 2;
    let mut counts = [0usize; 256];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let want_lo = t.saturating_sub(half);
        let want_hi = (t + half + 1).min(n);
        while hi < want_hi {
            counts[labels[hi] as usize] += 1;
            hi += 1;
        }
        while lo < want_lo {
            counts[labels[lo] as usize] -= 1;
            lo += 1;
        }
        let len = hi - lo;
        let winner = (0..EmotionLabel::COUNT).find(|&c| 2 * counts[c] > len);
        out.push(winner.map_or(labels[t], |c| c as u8));
    }
    out
}

/// Runs of equal labels as `(label, start_frame, length)`.
pub fn runs(labels: &[u8]) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.0 == l => last.2 += 1,
            _ => out.push((l, t, 1)),
        }
    }
    out
}

fn coalesce(runs: Vec<(u8, usize, usize)>) -> Vec<(u8, usize, usize)> {
    let mut out: Vec<(u8, usize, usize)> = Vec::with_capacity(runs.len());
    for r in runs {
        match out.last_mut() {
            Some(last) if last.0 == r.0 => last.2 += r.2,
            _ => out.push(r),
        }
    }
    out
}

/// Absorbs runs shorter than `min_frames` into their longer neighbour,
/// shortest first.
pub fn merge_short(mut rs: Vec<(u8, usize, usize)>, min_frames: usize) -> Vec<(u8, usize, usize)> {
    loop {
        if rs.len() < 2 {
            return rs;
        }
        let Some((i, _)) = rs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.2 < min_frames)
            .min_by_key(|(i, r)| (r.2, *i))
        else {
            return rs;
        };
        let left = i.checked_sub(1).map(|j| rs[j].2);
        let right = rs.get(i + 1).map(|r| r.2);
        let target = match (left, right) {
            (Some(l), Some(r)) if r > l => i + 1,
            (Some(_), _) => i - 1,
            (None, _) => i + 1,
        };
        rs[i].0 = rs[target].0;
        rs = coalesce(rs);
    }
}

pub fn decode_labels(labels: &[u8], frame_rate: f64, smoothing: &SmoothingConfig) -> Vec<TimedSegment> {
    let filtered = majority_filter(labels, smoothing.median_frames);
    let min_frames = (smoothing.min_segment_s * frame_rate).round() as usize;
    let merged = merge_short(runs(&filtered), min_frames);
    merged
        .iter()
        .map(|&(l, start, len)| TimedSegment {
            start_s: start as f64 / frame_rate,
            end_s: (start + len) as f64 / frame_rate,
            emotion: EmotionLabel::from_index(l as usize).unwrap_or(EmotionLabel::Neutral),
        })
        .collect()
}

/// `T x 5` posteriors to sorted, adjacent-distinct segments covering the sequence.
pub fn decode(dia_probs: ArrayView2<'_, f32>, frame_rate: f64, smoothing: &SmoothingConfig) -> Vec<TimedSegment> {
    decode_labels(&argmax_rows(dia_probs), frame_rate, smoothing)
}

pub fn format_segments(segments: &[TimedSegment]) -> Result<String> {
    let parts = segments
        .iter()
        .map(|s| {
            Ok(format!(
                "start_time: {}, end_time: {}, emotion: \"{}\"",
                format_timestamp(s.start_s)?,
                format_timestamp(s.end_s)?,
                s.emotion.annotation_name()
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join("; "))
}
