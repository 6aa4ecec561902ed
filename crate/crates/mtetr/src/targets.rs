//! Frame-level training targets.

use emotrans_core::{EmotionLabel, TimedSegment};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTargets {
    /// Emotion class index per frame.
    pub dia: Vec<u8>,
    /// Boundary label per frame, dilated.
    pub det: Vec<bool>,
}

impl FrameTargets {
    pub fn len(&self) -> usize {
        self.dia.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dia.is_empty()
    }

    pub fn positive_runs(&self) -> usize {
        let mut runs = 0;
        let mut prev = false;
        for &d in &self.det {
            if d && !prev {
                runs += 1;
            }
            prev = d;
        }
        runs
    }
}

/// Frame index of a boundary at `t` seconds.
pub fn boundary_frame(t: f64, frame_rate: f64) -> usize {
    (t * frame_rate + EPS).floor().max(0.0) as usize
}

/// Boundary frames of every internal transition.
pub fn boundary_frames(segments: &[TimedSegment], frame_rate: f64) -> Vec<usize> {
    segments
        .windows(2)
        .map(|w| boundary_frame(0.5 * (w[0].end_s + w[1].start_s), frame_rate))
        .collect()
}

pub fn make_frame_targets(
    segments: &[TimedSegment],
    frame_rate: f64,
    frames: usize,
    dilation_frames: usize,
) -> Result<FrameTargets> {
    if !(frame_rate > 0.0 && frame_rate.is_finite()) {
        return Err(Error::Target(format!("frame rate {frame_rate}")));
    }
    if frames == 0 {
        return Err(Error::Target("zero frames".into()));
    }
    let (first, last) = match (segments.first(), segments.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Target("no segments".into())),
    };
    let slack = 1.0 / frame_rate + EPS;
    let total = frames as f64 / frame_rate;
    if first.start_s > slack {
        return Err(Error::Target(format!("gap of {:.3}s before the first segment", first.start_s)));
    }
    if (last.end_s - total).abs() > slack {
        return Err(Error::Target(format!(
            "segments end at {:.3}s but the sequence lasts {total:.3}s",
            last.end_s
        )));
    }
    for (i, w) in segments.windows(2).enumerate() {
        let gap = w[1].start_s - w[0].end_s;
        if gap.abs() > slack {
            let what = if gap > 0.0 { "gap" } else { "overlap" };
            return Err(Error::Target(format!("{what} of {:.3}s after segment {i}", gap.abs())));
        }
        if w[0].emotion == w[1].emotion {
            return Err(Error::Target(format!("segments {i} and {} repeat an emotion", i + 1)));
        }
    }
    for s in segments {
        if !(s.end_s > s.start_s) {
            return Err(Error::Target(format!("empty span {}..{}", s.start_s, s.end_s)));
        }
    }

    let mut dia = Vec::with_capacity(frames);
    let mut seg = 0;
    for t in 0..frames {
        let centre = (t as f64 + 0.5) / frame_rate;
        while seg + 1 < segments.len() && centre >= 0.5 * (segments[seg].end_s + segments[seg + 1].start_s) {
            seg += 1;
        }
        dia.push(segments[seg].emotion.index() as u8);
    }

    let mut det = vec![false; frames];
    for b in boundary_frames(segments, frame_rate) {
        let lo = b.saturating_sub(dilation_frames);
        let hi = (b + dilation_frames).min(frames - 1);
        for d in det.iter_mut().take(hi + 1).skip(lo) {
            *d = true;
        }
    }
    Ok(FrameTargets { dia, det })
}

/// One-hot rows for a label sequence.
pub fn one_hot(labels: &[u8]) -> ndarray::Array2<f32> {
    let mut m = ndarray::Array2::zeros((labels.len(), EmotionLabel::COUNT));
    for (t, &l) in labels.iter().enumerate() {
        m[[t, l as usize]] = 1.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use EmotionLabel::*;

    fn seg(a: f64, b: f64, e: EmotionLabel) -> TimedSegment {
        TimedSegment::new(a, b, e).unwrap()
    }

    #[test]
    fn two_segment_example() {
        let t = make_frame_targets(&[seg(0.0, 5.0, Angry), seg(5.0, 8.0, Sad)], 50.0, 400, 2).unwrap();
        assert!(t.dia[..250].iter().all(|&d| d == Angry.index() as u8));
        assert!(t.dia[250..].iter().all(|&d| d == Sad.index() as u8));
        let pos: Vec<usize> = (0..400).filter(|&i| t.det[i]).collect();
        assert_eq!(pos, vec![248, 249, 250, 251, 252]);
        assert_eq!(t.positive_runs(), 1);
    }

    #[test]
    fn single_segment_has_no_boundary() {
        let t = make_frame_targets(&[seg(0.0, 3.0, Happy)], 50.0, 150, 2).unwrap();
        assert!(t.det.iter().all(|&d| !d));
    }

    #[test]
    fn three_segments_two_pulses() {
        let s = [seg(0.0, 2.0, Happy), seg(2.0, 4.0, Neutral), seg(4.0, 6.0, Happy)];
        assert_eq!(boundary_frames(&s, 50.0), vec![100, 200]);
        let t = make_frame_targets(&s, 50.0, 300, 0).unwrap();
        let pos: Vec<usize> = (0..300).filter(|&i| t.det[i]).collect();
        assert_eq!(pos, vec![100, 200]);
        assert_eq!(make_frame_targets(&s, 50.0, 300, 2).unwrap().positive_runs(), 2);
    }

    #[test]
    fn gaps_and_overlaps_are_rejected() {
        let gap = [seg(0.0, 2.0, Happy), seg(2.5, 4.0, Sad)];
        assert!(matches!(make_frame_targets(&gap, 50.0, 200, 2), Err(Error::Target(_))));
        let overlap = [seg(0.0, 2.5, Happy), seg(2.0, 4.0, Sad)];
        assert!(make_frame_targets(&overlap, 50.0, 200, 2).is_err());
        let short = [seg(0.0, 2.0, Happy)];
        assert!(make_frame_targets(&short, 50.0, 200, 2).is_err());
        let slack = [seg(0.0, 2.0, Happy), seg(2.01, 3.99, Sad)];
        assert!(make_frame_targets(&slack, 50.0, 200, 2).is_ok());
    }
}
