use std::path::{Path, PathBuf};

use emotrans_core::preprocess::AlignmentMap;
use emotrans_core::{manifest, TimedSegment, UtteranceManifest, Waveform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const SPLIT_KEY: &str = "split";
pub const TRAIN: &str = "train";
pub const TEST: &str = "test";

pub fn split_of(m: &UtteranceManifest) -> &str {
    m.extra.get(SPLIT_KEY).and_then(|v| v.as_str()).unwrap_or(TRAIN)
}

pub fn ensure_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(CliError::io(format!("cannot create {}", p.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    std::fs::write(path, text).map_err(CliError::io(format!("cannot write {}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("cannot read {}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads and validates every manifest; an empty file is a validation error.
pub fn load_manifests(path: &Path) -> CliResult<Vec<UtteranceManifest>> {
    if !path.is_file() {
        return Err(CliError::Validation(format!("manifest file {} does not exist", path.display())));
    }
    let all = manifest::load(path)?;
    if all.is_empty() {
        return Err(CliError::Validation(format!("manifest file {} is empty", path.display())));
    }
    for m in &all {
        m.validate()
            .map_err(|e| CliError::Validation(format!("manifest `{}`: {e}", m.id)))?;
    }
    Ok(all)
}

pub fn save_manifests(path: &Path, all: &[UtteranceManifest]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    Ok(manifest::save(path, all)?)
}

/// Runs `f` over `items` on a pool of `parallelism` threads, keeping order.
pub fn par_map<T, R, F>(parallelism: usize, items: &[T], f: F) -> CliResult<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> CliResult<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

pub fn resolve(cfg: &PipelineConfig, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cfg.paths.run_dir.join(p)
    }
}

pub fn read_audio(cfg: &PipelineConfig, reference: &str) -> CliResult<Waveform> {
    Ok(Waveform::read_wav(&resolve(cfg, reference))?)
}

/// Output of the preprocess stage for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimRecord {
    pub id: String,
    pub audio_ref: String,
    pub original_duration_s: f64,
    pub alignment: AlignmentMap,
    pub transcript: emotrans_core::clients::Transcript,
}

pub fn trim_record_path(cfg: &PipelineConfig, id: &str) -> PathBuf {
    cfg.trimmed_dir().join(format!("{id}.align.json"))
}

pub fn load_trimmed(cfg: &PipelineConfig, id: &str) -> CliResult<(TrimRecord, Waveform)> {
    let path = trim_record_path(cfg, id);
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "no preprocess output for `{id}` (expected {}); run preprocess first",
            path.display()
        )));
    }
    let rec: TrimRecord = read_json(&path)?;
    let audio = read_audio(cfg, &rec.audio_ref)?;
    Ok((rec, audio))
}

/// Manifest segments moved onto the trimmed timeline, ending at `frames / fr`.
pub fn trimmed_segments(
    m: &UtteranceManifest,
    align: &AlignmentMap,
    frames: usize,
    frame_rate: f64,
) -> CliResult<Vec<TimedSegment>> {
    let segs = m.timed_segments();
    let total = frames as f64 / frame_rate;
    let mut out = Vec::with_capacity(segs.len());
    for (i, s) in segs.iter().enumerate() {
        let start = if i == 0 { 0.0 } else { align.map_to_trimmed(s.start_s) };
        let end = if i + 1 == segs.len() {
            total
        } else {
            align.map_to_trimmed(s.end_s).min(total)
        };
        let seg = TimedSegment::new(start, end, s.emotion).map_err(|_| {
            CliError::Validation(format!(
                "`{}`: segment {i} vanishes after silence removal ({start:.3}..{end:.3})",
                m.id
            ))
        })?;
        out.push(seg);
    }
    Ok(out)
}

/// Predicted trimmed-domain segments moved back onto the original timeline,
/// spanning the whole recording.
pub fn original_segments(
    predicted: &[TimedSegment],
    align: &AlignmentMap,
    original_duration_s: f64,
) -> CliResult<Vec<TimedSegment>> {
    let kept = align.kept_duration();
    let mut out: Vec<TimedSegment> = Vec::with_capacity(predicted.len());
    for (i, s) in predicted.iter().enumerate() {
        let start = if i == 0 { 0.0 } else { align.map_to_original(s.start_s.min(kept))? };
        let end = if i + 1 == predicted.len() {
            original_duration_s
        } else {
            align.map_to_original(s.end_s.min(kept))?
        };
        match TimedSegment::new(start, end, s.emotion) {
            Ok(seg) => out.push(seg),
            Err(_) => log::debug!("dropping empty mapped segment {i}"),
        }
    }
    // Dropping an empty span can leave equal neighbours or a gap; close both.
    let mut merged: Vec<TimedSegment> = Vec::with_capacity(out.len());
    for s in out {
        match merged.last_mut() {
            Some(last) if last.emotion == s.emotion => last.end_s = s.end_s,
            Some(last) => {
                let mut s = s;
                s.start_s = last.end_s;
                merged.push(s);
            }
            None => {
                let mut s = s;
                s.start_s = 0.0;
                merged.push(s);
            }
        }
    }
    if merged.is_empty() {
        return Err(CliError::Validation("prediction produced no segments".into()));
    }
    Ok(merged)
}
