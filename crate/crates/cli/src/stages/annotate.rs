use emotrans_core::attributes::{analyze_segment, build_attribute_sequence, AttributeSequence, SpeakerProfile};
use emotrans_core::caption::{compose_with_regeneration, CaptionBackend, CaptionVersion, PromptSpec};
use emotrans_core::clients::Transcript;
use emotrans_core::{seed, CaptionRecord, TimedSegment, UtteranceManifest};
use emotrans_mtetr::{checkpoint, decode, Mtetr};
use serde::{Deserialize, Serialize};

use crate::clients::Clients;
use crate::common::{load_manifests, original_segments, par_map, read_audio, save_manifests, write_json};
use crate::config::{CaptionBackendKind, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::stages::train::features_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub utterances: usize,
    /// Utterances whose predicted plan equals the manifest plan.
    pub plan_matches: usize,
    pub caption_attempts: usize,
}

/// Splits the transcript across `segments` by character timing midpoints.
/// Characters without a timing (such as joining spaces) follow the previous one.
pub fn segment_texts(t: &Transcript, segments: &[TimedSegment], duration_s: f64) -> Vec<String> {
    let mut out = vec![String::new(); segments.len()];
    let locate = |time: f64| {
        segments
            .iter()
            .position(|s| time < s.end_s)
            .unwrap_or(segments.len().saturating_sub(1))
    };
    let chars: Vec<char> = t.text.chars().collect();
    match &t.char_timings {
        Some(timings) => {
            let mut j = 0;
            let mut current = 0;
            for c in chars {
                if j < timings.len() && timings[j].ch == c {
                    current = locate(0.5 * (timings[j].start_s + timings[j].end_s));
                    j += 1;
                }
                out[current].push(c);
            }
        }
        None => {
            let n = chars.len().max(1) as f64;
            for (i, c) in chars.into_iter().enumerate() {
                out[locate((i as f64 + 0.5) / n * duration_s)].push(c);
            }
        }
    }
    out.into_iter().map(|s| s.trim().to_string()).collect()
}

pub fn profile_of(m: &UtteranceManifest) -> SpeakerProfile {
    m.extra
        .get("profile")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default()
}

fn compose(
    cfg: &PipelineConfig,
    clients: &Clients,
    m: &UtteranceManifest,
    attrs: &AttributeSequence,
) -> CliResult<(CaptionRecord, usize)> {
    let backend = match (cfg.captioning.backend, &clients.textgen) {
        (CaptionBackendKind::Client, Some(c)) => CaptionBackend::Client {
            client: c.as_ref(),
            max_attempts: cfg.captioning.max_attempts,
        },
        (CaptionBackendKind::Client, None) => {
            return Err(CliError::Validation(
                "captioning.backend = \"client\" needs textgen.endpoint".into(),
            ))
        }
        (CaptionBackendKind::Template, _) => CaptionBackend::Template,
    };
    let mut texts = Vec::with_capacity(2);
    let mut attempts = 0;
    for (i, version) in [CaptionVersion::VI, CaptionVersion::VD].into_iter().enumerate() {
        let spec = PromptSpec::new(version, attrs, m.language)?;
        let c = compose_with_regeneration(&backend, &spec, attrs, seed::derive_seed(m.seed, "caption", i as u64))?;
        attempts += c.attempts;
        texts.push(c.text);
    }
    let v_d = texts.pop().expect("two versions");
    let v_i = texts.pop().expect("two versions");
    Ok((
        CaptionRecord {
            v_i,
            v_d,
            encoded_plan: attrs.plan()?,
        },
        attempts,
    ))
}

/// Segments predicted by the model, on the original timeline.
pub fn predict_segments(
    cfg: &PipelineConfig,
    clients: &Clients,
    model: &Mtetr,
    m: &UtteranceManifest,
    original_duration_s: f64,
) -> CliResult<Vec<TimedSegment>> {
    let (rec, f) = features_for(cfg, clients, m)?;
    let p = model.predict(&f)?;
    let trimmed = decode(p.dia_probs.view(), f.frame_rate(), &cfg.mtetr.smoothing());
    original_segments(&trimmed, &rec.alignment, original_duration_s)
}

fn annotate_one(
    cfg: &PipelineConfig,
    clients: &Clients,
    model: &Mtetr,
    m: &UtteranceManifest,
) -> CliResult<(UtteranceManifest, usize)> {
    let audio = read_audio(cfg, &m.discourse_audio_ref)?;
    let segments = predict_segments(cfg, clients, model, m, audio.duration_s())?;
    let transcript = {
        let (rec, _) = crate::common::load_trimmed(cfg, &m.id)?;
        rec.transcript
    };
    let texts = segment_texts(&transcript, &segments, audio.duration_s());
    let analyses = segments
        .iter()
        .zip(&texts)
        .map(|(s, t)| analyze_segment(&audio, s, t, m.language))
        .collect::<Result<Vec<_>, _>>()?;
    let attrs = build_attribute_sequence(
        m.language,
        None,
        &segments,
        &analyses,
        profile_of(m),
        &cfg.attributes.thresholds(),
    )?;
    let (captions, attempts) = compose(cfg, clients, m, &attrs)?;
    let mut out = m.clone();
    out.captions = Some(captions);
    out.attributes = Some(attrs);
    out.validate()?;
    Ok((out, attempts))
}

pub fn load_model(cfg: &PipelineConfig) -> CliResult<Mtetr> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::Validation(format!(
            "no checkpoint at {}; run train-mtetr first",
            path.display()
        )));
    }
    let (model, _) = checkpoint::load(&path)?;
    Ok(model)
}

pub fn run(cfg: &PipelineConfig, clients: &Clients) -> CliResult<AnnotateReport> {
    let manifests = load_manifests(&cfg.manifests_path())?;
    let model = load_model(cfg)?;
    let done = par_map(cfg.parallelism, &manifests, |m| annotate_one(cfg, clients, &model, m))?;
    let annotated: Vec<UtteranceManifest> = done.iter().map(|(m, _)| m.clone()).collect();
    save_manifests(&cfg.manifests_path(), &annotated)?;
    let report = AnnotateReport {
        utterances: annotated.len(),
        plan_matches: annotated
            .iter()
            .filter(|m| m.captions.as_ref().is_some_and(|c| c.encoded_plan == m.plan))
            .count(),
        caption_attempts: done.iter().map(|(_, a)| a).sum(),
    };
    write_json(&cfg.paths.run_dir.join("annotate-report.json"), &report)?;
    println!(
        "annotated {} utterances ({} predicted plans match the manifest)",
        report.utterances, report.plan_matches
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use emotrans_core::clients::CharTiming;
    use emotrans_core::EmotionLabel::*;

    #[test]
    fn texts_follow_character_timings() {
        let timings = "abcd"
            .chars()
            .enumerate()
            .map(|(i, ch)| CharTiming {
                ch,
                start_s: i as f64,
                end_s: i as f64 + 1.0,
            })
            .collect();
        let t = Transcript {
            text: "ab cd".into(),
            char_timings: Some(timings),
        };
        let segs = [TimedSegment::new(0.0, 2.0, Sad).unwrap(), TimedSegment::new(2.0, 4.0, Happy).unwrap()];
        assert_eq!(segment_texts(&t, &segs, 4.0), vec!["ab", "cd"]);
        let untimed = Transcript {
            text: "abcd".into(),
            char_timings: None,
        };
        assert_eq!(segment_texts(&untimed, &segs, 4.0), vec!["ab", "cd"]);
    }
}
