use emotrans_core::preprocess::{transcribe, trim_silence};
use emotrans_core::UtteranceManifest;
use serde::{Deserialize, Serialize};

use crate::clients::Clients;
use crate::common::{ensure_dir, load_manifests, par_map, read_audio, trim_record_path, write_json, TrimRecord};
use crate::config::PipelineConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub utterances: usize,
    pub original_s: f64,
    pub kept_s: f64,
}

fn preprocess_one(cfg: &PipelineConfig, clients: &Clients, m: &UtteranceManifest) -> CliResult<TrimRecord> {
    let audio = read_audio(cfg, &m.discourse_audio_ref)?;
    let (trimmed, alignment) = trim_silence(&audio, &cfg.vad)?;
    let name = format!("{}.wav", m.id);
    trimmed.write_wav(&cfg.trimmed_dir().join(&name))?;
    let spans = m.sentences.iter().map(|s| (s.text.clone(), s.start_s, s.end_s)).collect();
    let asr = clients.asr_or_manifest(spans);
    let transcript = transcribe(asr.get(), &audio)?;
    let rec = TrimRecord {
        id: m.id.clone(),
        audio_ref: cfg.paths.trimmed_dir.join(name).to_string_lossy().into_owned(),
        original_duration_s: audio.duration_s(),
        alignment,
        transcript,
    };
    write_json(&trim_record_path(cfg, &m.id), &rec)?;
    Ok(rec)
}

pub fn run(cfg: &PipelineConfig, clients: &Clients) -> CliResult<PreprocessReport> {
    let manifests = load_manifests(&cfg.manifests_path())?;
    ensure_dir(&cfg.trimmed_dir())?;
    let recs = par_map(cfg.parallelism, &manifests, |m| preprocess_one(cfg, clients, m))?;
    let report = PreprocessReport {
        utterances: recs.len(),
        original_s: recs.iter().map(|r| r.original_duration_s).sum(),
        kept_s: recs.iter().map(|r| r.alignment.kept_duration()).sum(),
    };
    write_json(&cfg.paths.run_dir.join("preprocess-report.json"), &report)?;
    println!(
        "trimmed {} utterances: {:.1} s -> {:.1} s",
        report.utterances, report.original_s, report.kept_s
    );
    Ok(report)
}
