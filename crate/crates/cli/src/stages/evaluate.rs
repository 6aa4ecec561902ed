use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use emotrans_core::attributes::AttributeSequence;
use emotrans_core::builder::{concatenate, normalize_loudness, ReferenceCatalog};
use emotrans_core::caption::parse_caption_plan;
use emotrans_core::metrics::{self, EvalPair};
use emotrans_core::{seed, EmotionLabel, TimedSegment, UtteranceManifest};
use emotrans_mtetr::eval::{evaluate, EvalExample, EvalReport};
use serde::{Deserialize, Serialize};

use crate::clients::Clients;
use crate::common::{load_manifests, par_map, read_audio, split_of, write_json, write_text, TEST};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::stages::annotate::load_model;
use crate::stages::build::catalog;
use crate::stages::train::example_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub utterances: usize,
    #[serde(rename = "Acc_ETC")]
    pub acc_etc: f64,
    #[serde(rename = "Acc_ETC_by_k")]
    pub acc_etc_by_k: BTreeMap<usize, f64>,
    /// Absent when no prediction had the right transition count.
    #[serde(rename = "Acc_ETT")]
    pub acc_ett: Option<f64>,
    pub exact_sequence_accuracy: f64,
    #[serde(rename = "EES^1")]
    pub ees_1: Option<f64>,
    #[serde(rename = "EES^2")]
    pub ees_2: Option<f64>,
    #[serde(rename = "EES^3")]
    pub ees_3: Option<f64>,
    #[serde(rename = "EES_by_k")]
    pub ees_by_k: BTreeMap<usize, f64>,
    #[serde(rename = "FEA")]
    pub fea: f64,
    #[serde(rename = "EER")]
    pub eer: Option<f64>,
    pub mtetr: EvalReport,
}

impl MetricsReport {
    pub fn render_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>8}", "Metric", "Value");
        let _ = writeln!(s, "{:<10} {:>8}", "Utterances", self.utterances);
        let _ = writeln!(s, "{:<10} {:>8.2}", "Acc_ETC", self.acc_etc);
        let _ = writeln!(s, "{:<10} {:>8}", "Acc_ETT", opt(self.acc_ett));
        for (k, v) in [(1, self.ees_1), (2, self.ees_2), (3, self.ees_3)] {
            let _ = writeln!(s, "{:<10} {:>8}", format!("EES^{k}"), opt(v));
        }
        let _ = writeln!(s, "{:<10} {:>8.2}", "FEA", self.fea);
        let _ = writeln!(s, "{:<10} {:>8}", "EER", opt(self.eer));
        s
    }
}

/// Emotion of the attribute segment overlapping `seg` the most.
fn caption_emotion(attrs: &AttributeSequence, seg: &TimedSegment) -> Option<EmotionLabel> {
    attrs
        .segments
        .iter()
        .map(|a| (a.emotion, (a.end_s.min(seg.end_s) - a.start_s.max(seg.start_s)).max(0.0)))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(e, _)| e)
}

/// Resynthesizes the true segment texts in the emotions the caption assigns
/// them and scores the result against the original recording.
fn ees_one(
    cfg: &PipelineConfig,
    clients: &Clients,
    catalog: &ReferenceCatalog,
    m: &UtteranceManifest,
) -> CliResult<f64> {
    let attrs = m
        .attributes
        .as_ref()
        .ok_or_else(|| CliError::Validation(format!("`{}` has no attributes; run annotate first", m.id)))?;
    let audio = read_audio(cfg, &m.discourse_audio_ref)?;
    let segments = m.timed_segments();
    let texts: Vec<String> = segments
        .iter()
        .map(|seg| {
            m.sentences
                .iter()
                .filter(|s| s.start_s >= seg.start_s - 1e-9 && s.end_s <= seg.end_s + 1e-9)
                .map(|s| s.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let truth = segments
        .iter()
        .map(|s| clients.embedder.embed(&audio.slice_s(s.start_s, s.end_s)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pieces = Vec::with_capacity(segments.len());
    for (j, (seg, text)) in segments.iter().zip(&texts).enumerate() {
        let e = caption_emotion(attrs, seg).unwrap_or(seg.emotion);
        let reference = catalog.select_reference(&m.speaker_id, e)?;
        pieces.push(clients.tts.synthesize(text, reference, seed::derive_seed(m.seed, "ees", j as u64))?);
    }
    // Only the spans matter here; the true labels keep neighbours distinct.
    let labels: Vec<EmotionLabel> = segments.iter().map(|s| s.emotion).collect();
    let (synth, spans) = concatenate(&normalize_loudness(&pieces)?, &labels)?;
    let asr = clients.asr_or_manifest(
        texts
            .iter()
            .zip(&spans)
            .map(|(t, s)| (t.clone(), s.start_s, s.end_s))
            .collect(),
    );
    Ok(metrics::ees(&synth, &texts, asr.get(), clients.embedder.as_ref(), &truth)?)
}

pub fn evaluate_manifests(
    cfg: &PipelineConfig,
    clients: &Clients,
    manifests: &[UtteranceManifest],
) -> CliResult<MetricsReport> {
    let test: Vec<UtteranceManifest> = manifests.iter().filter(|m| split_of(m) == TEST).cloned().collect();
    if test.is_empty() {
        return Err(CliError::Validation("no test utterances in the manifest".into()));
    }
    let mut pairs = Vec::with_capacity(test.len());
    for m in &test {
        let c = m
            .captions
            .as_ref()
            .ok_or_else(|| CliError::Validation(format!("`{}` has no captions; run annotate first", m.id)))?;
        let parsed = parse_caption_plan(&c.v_i)?;
        pairs.push(EvalPair::new(parsed.plan, m.plan.clone()));
    }
    let catalog = catalog(cfg)?;
    let ees = par_map(cfg.parallelism, &test, |m| ees_one(cfg, clients, &catalog, m))?;
    let scored: Vec<(usize, f64)> = test.iter().map(|m| m.plan.transition_count()).zip(ees).collect();
    let ees_by_k = metrics::ees_by_k(&scored);

    let model = load_model(cfg)?;
    let examples = par_map(cfg.parallelism, &test, |m| {
        let ex = example_for(cfg, clients, m)?;
        Ok(EvalExample {
            features: ex.features,
            targets: ex.targets,
            plan: m.plan.clone(),
        })
    })?;
    let mtetr = evaluate(&model, &examples, &cfg.mtetr.smoothing())?;

    Ok(MetricsReport {
        utterances: test.len(),
        acc_etc: metrics::acc_etc(&pairs)?,
        acc_etc_by_k: metrics::acc_etc_by_k(&pairs),
        acc_ett: metrics::acc_ett(&pairs),
        exact_sequence_accuracy: metrics::exact_sequence_accuracy(&pairs)?,
        ees_1: ees_by_k.get(&1).copied(),
        ees_2: ees_by_k.get(&2).copied(),
        ees_3: ees_by_k.get(&3).copied(),
        ees_by_k,
        fea: mtetr.fea,
        eer: mtetr.eer,
        mtetr,
    })
}

pub fn run(cfg: &PipelineConfig, clients: &Clients, manifest: Option<&Path>) -> CliResult<MetricsReport> {
    let path = manifest.map_or_else(|| cfg.manifests_path(), Path::to_path_buf);
    let manifests = load_manifests(&path)?;
    let report = evaluate_manifests(cfg, clients, &manifests)?;
    write_json(&cfg.paths.run_dir.join("metrics.json"), &report)?;
    let text = report.render_text();
    write_text(&cfg.paths.run_dir.join("metrics.txt"), &text)?;
    print!("{text}");
    Ok(report)
}
