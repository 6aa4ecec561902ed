use emotrans_core::builder::{concatenate_with_ramp, normalize_loudness, synthesize_with_retry, ReferenceCatalog};
use emotrans_core::planner::{
    enumerate_transition_plans, generate_discourse, DiscourseBackend, GenerationRequest, Perspective, Topic,
    TopicHierarchy,
};
use emotrans_core::{seed, EmotionLabel, SentenceRecord, TransitionPlan, UtteranceManifest};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clients::Clients;
use crate::common::{ensure_dir, par_map, read_json, save_manifests, write_json, SPLIT_KEY, TEST, TRAIN};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub utterances: usize,
    pub sentences: usize,
    pub tts_attempts: usize,
    pub duration_s: f64,
}

/// What utterance `i` will contain, decided before any client call.
#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePlan {
    pub index: usize,
    pub id: String,
    pub seed: u64,
    pub request: GenerationRequest,
    pub speaker_id: String,
    pub split: &'static str,
}

pub fn catalog(cfg: &PipelineConfig) -> CliResult<ReferenceCatalog> {
    let c = match &cfg.paths.references {
        Some(p) => read_json::<ReferenceCatalog>(p)?,
        None => ReferenceCatalog::synthetic(&cfg.dataset.speakers),
    };
    Ok(c)
}

pub fn topics(cfg: &PipelineConfig) -> CliResult<TopicHierarchy> {
    Ok(match &cfg.paths.topics {
        Some(p) => TopicHierarchy::load(p)?,
        None => TopicHierarchy::default(),
    })
}

/// Transition counts cycle fastest, then languages; plan, topic, speaker and
/// perspective are drawn from the utterance's own substream.
pub fn schedule(cfg: &PipelineConfig) -> CliResult<Vec<UtterancePlan>> {
    let d = &cfg.dataset;
    let all_topics: Vec<Topic> = topics(cfg)?.all_topics();
    if all_topics.is_empty() {
        return Err(CliError::Validation("topic hierarchy is empty".into()));
    }
    let mut plans_by_k = Vec::new();
    for &k in &d.transitions {
        plans_by_k.push(enumerate_transition_plans(&EmotionLabel::ALL, k)?);
    }
    let nk = d.transitions.len();
    let mut out = Vec::with_capacity(d.utterances);
    for i in 0..d.utterances {
        let mut rng = seed::substream(cfg.seed, "utterance-plan", i as u64);
        let plans: &[TransitionPlan] = &plans_by_k[i % nk];
        let language = d.languages[(i / nk) % d.languages.len()];
        let plan = plans.choose(&mut rng).expect("non-empty").clone();
        let topic = all_topics.choose(&mut rng).expect("non-empty").clone();
        let perspective = *Perspective::ALL.choose(&mut rng).expect("non-empty");
        let speaker_id = d.speakers.choose(&mut rng).expect("non-empty").clone();
        let utt_seed = seed::derive_seed(cfg.seed, "utterance", i as u64);
        out.push(UtterancePlan {
            index: i,
            id: format!("utt{i:05}"),
            seed: utt_seed,
            request: GenerationRequest {
                topic,
                plan,
                perspective,
                language,
                seed: utt_seed,
            },
            speaker_id,
            split: if i % d.test_every == 0 { TEST } else { TRAIN },
        });
    }
    Ok(out)
}

fn build_one(
    cfg: &PipelineConfig,
    clients: &Clients,
    catalog: &ReferenceCatalog,
    u: &UtterancePlan,
) -> CliResult<(UtteranceManifest, usize)> {
    let backend = match &clients.textgen {
        Some(c) => DiscourseBackend::Client {
            client: c.as_ref(),
            max_attempts: cfg.dataset.textgen_attempts,
        },
        None => DiscourseBackend::Template,
    };
    let texts = generate_discourse(&backend, &u.request)?;
    let emotions = u.request.plan.emotions();
    let mut pieces = Vec::with_capacity(texts.len());
    let mut attempts = 0;
    for (j, (text, &emotion)) in texts.iter().zip(emotions).enumerate() {
        let reference = catalog.select_reference(&u.speaker_id, emotion)?;
        let out = synthesize_with_retry(
            clients.tts.as_ref(),
            clients.ser.as_ref(),
            text,
            emotion,
            reference,
            cfg.dataset.tts_attempts,
            seed::derive_seed(u.seed, "sentence", j as u64),
        )?;
        attempts += out.attempts;
        pieces.push(out.waveform);
    }
    let normalized = normalize_loudness(&pieces)?;
    let ramp = (cfg.audio.ramp_ms > 0.0).then_some(cfg.audio.ramp_ms / 1000.0);
    let (discourse, spans) = concatenate_with_ramp(&normalized, emotions, ramp)?;

    let dir = cfg.audio_dir().join(&u.id);
    ensure_dir(&dir)?;
    let rel_dir = cfg.paths.audio_dir.join(&u.id);
    let mut sentences = Vec::with_capacity(texts.len());
    for (j, ((text, w), span)) in texts.iter().zip(&normalized).zip(&spans).enumerate() {
        let name = format!("s{j}.wav");
        w.write_wav(&dir.join(&name))?;
        sentences.push(SentenceRecord {
            text: text.clone(),
            emotion: span.emotion,
            start_s: span.start_s,
            end_s: span.end_s,
            audio_ref: rel_dir.join(&name).to_string_lossy().into_owned(),
        });
    }
    let discourse_name = format!("{}.wav", u.id);
    discourse.write_wav(&cfg.audio_dir().join(&discourse_name))?;

    let mut extra = serde_json::Map::new();
    extra.insert(SPLIT_KEY.into(), u.split.into());
    extra.insert("topic".into(), serde_json::to_value(&u.request.topic)?);
    extra.insert("perspective".into(), serde_json::to_value(u.request.perspective)?);
    let m = UtteranceManifest {
        id: u.id.clone(),
        language: u.request.language,
        speaker_id: u.speaker_id.clone(),
        plan: u.request.plan.clone(),
        sentences,
        discourse_audio_ref: cfg.paths.audio_dir.join(discourse_name).to_string_lossy().into_owned(),
        captions: None,
        attributes: None,
        seed: u.seed,
        extra,
    };
    m.validate()?;
    Ok((m, attempts))
}

pub fn run(cfg: &PipelineConfig, clients: &Clients) -> CliResult<BuildReport> {
    let catalog = catalog(cfg)?;
    for s in &cfg.dataset.speakers {
        for e in EmotionLabel::ALL {
            catalog.select_reference(s, e)?;
        }
    }
    let schedule = schedule(cfg)?;
    ensure_dir(&cfg.audio_dir())?;
    let built = par_map(cfg.parallelism, &schedule, |u| build_one(cfg, clients, &catalog, u))?;
    let manifests: Vec<UtteranceManifest> = built.iter().map(|(m, _)| m.clone()).collect();
    save_manifests(&cfg.manifests_path(), &manifests)?;
    let report = BuildReport {
        utterances: manifests.len(),
        sentences: manifests.iter().map(|m| m.sentences.len()).sum(),
        tts_attempts: built.iter().map(|(_, a)| a).sum(),
        duration_s: manifests.iter().map(UtteranceManifest::duration_s).sum(),
    };
    write_json(&cfg.paths.run_dir.join("build-report.json"), &report)?;
    println!(
        "built {} utterances ({} sentences, {:.1} s of audio) -> {}",
        report.utterances,
        report.sentences,
        report.duration_s,
        cfg.manifests_path().display()
    );
    Ok(report)
}
