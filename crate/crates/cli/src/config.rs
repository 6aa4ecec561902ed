//! Pipeline configuration: one TOML file, `EMOTRANS_<SECTION>_<KEY>`
//! environment overrides on top, command-line flags on top of both.

use std::path::{Path, PathBuf};

use emotrans_core::attributes::{AttributeThresholds, Band};
use emotrans_core::preprocess::VadParams;
use emotrans_core::Language;
use emotrans_mtetr::{ModelConfig, SmoothingConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "EMOTRANS_";

/// Table names accepted after [`ENV_PREFIX`].
pub const SECTIONS: [&str; 13] = [
    "paths",
    "dataset",
    "audio",
    "vad",
    "mtetr",
    "attributes",
    "captioning",
    "textgen",
    "tts",
    "ser",
    "asr",
    "embedder",
    "features",
];

const TOP_LEVEL: [&str; 2] = ["seed", "parallelism"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub parallelism: usize,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub audio: AudioConfig,
    #[serde(default)]
    pub vad: VadParams,
    #[serde(default)]
    pub mtetr: MtetrConfig,
    #[serde(default)]
    pub attributes: AttributesConfig,
    #[serde(default)]
    pub captioning: CaptioningConfig,
    #[serde(default)]
    pub textgen: ClientConfig,
    #[serde(default)]
    pub tts: ClientConfig,
    #[serde(default)]
    pub ser: ClientConfig,
    #[serde(default)]
    pub asr: ClientConfig,
    #[serde(default)]
    pub embedder: ClientConfig,
    #[serde(default)]
    pub features: ClientConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub run_dir: PathBuf,
    /// Relative to `run_dir` unless absolute.
    pub manifests: PathBuf,
    pub audio_dir: PathBuf,
    pub trimmed_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub topics: Option<PathBuf>,
    /// JSON list of `{speaker_id, emotion, key}`; the synthetic catalog otherwise.
    pub references: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            run_dir: PathBuf::from("run"),
            manifests: PathBuf::from("manifests.jsonl"),
            audio_dir: PathBuf::from("audio"),
            trimmed_dir: PathBuf::from("trimmed"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            topics: None,
            references: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub utterances: usize,
    pub languages: Vec<Language>,
    pub speakers: Vec<String>,
    pub transitions: Vec<usize>,
    /// Every n-th utterance goes to the test split.
    pub test_every: usize,
    pub tts_attempts: usize,
    pub textgen_attempts: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            utterances: 60,
            languages: vec![Language::En, Language::Zh],
            speakers: vec!["spk01".into(), "spk02".into(), "spk03".into(), "spk04".into()],
            transitions: vec![0, 1, 2, 3],
            test_every: 5,
            tts_attempts: emotrans_core::builder::DEFAULT_MAX_ATTEMPTS,
            textgen_attempts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    /// Linear fade at sentence joins; 0 disables it.
    pub ramp_ms: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            ramp_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtetrConfig {
    pub feature_dim: usize,
    pub frame_rate: f64,
    pub res_blocks: usize,
    pub transformer_layers: usize,
    pub dropout: f64,
    pub multi_task: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dilation_frames: usize,
    pub max_pos_weight: f64,
    pub time_budget_s: Option<f64>,
    pub median_frames: usize,
    pub min_segment_s: f64,
}

impl Default for MtetrConfig {
    fn default() -> Self {
        let model = ModelConfig::reduced();
        let train = TrainConfig::default();
        let smoothing = SmoothingConfig::default();
        Self {
            feature_dim: model.in_planes,
            frame_rate: emotrans_mtetr::FRAME_RATE,
            res_blocks: model.res_blocks,
            transformer_layers: model.transformer_layers,
            dropout: model.dropout,
            multi_task: model.multi_task,
            epochs: 8,
            batch_size: 4,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            dilation_frames: train.dilation_frames,
            max_pos_weight: train.max_pos_weight,
            time_budget_s: Some(600.0),
            median_frames: smoothing.median_frames,
            min_segment_s: smoothing.min_segment_s,
        }
    }
}

impl MtetrConfig {
    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            in_planes: self.feature_dim,
            res_blocks: self.res_blocks,
            transformer_layers: self.transformer_layers,
            dropout: self.dropout,
            multi_task: self.multi_task,
            ..ModelConfig::default()
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            dilation_frames: self.dilation_frames,
            max_pos_weight: self.max_pos_weight,
            time_budget_s: self.time_budget_s,
        }
    }

    pub fn smoothing(&self) -> SmoothingConfig {
        SmoothingConfig {
            median_frames: self.median_frames,
            min_segment_s: self.min_segment_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributesConfig {
    pub pitch_low_hz: f64,
    pub pitch_high_hz: f64,
    pub energy_low_db: f64,
    pub energy_high_db: f64,
    pub speed_en_low: f64,
    pub speed_en_high: f64,
    pub speed_zh_low: f64,
    pub speed_zh_high: f64,
}

impl Default for AttributesConfig {
    fn default() -> Self {
        let t = AttributeThresholds::default();
        Self {
            pitch_low_hz: t.pitch_hz.low,
            pitch_high_hz: t.pitch_hz.high,
            energy_low_db: t.energy_db.low,
            energy_high_db: t.energy_db.high,
            speed_en_low: t.speed_en.low,
            speed_en_high: t.speed_en.high,
            speed_zh_low: t.speed_zh.low,
            speed_zh_high: t.speed_zh.high,
        }
    }
}

impl AttributesConfig {
    pub fn thresholds(&self) -> AttributeThresholds {
        let band = |low, high| Band { low, high };
        AttributeThresholds {
            pitch_hz: band(self.pitch_low_hz, self.pitch_high_hz),
            energy_db: band(self.energy_low_db, self.energy_high_db),
            speed_en: band(self.speed_en_low, self.speed_en_high),
            speed_zh: band(self.speed_zh_low, self.speed_zh_high),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionBackendKind {
    Template,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptioningConfig {
    pub backend: CaptionBackendKind,
    pub max_attempts: usize,
}

impl Default for CaptioningConfig {
    fn default() -> Self {
        Self {
            backend: CaptionBackendKind::Template,
            max_attempts: 3,
        }
    }
}

/// A remote model service. Without an endpoint the offline fallback is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub endpoint: Option<String>,
    pub timeout_s: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            timeout_s: 30.0,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub run_dir: Option<PathBuf>,
    pub offline: bool,
}

fn parse_env_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `EMOTRANS_<SECTION>_<KEY>=value` pairs to a parsed table.
/// Variables naming no known section are ignored.
pub fn apply_env<I>(table: &mut toml::Table, vars: I) -> CliResult<()>
where
    I: IntoIterator<Item = (String, String)>,
{
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let rest = rest.to_ascii_lowercase();
        let value = parse_env_value(&raw);
        if TOP_LEVEL.contains(&rest.as_str()) {
            table.insert(rest, value);
            continue;
        }
        let Some(section) = SECTIONS
            .iter()
            .find(|s| rest.strip_prefix(*s).is_some_and(|k| k.starts_with('_')))
        else {
            log::debug!("ignoring environment variable {name}");
            continue;
        };
        let key = &rest[section.len() + 1..];
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(key.to_string(), value);
            }
            _ => {
                return Err(CliError::Validation(format!("`{section}` is not a table")));
            }
        }
    }
    Ok(())
}

impl PipelineConfig {
    pub fn from_table(table: toml::Table) -> CliResult<Self> {
        if !table.contains_key("seed") {
            return Err(CliError::Validation("config: `seed` is mandatory".into()));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))
    }

    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        Self::from_table(table)
    }

    /// Reads `path`, applies environment overrides and resolves relative
    /// paths against the file's directory.
    pub fn load<I>(path: &Path, env: I) -> CliResult<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
        apply_env(&mut table, env)?;
        let mut cfg = Self::from_table(table)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.resolve_relative_to(base);
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.run_dir);
        if let Some(p) = self.paths.topics.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.references.as_mut() {
            fix(p);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.parallelism {
            self.parallelism = p;
        }
        if let Some(d) = &o.run_dir {
            self.paths.run_dir = d.clone();
        }
        if o.offline {
            for c in [
                &mut self.textgen,
                &mut self.tts,
                &mut self.ser,
                &mut self.asr,
                &mut self.embedder,
                &mut self.features,
            ] {
                c.endpoint = None;
            }
            self.captioning.backend = CaptionBackendKind::Template;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        let d = &self.dataset;
        if d.languages.is_empty() || d.speakers.is_empty() || d.transitions.is_empty() {
            return bad("dataset: languages, speakers and transitions must be non-empty".into());
        }
        if d.test_every < 2 {
            return bad("dataset.test_every must be at least 2".into());
        }
        if d.tts_attempts == 0 || d.textgen_attempts == 0 || self.captioning.max_attempts == 0 {
            return bad("attempt limits must be at least 1".into());
        }
        if let Some(k) = d.transitions.iter().find(|&&k| k > 3) {
            return bad(format!("dataset.transitions: {k} exceeds 3"));
        }
        if !emotrans_core::preprocess::SUPPORTED_RATES.contains(&self.audio.sample_rate) {
            return bad(format!("audio.sample_rate {} is not supported", self.audio.sample_rate));
        }
        if !(self.audio.ramp_ms >= 0.0) {
            return bad("audio.ramp_ms must be non-negative".into());
        }
        if !(self.mtetr.frame_rate > 0.0) {
            return bad("mtetr.frame_rate must be positive".into());
        }
        self.mtetr
            .model()
            .validate()
            .map_err(|e| CliError::Validation(format!("mtetr: {e}")))?;
        for (name, c) in self.clients() {
            if c.endpoint.is_some() && !(c.timeout_s > 0.0) {
                return bad(format!("{name}.timeout_s must be positive"));
            }
        }
        for p in [&self.paths.topics, &self.paths.references].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("path {} does not exist", p.display()));
            }
        }
        if let Some(parent) = self.paths.run_dir.parent().filter(|p| !p.as_os_str().is_empty()) {
            if !parent.is_dir() {
                return bad(format!("run_dir parent {} does not exist", parent.display()));
            }
        }
        Ok(())
    }

    pub fn clients(&self) -> [(&'static str, &ClientConfig); 6] {
        [
            ("textgen", &self.textgen),
            ("tts", &self.tts),
            ("ser", &self.ser),
            ("asr", &self.asr),
            ("embedder", &self.embedder),
            ("features", &self.features),
        ]
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// SHA-256 of the serialized configuration, hex encoded.
    pub fn hash(&self) -> CliResult<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn under_run(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.paths.run_dir.join(p)
        }
    }

    pub fn manifests_path(&self) -> PathBuf {
        self.under_run(&self.paths.manifests)
    }

    pub fn audio_dir(&self) -> PathBuf {
        self.under_run(&self.paths.audio_dir)
    }

    pub fn trimmed_dir(&self) -> PathBuf {
        self.under_run(&self.paths.trimmed_dir)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.under_run(&self.paths.checkpoint_dir)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint_dir().join("mtetr.ckpt")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(
            PipelineConfig::from_toml_str("[vad]\nframe_ms = 30\n"),
            Err(CliError::Validation(_))
        ));
        let cfg = PipelineConfig::from_toml_str("seed = 3\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.vad, VadParams::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml_str("seed = 1\n[vad]\nframes = 3\n").is_err());
    }

    #[test]
    fn environment_overrides_file_values() {
        let mut t: toml::Table = "seed = 1\n[vad]\nframe_ms = 30\n".parse().unwrap();
        apply_env(
            &mut t,
            env(&[
                ("EMOTRANS_VAD_FRAME_MS", "20"),
                ("EMOTRANS_MTETR_LEARNING_RATE", "0.01"),
                ("EMOTRANS_TEXTGEN_ENDPOINT", "http://localhost:9/x"),
                ("EMOTRANS_SEED", "44"),
                ("EMOTRANS_LOG", "debug"),
                ("PATH", "/bin"),
            ]),
        )
        .unwrap();
        let cfg = PipelineConfig::from_table(t).unwrap();
        assert_eq!(cfg.seed, 44);
        assert_eq!(cfg.vad.frame_ms, 20);
        assert_eq!(cfg.mtetr.learning_rate, 0.01);
        assert_eq!(cfg.textgen.endpoint.as_deref(), Some("http://localhost:9/x"));
    }

    #[test]
    fn flags_override_environment() {
        let mut t: toml::Table = "seed = 1\n".parse().unwrap();
        apply_env(&mut t, env(&[("EMOTRANS_SEED", "5"), ("EMOTRANS_TTS_ENDPOINT", "http://h")])).unwrap();
        let mut cfg = PipelineConfig::from_table(t).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            offline: true,
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.tts.endpoint, None);
    }

    #[test]
    fn dump_and_reload_round_trip() {
        let mut cfg = PipelineConfig::from_toml_str("seed = 12\n").unwrap();
        cfg.mtetr.time_budget_s = Some(30.0);
        cfg.asr.endpoint = Some("http://127.0.0.1:1/asr".into());
        cfg.paths.topics = Some(PathBuf::from("/tmp/topics.toml"));
        let back = PipelineConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn derived_settings_follow_the_sections() {
        let cfg = PipelineConfig::from_toml_str("seed = 1\n[attributes]\npitch_low_hz = 100.0\n").unwrap();
        assert_eq!(cfg.attributes.thresholds().pitch_hz.low, 100.0);
        assert_eq!(cfg.mtetr.model().res_blocks, 2);
        assert!(cfg.validate().is_ok());
    }
}
