//! Chooses a remote client or the offline fallback for every service.

use emotrans_core::clients::{
    AsrClient, EmbedderClient, FeatureExtractor, SerClient, TextGenClient, TtsClient,
};
use emotrans_core::fallback::{DescriptorExtractor, ManifestAsr, ToneEmbedder, ToneSer, ToneVoice};

use crate::config::{ClientConfig, PipelineConfig};
use crate::remote::RemoteClient;

pub struct Clients {
    /// `None` selects the template backends.
    pub textgen: Option<Box<dyn TextGenClient>>,
    pub tts: Box<dyn TtsClient>,
    pub ser: Box<dyn SerClient>,
    /// `None` transcribes from manifest text.
    pub asr: Option<Box<dyn AsrClient>>,
    pub embedder: Box<dyn EmbedderClient>,
    pub features: Box<dyn FeatureExtractor>,
}

fn remote(c: &ClientConfig) -> Option<RemoteClient> {
    c.endpoint.as_ref().map(|e| RemoteClient::new(e.clone(), c.timeout_s))
}

impl Clients {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        fn pick<T: ?Sized>(r: Option<RemoteClient>, fallback: Box<T>, wrap: fn(RemoteClient) -> Box<T>) -> Box<T> {
            r.map_or(fallback, wrap)
        }
        Self {
            textgen: remote(&cfg.textgen).map(|r| Box::new(r) as Box<dyn TextGenClient>),
            tts: pick(
                remote(&cfg.tts),
                Box::new(ToneVoice {
                    sample_rate: cfg.audio.sample_rate,
                }),
                |r| Box::new(r),
            ),
            ser: pick(remote(&cfg.ser), Box::new(ToneSer), |r| Box::new(r)),
            asr: remote(&cfg.asr).map(|r| Box::new(r) as Box<dyn AsrClient>),
            embedder: pick(
                remote(&cfg.embedder),
                Box::new(ToneEmbedder {
                    frame_rate: cfg.mtetr.frame_rate,
                }),
                |r| Box::new(r),
            ),
            features: pick(
                remote(&cfg.features),
                Box::new(DescriptorExtractor::new(cfg.mtetr.feature_dim, cfg.mtetr.frame_rate)),
                |r| Box::new(r),
            ),
        }
    }

    /// The configured ASR client, or one that replays `spans` (text, start, end).
    pub fn asr_or_manifest<'a>(&'a self, spans: Vec<(String, f64, f64)>) -> AsrRef<'a> {
        match &self.asr {
            Some(a) => AsrRef::Borrowed(a.as_ref()),
            None => AsrRef::Owned(ManifestAsr::new(spans)),
        }
    }
}

pub enum AsrRef<'a> {
    Borrowed(&'a dyn AsrClient),
    Owned(ManifestAsr),
}

impl AsrRef<'_> {
    pub fn get(&self) -> &dyn AsrClient {
        match self {
            AsrRef::Borrowed(a) => *a,
            AsrRef::Owned(m) => m,
        }
    }
}
