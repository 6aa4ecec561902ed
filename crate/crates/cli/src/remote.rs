//! JSON-over-HTTP implementations of the client traits.
//!
//! Every service takes one POST with a JSON body and answers with JSON:
//!
//! | service  | request                          | response                         |
//! |----------|----------------------------------|----------------------------------|
//! | textgen  | `{prompt, language, seed}`       | `{lines: [string]}`              |
//! | tts      | `{text, reference_key, seed}`    | `{sample_rate, samples}`         |
//! | ser      | `{sample_rate, samples}`         | `{emotion, score}`               |
//! | asr      | `{sample_rate, samples}`         | `{text, char_timings?}`          |
//! | embedder | `{sample_rate, samples}`         | `{values: [number]}`             |
//! | features | `{sample_rate, samples}`         | `{frame_rate, frames: [[number]]}` |

use std::time::Duration;

use emotrans_core::attributes::SpeakerProfile;
use emotrans_core::clients::{
    AsrClient, ClientResult, EmbedderClient, FeatureExtractor, ProfileClient, SerClient, SerPrediction, TextGenClient,
    Transcript, TtsClient,
};
use emotrans_core::metrics::EmbeddingVector;
use emotrans_core::{ClientError, FeatureSequence, Language, Waveform};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct RemoteClient {
    agent: ureq::Agent,
    endpoint: String,
    timeout_s: f64,
}

#[derive(Serialize)]
struct AudioBody<'a> {
    sample_rate: u32,
    samples: &'a [f64],
}

impl<'a> From<&'a Waveform> for AudioBody<'a> {
    fn from(w: &'a Waveform) -> Self {
        Self {
            sample_rate: w.sample_rate(),
            samples: w.samples(),
        }
    }
}

#[derive(Deserialize)]
struct AudioReply {
    sample_rate: u32,
    samples: Vec<f64>,
}

#[derive(Deserialize)]
struct LinesReply {
    lines: Vec<String>,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct FeaturesReply {
    frame_rate: f64,
    frames: Vec<Vec<f32>>,
}

fn transport_error(t: &ureq::Transport, timeout_s: f64) -> ClientError {
    let text = t.to_string();
    match t.kind() {
        ureq::ErrorKind::Dns | ureq::ErrorKind::ConnectionFailed => ClientError::Unreachable(text),
        ureq::ErrorKind::Io if text.contains("timed out") || text.contains("WouldBlock") => {
            ClientError::Timeout(timeout_s)
        }
        ureq::ErrorKind::InvalidUrl | ureq::ErrorKind::UnknownScheme => ClientError::Unreachable(text),
        _ => ClientError::Protocol(text),
    }
}

impl RemoteClient {
    pub fn new(endpoint: impl Into<String>, timeout_s: f64) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(timeout_s))
            .build();
        Self {
            agent,
            endpoint: endpoint.into(),
            timeout_s,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> ClientResult<R> {
        let resp = match self.agent.post(&self.endpoint).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                return Err(ClientError::Service(format!("HTTP {code}: {}", detail.trim())));
            }
            Err(ureq::Error::Transport(t)) => return Err(transport_error(&t, self.timeout_s)),
        };
        let text = resp.into_string().map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut || e.kind() == std::io::ErrorKind::WouldBlock {
                ClientError::Timeout(self.timeout_s)
            } else {
                ClientError::Protocol(e.to_string())
            }
        })?;
        serde_json::from_str(&text).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl TextGenClient for RemoteClient {
    fn send(&self, prompt: &str, language: Language, seed: u64) -> ClientResult<Vec<String>> {
        let reply: LinesReply = self.post(&serde_json::json!({
            "prompt": prompt,
            "language": language,
            "seed": seed,
        }))?;
        Ok(reply.lines)
    }
}

impl TtsClient for RemoteClient {
    fn synthesize(&self, text: &str, reference_key: &str, seed: u64) -> ClientResult<Waveform> {
        let reply: AudioReply = self.post(&serde_json::json!({
            "text": text,
            "reference_key": reference_key,
            "seed": seed,
        }))?;
        Waveform::new(reply.samples, reply.sample_rate).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl SerClient for RemoteClient {
    fn classify(&self, waveform: &Waveform) -> ClientResult<SerPrediction> {
        self.post(&AudioBody::from(waveform))
    }
}

impl AsrClient for RemoteClient {
    fn transcribe(&self, waveform: &Waveform) -> ClientResult<Transcript> {
        self.post(&AudioBody::from(waveform))
    }
}

impl EmbedderClient for RemoteClient {
    fn embed(&self, waveform: &Waveform) -> ClientResult<EmbeddingVector> {
        let reply: EmbeddingReply = self.post(&AudioBody::from(waveform))?;
        EmbeddingVector::normalized(reply.values).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl FeatureExtractor for RemoteClient {
    fn extract(&self, waveform: &Waveform) -> ClientResult<FeatureSequence> {
        let reply: FeaturesReply = self.post(&AudioBody::from(waveform))?;
        let dim = reply.frames.first().map_or(0, Vec::len);
        if reply.frames.iter().any(|r| r.len() != dim) {
            return Err(ClientError::Protocol("ragged feature frames".into()));
        }
        let rows = reply.frames.len();
        let flat: Vec<f32> = reply.frames.into_iter().flatten().collect();
        let frames = ndarray::Array2::from_shape_vec((rows, dim), flat)
            .map_err(|e| ClientError::Protocol(e.to_string()))?;
        FeatureSequence::new(frames, reply.frame_rate).map_err(|e| ClientError::Protocol(e.to_string()))
    }
}

impl ProfileClient for RemoteClient {
    fn profile(&self, waveform: &Waveform) -> ClientResult<SpeakerProfile> {
        self.post(&AudioBody::from(waveform))
    }
}
