//! Transition-plan enumeration, topic hierarchy and discourse text generation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clients::TextGenClient;
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{EmotionLabel, Language, TransitionPlan};

pub const PRIMARY_TOPICS: [&str; 7] = [
    "Business",
    "Culture",
    "Daily Life",
    "Entertainment",
    "Politics",
    "Science",
    "Sports",
];

/// All plans of `k` transitions over `alphabet`, in lexicographic order.
///
/// The alphabet is deduplicated and sorted first, so the result has
/// `|A| * (|A| - 1)^k` entries.
pub fn enumerate_transition_plans(
    alphabet: &[EmotionLabel],
    k: usize,
) -> Result<Vec<TransitionPlan>> {
    let mut symbols = alphabet.to_vec();
    symbols.sort();
    symbols.dedup();
    if symbols.is_empty() || (k >= 1 && symbols.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "{} transitions need at least two emotions, got {}",
            k,
            symbols.len()
        )));
    }
    let mut out = Vec::with_capacity(symbols.len() * (symbols.len() - 1).pow(k as u32));
    let mut current = Vec::with_capacity(k + 1);
    extend_plans(&symbols, k + 1, &mut current, &mut out);
    Ok(out)
}

fn extend_plans(
    symbols: &[EmotionLabel],
    len: usize,
    current: &mut Vec<EmotionLabel>,
    out: &mut Vec<TransitionPlan>,
) {
    if current.len() == len {
        out.push(TransitionPlan::new(current.clone()).expect("adjacent-distinct by construction"));
        return;
    }
    for &e in symbols {
        if current.last() == Some(&e) {
            continue;
        }
        current.push(e);
        extend_plans(symbols, len, current, out);
        current.pop();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub primary: String,
    pub secondary: Vec<String>,
    #[serde(default)]
    pub secondary_zh: Vec<String>,
}

/// Seven primary categories, each with its secondary topics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicHierarchy {
    #[serde(rename = "topic")]
    entries: Vec<TopicEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topic {
    pub primary: String,
    pub secondary: String,
    /// Localized secondary name for Chinese text, when the hierarchy has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_zh: Option<String>,
}

impl TopicHierarchy {
    pub fn new(entries: Vec<TopicEntry>) -> Result<Self> {
        if entries.len() != PRIMARY_TOPICS.len() {
            return Err(Error::validation(
                "topic",
                format!("expected 7 primary topics, found {}", entries.len()),
            ));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.secondary.is_empty() {
                return Err(Error::validation(
                    format!("topic[{i}].secondary"),
                    format!("`{}` has no secondary topics", e.primary),
                ));
            }
            if !e.secondary_zh.is_empty() && e.secondary_zh.len() != e.secondary.len() {
                return Err(Error::validation(
                    format!("topic[{i}].secondary_zh"),
                    "must align with `secondary`",
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            topic: Vec<TopicEntry>,
        }
        let file: File =
            toml::from_str(text).map_err(|e| Error::validation("topics", e.to_string()))?;
        Self::new(file.topic)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn primary_topics(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.primary.as_str()).collect()
    }

    pub fn secondary(&self, primary: &str) -> Option<&[String]> {
        self.entries
            .iter()
            .find(|e| e.primary == primary)
            .map(|e| e.secondary.as_slice())
    }

    pub fn all_topics(&self) -> Vec<Topic> {
        self.entries
            .iter()
            .flat_map(|e| {
                e.secondary.iter().enumerate().map(move |(i, s)| Topic {
                    primary: e.primary.clone(),
                    secondary: s.clone(),
                    secondary_zh: e.secondary_zh.get(i).cloned(),
                })
            })
            .collect()
    }
}

impl Default for TopicHierarchy {
    fn default() -> Self {
        Self::from_toml(include_str!("../data/topics.toml")).expect("bundled topics are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perspective {
    First,
    Second,
    Third,
}

impl Perspective {
    pub const ALL: [Perspective; 3] = [Perspective::First, Perspective::Second, Perspective::Third];

    fn describe(self) -> &'static str {
        match self {
            Perspective::First => "first-person",
            Perspective::Second => "second-person",
            Perspective::Third => "third-person",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub topic: Topic,
    pub plan: TransitionPlan,
    pub perspective: Perspective,
    pub language: Language,
    pub seed: u64,
}

pub fn build_generation_prompt(req: &GenerationRequest) -> String {
    let n = req.plan.len();
    let language = match req.language {
        Language::En => "English",
        Language::Zh => "Chinese (Simplified Mandarin)",
    };
    let mut p = String::new();
    p.push_str(&format!(
        "Write a semantically coherent {language} discourse of exactly {n} sentence(s) about \
         \"{}\" (topic category: {}), narrated from the {} perspective.\n",
        req.topic.secondary,
        req.topic.primary,
        req.perspective.describe()
    ));
    p.push_str("Each sentence must clearly convey exactly one emotion, following this order:\n");
    for (i, e) in req.plan.emotions().iter().enumerate() {
        p.push_str(&format!("Sentence {}: {}\n", i + 1, e.as_str()));
    }
    p.push_str(&format!(
        "Let the emotional shifts arise naturally from the story. Output exactly {n} line(s), \
         one sentence per line, in {language}, without numbering or any other text."
    ));
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Lines(Vec<String>),
    ClientFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptTranscript {
    pub attempt: usize,
    pub prompt: String,
    pub outcome: AttemptOutcome,
}

impl AttemptTranscript {
    pub fn is_client_failure(&self) -> bool {
        matches!(self.outcome, AttemptOutcome::ClientFailure(_))
    }
}

pub enum DiscourseBackend<'a> {
    Client {
        client: &'a dyn TextGenClient,
        max_attempts: usize,
    },
    Template,
}

/// One sentence per plan entry, either from the client or from templates.
pub fn generate_discourse(backend: &DiscourseBackend<'_>, req: &GenerationRequest) -> Result<Vec<String>> {
    match backend {
        DiscourseBackend::Template => Ok(template_discourse(req)),
        DiscourseBackend::Client {
            client,
            max_attempts,
        } => {
            let prompt = build_generation_prompt(req);
            let want = req.plan.len();
            let mut attempts = Vec::new();
            for attempt in 1..=(*max_attempts).max(1) {
                let seed = seed::derive_seed(req.seed, "textgen", attempt as u64);
                let outcome = match client.send(&prompt, req.language, seed) {
                    Ok(lines) => {
                        let lines: Vec<String> = lines
                            .iter()
                            .map(|l| l.trim().to_string())
                            .filter(|l| !l.is_empty())
                            .collect();
                        if lines.len() == want {
                            return Ok(lines);
                        }
                        AttemptOutcome::Lines(lines)
                    }
                    Err(e) => AttemptOutcome::ClientFailure(e.to_string()),
                };
                log::warn!("discourse attempt {attempt} rejected: {outcome:?}");
                attempts.push(AttemptTranscript {
                    attempt,
                    prompt: prompt.clone(),
                    outcome,
                });
            }
            Err(Error::Generation { attempts })
        }
    }
}

#[derive(Clone, Copy)]
struct Voice {
    subject: &'static str,
    be: &'static str,
    has: &'static str,
}

fn english_voice(p: Perspective, rng: &mut impl Rng) -> Voice {
    match p {
        Perspective::First => Voice {
            subject: "I",
            be: "am",
            has: "have",
        },
        Perspective::Second => Voice {
            subject: "You",
            be: "are",
            has: "have",
        },
        Perspective::Third => *[
            Voice {
                subject: "She",
                be: "is",
                has: "has",
            },
            Voice {
                subject: "He",
                be: "is",
                has: "has",
            },
            Voice {
                subject: "They",
                be: "are",
                has: "have",
            },
        ]
        .choose(rng)
        .expect("non-empty"),
    }
}

fn english_clauses(e: EmotionLabel) -> &'static [&'static str] {
    match e {
        EmotionLabel::Angry => &[
            "{S} {BE} furious that nobody fixed the mess around {T}",
            "{S} {HAS} had enough of the broken promises about {T}",
            "{S} {BE} fuming because {T} was ruined again",
        ],
        EmotionLabel::Happy => &[
            "{S} {BE} delighted that {T} finally worked out so well",
            "{S} {HAS} never felt this cheerful about {T}",
            "{S} {BE} grinning because {T} brought such good news",
        ],
        EmotionLabel::Neutral => &[
            "{S} {BE} reviewing the schedule for {T} this afternoon",
            "{S} {HAS} a short list of notes about {T}",
            "{S} {BE} checking the usual details of {T}",
        ],
        EmotionLabel::Sad => &[
            "{S} {BE} heartbroken that {T} is over for good",
            "{S} {HAS} lost all hope of saving {T}",
            "{S} {BE} quietly grieving over what became of {T}",
        ],
        EmotionLabel::Surprised => &[
            "{S} {BE} stunned that {T} changed overnight",
            "{S} {HAS} just learned something unbelievable about {T}",
            "{S} {BE} amazed nobody warned us about {T}",
        ],
    }
}

fn chinese_clauses(e: EmotionLabel) -> &'static [&'static str] {
    match e {
        EmotionLabel::Angry => &[
            "{S}简直气炸了，{T}又一次被搞砸",
            "{S}再也忍不了{T}里那些敷衍了事的人",
            "{S}火冒三丈，{T}的承诺全是空话",
        ],
        EmotionLabel::Happy => &[
            "{S}高兴极了，{T}终于顺利完成",
            "{S}满心欢喜地说起{T}带来的好消息",
            "{S}笑得合不拢嘴，{T}比预想还要精彩",
        ],
        EmotionLabel::Neutral => &[
            "{S}正在整理{T}的日程安排",
            "{S}按部就班地核对{T}的细节",
            "{S}记录了关于{T}的几条说明",
        ],
        EmotionLabel::Sad => &[
            "{S}心都碎了，{T}再也回不来",
            "{S}默默流泪，{T}已经彻底结束",
            "{S}失落地望着{T}留下的一切",
        ],
        EmotionLabel::Surprised => &[
            "{S}惊呆了，{T}竟然一夜之间全变了",
            "{S}万万没想到{T}会是这样的结果",
            "{S}不敢相信{T}居然提前到来",
        ],
    }
}

const ENGLISH_TAILS: &[&str] = &["", " today", " this week", " after all this time", " once again"];
const CHINESE_TAILS: &[&str] = &["", "，就在今天", "，这周尤其如此", "，过了这么久"];

/// Deterministic placeholder discourse: one sentence per plan entry, seeded by `req.seed`.
pub fn template_discourse(req: &GenerationRequest) -> Vec<String> {
    let mut rng = seed::substream(req.seed, "template-discourse", 0);
    match req.language {
        Language::En => {
            let voice = english_voice(req.perspective, &mut rng);
            let topic = req.topic.secondary.to_lowercase();
            req.plan
                .emotions()
                .iter()
                .map(|&e| {
                    let clause = english_clauses(e).choose(&mut rng).expect("non-empty");
                    let tail = ENGLISH_TAILS.choose(&mut rng).expect("non-empty");
                    let end = match e {
                        EmotionLabel::Angry | EmotionLabel::Surprised => "!",
                        _ => ".",
                    };
                    let text = clause
                        .replace("{S}", voice.subject)
                        .replace("{BE}", voice.be)
                        .replace("{HAS}", voice.has)
                        .replace("{T}", &topic);
                    format!("{text}{tail}{end}")
                })
                .collect()
        }
        Language::Zh => {
            let subject = match req.perspective {
                Perspective::First => "我",
                Perspective::Second => "你",
                Perspective::Third => *["她", "他", "他们"].choose(&mut rng).expect("non-empty"),
            };
            let topic = req
                .topic
                .secondary_zh
                .clone()
                .unwrap_or_else(|| "这件事".to_string());
            req.plan
                .emotions()
                .iter()
                .map(|&e| {
                    let clause = chinese_clauses(e).choose(&mut rng).expect("non-empty");
                    let tail = CHINESE_TAILS.choose(&mut rng).expect("non-empty");
                    let end = match e {
                        EmotionLabel::Angry | EmotionLabel::Surprised => "！",
                        _ => "。",
                    };
                    let text = clause.replace("{S}", subject).replace("{T}", &topic);
                    format!("{text}{tail}{end}")
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ClientError;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use EmotionLabel::*;

    fn request(plan: Vec<EmotionLabel>, language: Language) -> GenerationRequest {
        GenerationRequest {
            topic: Topic {
                primary: "Daily Life".into(),
                secondary: "morning commute".into(),
                secondary_zh: Some("早高峰通勤".into()),
            },
            plan: TransitionPlan::new(plan).unwrap(),
            perspective: Perspective::First,
            language,
            seed: 11,
        }
    }

    #[test]
    fn two_emotion_alphabet() {
        let plans = enumerate_transition_plans(&[Sad, Angry], 1).unwrap();
        let seqs: Vec<_> = plans.iter().map(|p| p.emotions().to_vec()).collect();
        assert_eq!(seqs, vec![vec![Angry, Sad], vec![Sad, Angry]]);
    }

    #[test]
    fn counts_for_five_emotions() {
        for (k, n) in [(0, 5), (1, 20), (2, 80), (3, 320)] {
            assert_eq!(enumerate_transition_plans(&EmotionLabel::ALL, k).unwrap().len(), n);
        }
        assert!(enumerate_transition_plans(&[Sad], 1).is_err());
        assert_eq!(enumerate_transition_plans(&[Sad], 0).unwrap().len(), 1);
    }

    #[test]
    fn plans_come_out_sorted() {
        let plans = enumerate_transition_plans(&EmotionLabel::ALL, 2).unwrap();
        assert!(plans.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn bundled_hierarchy_has_seven_primaries() {
        let h = TopicHierarchy::default();
        assert_eq!(h.primary_topics(), PRIMARY_TOPICS.to_vec());
        assert!(h.secondary("Sports").unwrap().len() >= 1);
        let bad = "[[topic]]\nprimary = \"Business\"\nsecondary = [\"x\"]\n";
        assert!(TopicHierarchy::from_toml(bad).is_err());
    }

    #[test]
    fn prompt_lists_emotions_in_order() {
        let req = request(vec![Sad, Happy], Language::En);
        let p = build_generation_prompt(&req);
        let sad = p.find("Sentence 1: sad").unwrap();
        let happy = p.find("Sentence 2: happy").unwrap();
        assert!(sad < happy);
        assert!(p.contains("Daily Life") && p.contains("first-person"));
        assert_eq!(p, build_generation_prompt(&req));
        let zh = build_generation_prompt(&request(vec![Sad, Happy], Language::Zh));
        assert!(zh.contains("Chinese"));
    }

    #[test]
    fn template_fallback_is_deterministic_with_one_sentence_per_emotion() {
        for lang in Language::ALL {
            let req = request(vec![Angry, Sad, Happy], lang);
            let a = generate_discourse(&DiscourseBackend::Template, &req).unwrap();
            assert_eq!(a.len(), 3);
            assert!(a.iter().all(|s| !s.trim().is_empty()));
            assert_eq!(a, template_discourse(&req));
        }
    }

    struct ShortClient(AtomicUsize);

    impl TextGenClient for ShortClient {
        fn send(&self, _: &str, _: Language, _: u64) -> Result<Vec<String>, ClientError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(vec!["one.".into(), "two.".into()])
        }
    }

    #[test]
    fn wrong_sentence_count_is_retried_then_fails() {
        let client = ShortClient(AtomicUsize::new(0));
        let backend = DiscourseBackend::Client {
            client: &client,
            max_attempts: 3,
        };
        match generate_discourse(&backend, &request(vec![Angry, Sad, Happy], Language::En)) {
            Err(Error::Generation { attempts }) => {
                assert_eq!(attempts.len(), 3);
                assert!(matches!(&attempts[0].outcome, AttemptOutcome::Lines(l) if l.len() == 2));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(client.0.load(Ordering::SeqCst), 3);
    }

    struct EventuallyRight(AtomicUsize);

    impl TextGenClient for EventuallyRight {
        fn send(&self, _: &str, _: Language, _: u64) -> Result<Vec<String>, ClientError> {
            if self.0.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(ClientError::Timeout(1.0))
            } else {
                Ok(vec!["a".into(), "".into(), "b".into()])
            }
        }
    }

    #[test]
    fn client_recovers_on_retry() {
        let client = EventuallyRight(AtomicUsize::new(0));
        let backend = DiscourseBackend::Client {
            client: &client,
            max_attempts: 3,
        };
        let out = generate_discourse(&backend, &request(vec![Angry, Sad], Language::En)).unwrap();
        assert_eq!(out, vec!["a", "b"]);
    }
}
