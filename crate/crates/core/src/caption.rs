//! Caption prompts, template captions, validation and regeneration.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::attributes::{AgeBucket, AttributeSequence, Gender, Level, SpeakerProfile, Speed};
use crate::attributes::is_cjk;
use crate::clients::TextGenClient;
use crate::error::{Error, Result};
use crate::seed;
use crate::types::{format_timestamp, parse_timestamp, EmotionLabel, Language, TransitionPlan};

pub const DEFAULT_MAX_ATTEMPTS: usize = 3;
pub const LEAK_MIN_CHARS: usize = 8;
pub const LEAK_MIN_CJK: usize = 4;
pub const GLOBAL_HEADER: &str = "[Global Description]";
pub const PARTIAL_HEADER: &str = "[Partial Description]";

pub mod rules {
    pub const LINE_COUNT: &str = "line_count";
    pub const NUMBERING: &str = "numbering";
    pub const TRANSCRIPT_LEAK: &str = "transcript_leak";
    pub const FORBIDDEN_SYMBOL: &str = "forbidden_symbol";
    pub const PROFILE_PLACEMENT: &str = "profile_placement";
    pub const MISSING_HEADER: &str = "missing_header";
    pub const HEADER_ORDER: &str = "header_order";
    pub const GLOBAL_FORMAT: &str = "global_format";
    pub const PART_FORMAT: &str = "part_format";
    pub const PART_COUNT: &str = "part_count";
    pub const TIMESTAMP_ORDER: &str = "timestamp_order";
    pub const LABEL_OMISSION: &str = "label_omission";
    pub const CLIENT_FAILURE: &str = "client_failure";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaptionVersion {
    #[serde(rename = "v_i")]
    VI,
    #[serde(rename = "v_d")]
    VD,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule_id: String,
    pub message: String,
}

impl Violation {
    fn new(rule_id: &str, message: impl Into<String>) -> Self {
        Self {
            rule_id: rule_id.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// Sorted, so the report does not depend on rule evaluation order.
    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort();
        violations.dedup();
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, rule_id: &str) -> bool {
        self.violations.iter().any(|v| v.rule_id == rule_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub version: CaptionVersion,
    pub segment_count: usize,
    pub segment_descriptions: String,
    pub language: Language,
}

impl PromptSpec {
    pub fn new(version: CaptionVersion, attrs: &AttributeSequence, language: Language) -> Result<Self> {
        Ok(Self {
            version,
            segment_count: attrs.segments.len(),
            segment_descriptions: render_segment_descriptions(version, attrs)?,
            language,
        })
    }
}

const VI_TEMPLATE: &str = "Below is an instruction that describes a task. Write a response that appropriately completes the request.

Instruction:
You will be provided with paralinguistic attributes of an audio clip containing {segment_num} consecutive segment(s) spoken by the same speaker. Your task is to generate {segment_num} fluent, expressive, and objective caption(s), each describing the speaker's vocal style, emotional dynamics, and communicative intent.

Output Guidelines:
1. Output exactly {segment_num} line(s)\u{2014}one caption per segment\u{2014}without numbering.
2. Do NOT quote or reuse any transcript content.
3. The language must reflect attributes such as speaking rate, pitch, energy, and emotion in a natural and concise manner.
4. Mention the speaker's gender and age only in the first caption, embedding them naturally into the sentence.
5. Ensure coherence between captions using appropriate transition words.
6. The tone must remain descriptive and objective.

Input:
{segment_descriptions}
";

const VD_TEMPLATE: &str = "Below is an instruction that describes a task. Write a response that appropriately completes the request.

Instruction:
You will be given an audio clip divided into {segment_num} segment(s), each containing pitch, speed, energy, emotion, age, gender, transcript, and start/end timestamps. Based on this information, generate two parts:

[Global Description]
Provide an overall natural-language description of the speaker\u{2019}s emotional state, vocal tone, and prosodic variation across the entire audio clip.

[Partial Description]
Provide a short and objective description for each segment individually.

Output Guidelines:

[Global Description]
1. Describe emotional dynamics, tone shifts, speaking rate, and pitch variations throughout the full clip.
2. Integrate gender and age naturally.
3. Reference the transcript for context, but do not copy or quote any part of it.
4. Use fluent, concise, and descriptive language. Avoid excessive sentiment, symbolic characters (e.g., *, #), or line breaks.
5. If there is only one segment, do not mention emotional changes.

[Partial Description]
1. Each segment must begin with the format: PartX (start_time ~ end_time).
2. Use full sentences to objectively describe pitch, speed, energy, and emotion in the segment.
3. Do not refer to the speaker or use subjective terms; keep each description self-contained.
4. Reference the transcript but do not quote it.
5. Descriptions should be short, fluent, and symbol-free.

Input:
{segment_data}
";

fn gender_name(g: Gender) -> Option<&'static str> {
    match g {
        Gender::Male => Some("male"),
        Gender::Female => Some("female"),
        Gender::Unknown => None,
    }
}

fn age_name(a: AgeBucket) -> Option<&'static str> {
    match a {
        AgeBucket::Child => Some("child"),
        AgeBucket::Teenager => Some("teenager"),
        AgeBucket::YoungAdult => Some("young adult"),
        AgeBucket::MiddleAged => Some("middle-aged"),
        AgeBucket::Senior => Some("senior"),
        AgeBucket::Unknown => None,
    }
}

/// The attribute block substituted into the prompt input slot.
pub fn render_segment_descriptions(version: CaptionVersion, attrs: &AttributeSequence) -> Result<String> {
    let gender = gender_name(attrs.profile.gender).unwrap_or("unknown");
    let age = age_name(attrs.profile.age_bucket).unwrap_or("unknown");
    let mut lines = Vec::with_capacity(attrs.segments.len());
    for (i, s) in attrs.segments.iter().enumerate() {
        let mut line = format!("Segment {}: ", i + 1);
        if version == CaptionVersion::VD {
            line.push_str(&format!(
                "start_time: {}, end_time: {}, ",
                format_timestamp(s.start_s)?,
                format_timestamp(s.end_s)?
            ));
        }
        line.push_str(&format!(
            "gender: {gender}, age: {age}, emotion: {}, pitch: {}, energy: {}, speed: {}, transcript: \"{}\"",
            s.emotion,
            s.pitch_cat.as_str(),
            s.energy_cat.as_str(),
            s.speed_cat.as_str(),
            s.transcript
        ));
        lines.push(line);
    }
    Ok(lines.join("\n"))
}

/// Renders the caption-integration prompt for `spec.version`.
pub fn build_prompt(spec: &PromptSpec, attrs: &AttributeSequence) -> Result<String> {
    if spec.segment_count != attrs.segments.len() {
        return Err(Error::Spec(format!(
            "spec declares {} segments but the attribute sequence has {}",
            spec.segment_count,
            attrs.segments.len()
        )));
    }
    if spec.segment_count == 0 {
        return Err(Error::Spec("at least one segment is required".into()));
    }
    let n = spec.segment_count.to_string();
    let mut prompt = match spec.version {
        CaptionVersion::VI => VI_TEMPLATE
            .replace("{segment_num}", &n)
            .replace("{segment_descriptions}", &spec.segment_descriptions),
        CaptionVersion::VD => VD_TEMPLATE
            .replace("{segment_num}", &n)
            .replace("{segment_data}", &spec.segment_descriptions),
    };
    if spec.language == Language::Zh {
        prompt.push_str(
            "\nWrite the captions in Chinese (Simplified Mandarin). Keep the section headers and Part labels in the form shown above.\n",
        );
    }
    Ok(prompt)
}

// ---------------------------------------------------------------------------
// Lexicons

static EMOTION_EN: LazyLock<Vec<(EmotionLabel, Regex)>> = LazyLock::new(|| {
    let table = [
        (EmotionLabel::Angry, r"(?i)\b(angry|angrily|anger|furious|irritated|annoyed)\b"),
        (EmotionLabel::Happy, r"(?i)\b(happy|happily|happiness|joy|joyful|cheerful|delighted)\b"),
        (EmotionLabel::Neutral, r"(?i)\b(neutral|calm|calmly|composed)\b"),
        (EmotionLabel::Sad, r"(?i)\b(sad|sadly|sadness|sorrow|sorrowful|melancholy|melancholic)\b"),
        (EmotionLabel::Surprised, r"(?i)\b(surprised|surprise|surprising|astonished|amazed|shocked)\b"),
    ];
    table
        .into_iter()
        .map(|(e, p)| (e, Regex::new(p).expect("static pattern")))
        .collect()
});

const EMOTION_ZH: [(EmotionLabel, &[&str]); 5] = [
    (EmotionLabel::Angry, &["愤怒", "生气", "恼怒"]),
    (EmotionLabel::Happy, &["开心", "快乐", "喜悦", "高兴"]),
    (EmotionLabel::Neutral, &["平静", "中性", "平和"]),
    (EmotionLabel::Sad, &["悲伤", "难过", "伤心"]),
    (EmotionLabel::Surprised, &["惊讶", "吃惊", "惊奇"]),
];

static PROFILE_EN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(male|female|man|woman|men|women|boy|girl|child|teen|teenage|teenager|young|adult|middle-aged|senior|elderly|old|gentleman|lady)\b",
    )
    .expect("static pattern")
});

const PROFILE_ZH: [&str; 7] = ["男", "女", "儿童", "青少年", "青年", "中年", "老年"];

static NUMBERING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(\d+\s*[.):、．]|\(\d+\)|（\d+）|[-•]\s|(caption|segment|line)\s*\d+\s*[:.])")
        .expect("static pattern")
});

static PART: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^Part\s?(\d+)\s*\(\s*(\d{2}:\d{2})\s*[~–—-]\s*(\d{2}:\d{2})\s*\)\s*[:：]?\s*(.*)$")
        .expect("static pattern")
});

const FORBIDDEN: [char; 2] = ['*', '#'];
const GLOBAL_SYMBOLS: &str = "*#[]{}<>|~^_=+@$%\\`";

/// Emotion mentions in `line`, in order of appearance.
fn emotion_mentions(line: &str) -> Vec<(usize, EmotionLabel)> {
    let mut found = Vec::new();
    for (e, re) in EMOTION_EN.iter() {
        found.extend(re.find_iter(line).map(|m| (m.start(), *e)));
    }
    for (e, words) in EMOTION_ZH {
        for w in words {
            found.extend(line.match_indices(w).map(|(pos, _)| (pos, e)));
        }
    }
    found.sort();
    found
}

fn mentions_profile(line: &str) -> bool {
    PROFILE_EN.is_match(line) || PROFILE_ZH.iter().any(|w| line.contains(w))
}

fn level_terms(level: Level, language: Language) -> &'static [&'static str] {
    match (language, level) {
        (Language::En, Level::Low) => &["low"],
        (Language::En, Level::Medium) => &["medium", "moderate"],
        (Language::En, Level::High) => &["high"],
        (Language::Zh, Level::Low) => &["低"],
        (Language::Zh, Level::Medium) => &["中等", "适中"],
        (Language::Zh, Level::High) => &["高"],
    }
}

fn speed_terms(speed: Speed, language: Language) -> &'static [&'static str] {
    match (language, speed) {
        (Language::En, Speed::Slow) => &["slow"],
        (Language::En, Speed::Medium) => &["medium", "moderate", "steady"],
        (Language::En, Speed::Fast) => &["fast", "quick", "rapid"],
        (Language::Zh, Speed::Slow) => &["慢"],
        (Language::Zh, Speed::Medium) => &["适中", "中等"],
        (Language::Zh, Speed::Fast) => &["快"],
    }
}

fn contains_term(text: &str, term: &str, language: Language) -> bool {
    match language {
        Language::Zh => text.contains(term),
        Language::En => {
            let lower = text.to_lowercase();
            lower.match_indices(term).any(|(pos, _)| {
                let before = lower[..pos].chars().next_back();
                let after = lower[pos + term.len()..].chars().next();
                !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Validation

fn words_en(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Longest common run of `a` and `b` whose elements satisfy `keep`, scored by
/// `weight` over the run.
fn longest_common_run<T: PartialEq>(
    a: &[T],
    b: &[T],
    keep: impl Fn(&T) -> bool,
    score: impl Fn(&[T]) -> usize,
) -> usize {
    let mut best = 0;
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb && keep(ca) { prev[j] + 1 } else { 0 };
            if cur[j + 1] > 0 {
                best = best.max(score(&a[i + 1 - cur[j + 1]..=i]));
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Length in characters of the longest verbatim transcript span in `caption`.
///
/// English spans are whole-word runs of at least two words, joined by single
/// spaces; Chinese spans are runs of CJK characters.
pub fn transcript_overlap(caption: &str, transcript: &str, language: Language) -> usize {
    match language {
        Language::En => longest_common_run(
            &words_en(caption),
            &words_en(transcript),
            |_| true,
            |run| {
                if run.len() < 2 {
                    0
                } else {
                    run.iter().map(|w| w.chars().count()).sum::<usize>() + run.len() - 1
                }
            },
        ),
        Language::Zh => {
            let a: Vec<char> = caption.chars().collect();
            let b: Vec<char> = transcript.chars().collect();
            longest_common_run(&a, &b, |c| is_cjk(*c), <[char]>::len)
        }
    }
}

fn leak_violations(caption: &str, transcripts: &[String], language: Language) -> Vec<Violation> {
    let limit = match language {
        Language::En => LEAK_MIN_CHARS,
        Language::Zh => LEAK_MIN_CJK,
    };
    transcripts
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let n = transcript_overlap(caption, t, language);
            (n >= limit).then(|| {
                Violation::new(
                    rules::TRANSCRIPT_LEAK,
                    format!("reuses a {n}-character span of transcript {}", i + 1),
                )
            })
        })
        .collect()
}

/// Structural checks for an instructional caption.
pub fn validate_vi(
    caption: &str,
    segment_count: usize,
    transcripts: &[String],
    language: Language,
) -> ValidationReport {
    let mut v = Vec::new();
    let lines: Vec<&str> = caption.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() != segment_count {
        v.push(Violation::new(
            rules::LINE_COUNT,
            format!("expected {segment_count} lines, found {}", lines.len()),
        ));
    }
    for (i, line) in lines.iter().enumerate() {
        if NUMBERING.is_match(line) {
            v.push(Violation::new(rules::NUMBERING, format!("line {} starts with a number or bullet", i + 1)));
        }
        if i > 0 && mentions_profile(line) {
            v.push(Violation::new(
                rules::PROFILE_PLACEMENT,
                format!("line {} mentions gender or age", i + 1),
            ));
        }
    }
    if let Some(c) = caption.chars().find(|c| FORBIDDEN.contains(c)) {
        v.push(Violation::new(rules::FORBIDDEN_SYMBOL, format!("contains `{c}`")));
    }
    v.extend(leak_violations(caption, transcripts, language));
    ValidationReport::from_violations(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartEntry {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// Splits a descriptive caption into its global text and part entries.
fn vd_structure(caption: &str) -> (Vec<Violation>, Option<String>, Vec<PartEntry>) {
    let mut v = Vec::new();
    let lines: Vec<&str> = caption.lines().map(str::trim).collect();
    let g = lines.iter().position(|l| *l == GLOBAL_HEADER);
    let p = lines.iter().position(|l| *l == PARTIAL_HEADER);
    if g.is_none() {
        v.push(Violation::new(rules::MISSING_HEADER, format!("missing {GLOBAL_HEADER}")));
    }
    if p.is_none() {
        v.push(Violation::new(rules::MISSING_HEADER, format!("missing {PARTIAL_HEADER}")));
    }
    let (Some(g), Some(p)) = (g, p) else {
        return (v, None, Vec::new());
    };
    if g > p {
        v.push(Violation::new(rules::HEADER_ORDER, "global section must come first"));
        return (v, None, Vec::new());
    }
    if lines[..g].iter().any(|l| !l.is_empty()) {
        v.push(Violation::new(rules::GLOBAL_FORMAT, "text before the global header"));
    }
    let global: Vec<&str> = lines[g + 1..p].iter().copied().filter(|l| !l.is_empty()).collect();
    match global.len() {
        0 => v.push(Violation::new(rules::GLOBAL_FORMAT, "global description is empty")),
        1 => {}
        n => v.push(Violation::new(
            rules::GLOBAL_FORMAT,
            format!("global description spans {n} lines"),
        )),
    }
    let global_text = global.join(" ");
    if let Some(c) = global_text.chars().find(|c| GLOBAL_SYMBOLS.contains(*c)) {
        v.push(Violation::new(rules::FORBIDDEN_SYMBOL, format!("global description contains `{c}`")));
    }

    let mut parts: Vec<PartEntry> = Vec::new();
    for line in lines[p + 1..].iter().filter(|l| !l.is_empty()) {
        if let Some(c) = PART.captures(line) {
            let index: usize = c[1].parse().unwrap_or(0);
            match (parse_timestamp(&c[2]), parse_timestamp(&c[3])) {
                (Ok(start_s), Ok(end_s)) => parts.push(PartEntry {
                    index,
                    start_s,
                    end_s,
                    text: c[4].trim().to_string(),
                }),
                _ => v.push(Violation::new(rules::PART_FORMAT, format!("malformed timestamps in `{line}`"))),
            }
        } else if let Some(last) = parts.last_mut() {
            if !last.text.is_empty() {
                last.text.push(' ');
            }
            last.text.push_str(line);
        } else {
            v.push(Violation::new(rules::PART_FORMAT, format!("`{line}` is not a Part header")));
        }
    }
    if parts.is_empty() {
        v.push(Violation::new(rules::PART_FORMAT, "no Part entries"));
    }
    for (i, part) in parts.iter().enumerate() {
        if part.index != i + 1 {
            v.push(Violation::new(
                rules::PART_FORMAT,
                format!("entry {} is labelled Part {}", i + 1, part.index),
            ));
        }
        if part.text.is_empty() {
            v.push(Violation::new(rules::PART_FORMAT, format!("Part {} has no description", i + 1)));
        }
        if part.text.chars().any(|c| FORBIDDEN.contains(&c)) {
            v.push(Violation::new(rules::FORBIDDEN_SYMBOL, format!("Part {} contains a symbol", i + 1)));
        }
        if part.end_s < part.start_s {
            v.push(Violation::new(
                rules::TIMESTAMP_ORDER,
                format!("Part {} ends before it starts", i + 1),
            ));
        }
        if i > 0 && part.start_s < parts[i - 1].end_s {
            v.push(Violation::new(
                rules::TIMESTAMP_ORDER,
                format!("Part {} starts before Part {} ends", i + 1, i),
            ));
        }
    }
    (v, Some(global_text), parts)
}

/// Structural checks for a descriptive caption.
pub fn validate_vd(caption: &str) -> ValidationReport {
    ValidationReport::from_violations(vd_structure(caption).0)
}

/// [`validate_vd`] plus the expected number of parts.
pub fn validate_vd_for(caption: &str, segment_count: usize) -> ValidationReport {
    let (mut v, _, parts) = vd_structure(caption);
    if !parts.is_empty() && parts.len() != segment_count {
        v.push(Violation::new(
            rules::PART_COUNT,
            format!("expected {segment_count} parts, found {}", parts.len()),
        ));
    }
    ValidationReport::from_violations(v)
}

/// Every emotion and category value in `attrs` must be named somewhere.
pub fn label_omissions(caption: &str, attrs: &AttributeSequence, language: Language) -> Vec<Violation> {
    let mut v = Vec::new();
    let mentioned: BTreeSet<EmotionLabel> = emotion_mentions(caption).into_iter().map(|(_, e)| e).collect();
    let emotions: BTreeSet<EmotionLabel> = attrs.segments.iter().map(|s| s.emotion).collect();
    for e in emotions.difference(&mentioned) {
        v.push(Violation::new(rules::LABEL_OMISSION, format!("emotion `{e}` is not described")));
    }
    let mut check = |kind: &str, name: &str, terms: &[&str]| {
        if !terms.iter().any(|t| contains_term(caption, t, language)) {
            v.push(Violation::new(rules::LABEL_OMISSION, format!("{kind} `{name}` is not described")));
        }
    };
    let levels = |f: fn(&crate::attributes::SegmentAttributes) -> Level| {
        attrs.segments.iter().map(f).collect::<BTreeSet<_>>()
    };
    for l in levels(|s| s.pitch_cat) {
        check("pitch", l.as_str(), level_terms(l, language));
    }
    for l in levels(|s| s.energy_cat) {
        check("energy", l.as_str(), level_terms(l, language));
    }
    let speeds: BTreeSet<Speed> = attrs.segments.iter().map(|s| s.speed_cat).collect();
    for s in speeds {
        check("speed", s.as_str(), speed_terms(s, language));
    }
    v
}

/// Full rule set used by the regeneration loop.
pub fn validate_caption(
    version: CaptionVersion,
    caption: &str,
    attrs: &AttributeSequence,
    language: Language,
) -> ValidationReport {
    let transcripts: Vec<String> = attrs.segments.iter().map(|s| s.transcript.clone()).collect();
    let n = attrs.segments.len();
    let mut v = match version {
        CaptionVersion::VI => validate_vi(caption, n, &transcripts, language).violations,
        CaptionVersion::VD => {
            let mut v = validate_vd_for(caption, n).violations;
            v.extend(leak_violations(caption, &transcripts, language));
            v
        }
    };
    v.extend(label_omissions(caption, attrs, language));
    ValidationReport::from_violations(v)
}

// ---------------------------------------------------------------------------
// Template captions

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn subject_en(profile: &SpeakerProfile) -> String {
    let words: Vec<&str> = [age_name(profile.age_bucket), gender_name(profile.gender)]
        .into_iter()
        .flatten()
        .collect();
    if words.is_empty() {
        "The speaker".to_string()
    } else {
        let phrase = words.join(" ");
        let a = article(&phrase);
        format!("{}{} {phrase} speaker", a[..1].to_uppercase(), &a[1..])
    }
}

fn subject_zh(profile: &SpeakerProfile) -> String {
    let age = match profile.age_bucket {
        AgeBucket::Child => "儿童",
        AgeBucket::Teenager => "青少年",
        AgeBucket::YoungAdult => "青年",
        AgeBucket::MiddleAged => "中年",
        AgeBucket::Senior => "老年",
        AgeBucket::Unknown => "",
    };
    let gender = match profile.gender {
        Gender::Male => "男性",
        Gender::Female => "女性",
        Gender::Unknown => "",
    };
    if age.is_empty() && gender.is_empty() {
        "说话人".to_string()
    } else {
        format!("一位{age}{gender}说话人")
    }
}

fn emotion_zh(e: EmotionLabel) -> &'static str {
    match e {
        EmotionLabel::Angry => "愤怒",
        EmotionLabel::Happy => "开心",
        EmotionLabel::Neutral => "平静",
        EmotionLabel::Sad => "悲伤",
        EmotionLabel::Surprised => "惊讶",
    }
}

fn level_zh(l: Level) -> &'static str {
    match l {
        Level::Low => "较低",
        Level::Medium => "中等",
        Level::High => "较高",
    }
}

fn speed_zh(s: Speed) -> &'static str {
    match s {
        Speed::Slow => "缓慢",
        Speed::Medium => "适中",
        Speed::Fast => "较快",
    }
}

fn connective(i: usize, n: usize, language: Language) -> &'static str {
    let last = i + 1 == n && n > 2;
    match language {
        Language::En if last => "Finally",
        Language::En => ["Then", "After that", "Later on"][(i - 1) % 3],
        Language::Zh if last => "最后",
        Language::Zh => ["随后", "接着", "之后"][(i - 1) % 3],
    }
}

/// Deterministic instructional caption: one line per segment.
pub fn template_vi(attrs: &AttributeSequence, language: Language) -> String {
    let n = attrs.segments.len();
    let lines: Vec<String> = attrs
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| match language {
            Language::En => {
                let style = format!(
                    "with {} pitch, {} energy and a {} pace",
                    s.pitch_cat.as_str(),
                    s.energy_cat.as_str(),
                    s.speed_cat.as_str()
                );
                if i == 0 {
                    let when = if n > 1 { " at first" } else { "" };
                    format!("{} sounds {}{when}, {style}.", subject_en(&attrs.profile), s.emotion)
                } else {
                    format!("{}, the voice sounds {}, {style}.", connective(i, n, language), s.emotion)
                }
            }
            Language::Zh => {
                let style = format!(
                    "音高{}，能量{}，语速{}",
                    level_zh(s.pitch_cat),
                    level_zh(s.energy_cat),
                    speed_zh(s.speed_cat)
                );
                if i == 0 {
                    let when = if n > 1 { "起初" } else { "" };
                    format!("{}{when}语气{}，{style}。", subject_zh(&attrs.profile), emotion_zh(s.emotion))
                } else {
                    format!("{}，声音转为{}，{style}。", connective(i, n, language), emotion_zh(s.emotion))
                }
            }
        })
        .collect();
    lines.join("\n")
}

fn chain(items: &[&str], sep: &str) -> String {
    items.join(sep)
}

/// Deterministic descriptive caption with global and per-part sections.
pub fn template_vd(attrs: &AttributeSequence, language: Language) -> Result<String> {
    let segs = &attrs.segments;
    let global = match language {
        Language::En => {
            let subject = subject_en(&attrs.profile);
            if segs.len() == 1 {
                let s = &segs[0];
                let e = s.emotion.as_str();
                format!(
                    "{subject} keeps {} {e} tone throughout, with {} pitch, {} energy and a {} pace.",
                    article(e),
                    s.pitch_cat.as_str(),
                    s.energy_cat.as_str(),
                    s.speed_cat.as_str()
                )
            } else {
                let emotions: Vec<&str> = segs.iter().map(|s| s.emotion.as_str()).collect();
                let pitch: Vec<&str> = segs.iter().map(|s| s.pitch_cat.as_str()).collect();
                let energy: Vec<&str> = segs.iter().map(|s| s.energy_cat.as_str()).collect();
                let speed: Vec<&str> = segs.iter().map(|s| s.speed_cat.as_str()).collect();
                format!(
                    "{subject} moves through {} emotional stages, going from {}. The pitch shifts from {}, the energy from {}, and the pace from {}.",
                    segs.len(),
                    chain(&emotions, " to "),
                    chain(&pitch, " to "),
                    chain(&energy, " to "),
                    chain(&speed, " to ")
                )
            }
        }
        Language::Zh => {
            let subject = subject_zh(&attrs.profile);
            if segs.len() == 1 {
                let s = &segs[0];
                format!(
                    "{subject}全程语气{}，音高{}，能量{}，语速{}。",
                    emotion_zh(s.emotion),
                    level_zh(s.pitch_cat),
                    level_zh(s.energy_cat),
                    speed_zh(s.speed_cat)
                )
            } else {
                let emotions: Vec<&str> = segs.iter().map(|s| emotion_zh(s.emotion)).collect();
                let pitch: Vec<&str> = segs.iter().map(|s| level_zh(s.pitch_cat)).collect();
                let energy: Vec<&str> = segs.iter().map(|s| level_zh(s.energy_cat)).collect();
                let speed: Vec<&str> = segs.iter().map(|s| speed_zh(s.speed_cat)).collect();
                format!(
                    "{subject}的情绪经历了{}个阶段，从{}。音高依次为{}，能量依次为{}，语速依次为{}。",
                    segs.len(),
                    chain(&emotions, "转为"),
                    chain(&pitch, "、"),
                    chain(&energy, "、"),
                    chain(&speed, "、")
                )
            }
        }
    };
    let mut out = format!("{GLOBAL_HEADER}\n{global}\n{PARTIAL_HEADER}");
    for (i, s) in segs.iter().enumerate() {
        let desc = match language {
            Language::En => {
                let e = s.emotion.as_str();
                format!(
                    "The pitch is {}, the energy is {} and the pace is {}, carrying {} {e} emotion.",
                    s.pitch_cat.as_str(),
                    s.energy_cat.as_str(),
                    s.speed_cat.as_str(),
                    article(e)
                )
            }
            Language::Zh => format!(
                "音高{}，能量{}，语速{}，情绪{}。",
                level_zh(s.pitch_cat),
                level_zh(s.energy_cat),
                speed_zh(s.speed_cat),
                emotion_zh(s.emotion)
            ),
        };
        out.push_str(&format!(
            "\nPart {} ({}\u{2013}{}): {desc}",
            i + 1,
            format_timestamp(s.start_s)?,
            format_timestamp(s.end_s)?
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Regeneration

pub enum CaptionBackend<'a> {
    Client {
        client: &'a dyn TextGenClient,
        max_attempts: usize,
    },
    Template,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedCaption {
    pub text: String,
    pub attempts: usize,
    /// Reports of the rejected attempts, in order.
    pub rejected: Vec<ValidationReport>,
}

fn feedback(report: &ValidationReport) -> String {
    let mut s = String::from("\nYour previous output was rejected for these reasons:\n");
    for v in &report.violations {
        s.push_str(&format!("- {}: {}\n", v.rule_id, v.message));
    }
    s.push_str("Write a new output that follows every guideline.\n");
    s
}

/// Returns the first caption that passes [`validate_caption`].
pub fn compose_with_regeneration(
    backend: &CaptionBackend<'_>,
    spec: &PromptSpec,
    attrs: &AttributeSequence,
    seed: u64,
) -> Result<ComposedCaption> {
    let base = build_prompt(spec, attrs)?;
    match backend {
        CaptionBackend::Template => {
            let text = match spec.version {
                CaptionVersion::VI => template_vi(attrs, spec.language),
                CaptionVersion::VD => template_vd(attrs, spec.language)?,
            };
            let report = validate_caption(spec.version, &text, attrs, spec.language);
            if report.passed {
                Ok(ComposedCaption {
                    text,
                    attempts: 1,
                    rejected: Vec::new(),
                })
            } else {
                Err(Error::Composition { reports: vec![report] })
            }
        }
        CaptionBackend::Client {
            client,
            max_attempts,
        } => {
            let mut reports: Vec<ValidationReport> = Vec::new();
            let mut prompt = base.clone();
            let mut last_client_error = None;
            for attempt in 1..=(*max_attempts).max(1) {
                let s = seed::derive_seed(seed, "caption", attempt as u64);
                let report = match client.send(&prompt, spec.language, s) {
                    Ok(lines) => {
                        let text = lines.join("\n").trim().to_string();
                        let report = validate_caption(spec.version, &text, attrs, spec.language);
                        if report.passed {
                            return Ok(ComposedCaption {
                                text,
                                attempts: attempt,
                                rejected: reports,
                            });
                        }
                        report
                    }
                    Err(e) => {
                        let r = ValidationReport::from_violations(vec![Violation::new(
                            rules::CLIENT_FAILURE,
                            e.to_string(),
                        )]);
                        last_client_error = Some(e);
                        r
                    }
                };
                log::warn!("caption attempt {attempt} rejected: {:?}", report.violations);
                prompt = format!("{base}{}", feedback(&report));
                reports.push(report);
            }
            if reports.iter().all(|r| r.has(rules::CLIENT_FAILURE)) {
                if let Some(e) = last_client_error {
                    return Err(Error::Client(e));
                }
            }
            Err(Error::Composition { reports })
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Every line names exactly one emotion, or the input was SSML.
    Exact,
    /// Keywords were found but the structure was ambiguous.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlan {
    pub plan: TransitionPlan,
    pub confidence: Confidence,
}

/// Recovers the emotion sequence from an instructional caption or SSML.
pub fn parse_caption_plan(caption: &str) -> Result<ParsedPlan> {
    let trimmed = caption.trim_start();
    if trimmed.starts_with('<') {
        let doc = crate::ssml::parse_ssml(trimmed)?;
        return Ok(ParsedPlan {
            plan: doc.plan()?,
            confidence: Confidence::Exact,
        });
    }
    let lines: Vec<&str> = caption.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let mut sequence = Vec::new();
    let mut exact = true;
    for line in &lines {
        let mentions = emotion_mentions(line);
        let distinct: BTreeSet<EmotionLabel> = mentions.iter().map(|(_, e)| *e).collect();
        if distinct.len() != 1 {
            exact = false;
        }
        sequence.extend(mentions.into_iter().map(|(_, e)| e));
    }
    if sequence.is_empty() {
        return Err(Error::Parse("caption names no emotion".into()));
    }
    Ok(ParsedPlan {
        plan: TransitionPlan::from_collapsed(sequence)?,
        confidence: if exact { Confidence::Exact } else { Confidence::BestEffort },
    })
}
