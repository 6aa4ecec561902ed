//! The `emotrans/1` markup dialect for instructional captions.
//!
//! See `docs/ssml.md` for the element vocabulary.

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use crate::attributes::{AgeBucket, AttributeSequence, Gender, Level, SpeakerProfile, Speed};
use crate::error::{Error, Result};
use crate::types::{EmotionLabel, Language, TransitionPlan};

pub const DIALECT: &str = "emotrans/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmlSegment {
    pub emotion: EmotionLabel,
    pub pitch: Level,
    pub energy: Level,
    pub speed: Speed,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmlDocument {
    pub language: Option<Language>,
    pub profile: SpeakerProfile,
    pub segments: Vec<SsmlSegment>,
}

impl SsmlDocument {
    pub fn plan(&self) -> Result<TransitionPlan> {
        TransitionPlan::from_collapsed(self.segments.iter().map(|s| s.emotion))
    }
}

fn gender_attr(g: Gender) -> Option<&'static str> {
    match g {
        Gender::Male => Some("male"),
        Gender::Female => Some("female"),
        Gender::Unknown => None,
    }
}

fn age_attr(a: AgeBucket) -> Option<&'static str> {
    match a {
        AgeBucket::Child => Some("child"),
        AgeBucket::Teenager => Some("teenager"),
        AgeBucket::YoungAdult => Some("young_adult"),
        AgeBucket::MiddleAged => Some("middle_aged"),
        AgeBucket::Senior => Some("senior"),
        AgeBucket::Unknown => None,
    }
}

pub fn emit_ssml(attrs: &AttributeSequence, language: Language) -> String {
    let mut out = format!("<speak dialect=\"{DIALECT}\" xml:lang=\"{}\">\n", language.as_str());
    let mut voice = String::new();
    if let Some(g) = gender_attr(attrs.profile.gender) {
        voice.push_str(&format!(" gender=\"{g}\""));
    }
    if let Some(a) = age_attr(attrs.profile.age_bucket) {
        voice.push_str(&format!(" age=\"{a}\""));
    }
    let indent = if voice.is_empty() { "  " } else { "    " };
    if !voice.is_empty() {
        out.push_str(&format!("  <voice{voice}>\n"));
    }
    for s in &attrs.segments {
        out.push_str(&format!(
            "{indent}<segment emotion=\"{}\" pitch=\"{}\" energy=\"{}\" speed=\"{}\" start=\"{}\" end=\"{}\">{}</segment>\n",
            s.emotion,
            s.pitch_cat.as_str(),
            s.energy_cat.as_str(),
            s.speed_cat.as_str(),
            s.start_s,
            s.end_s,
            escape(s.transcript.as_str())
        ));
    }
    if !voice.is_empty() {
        out.push_str("  </voice>\n");
    }
    out.push_str("</speak>\n");
    out
}

fn attrs_of(e: &BytesStart<'_>) -> Result<Vec<(String, String)>> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(|err| Error::Parse(err.to_string()))?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a
                .unescape_value()
                .map_err(|err| Error::Parse(err.to_string()))?
                .into_owned();
            Ok((key, value))
        })
        .collect()
}

fn get<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn required<'a>(attrs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    get(attrs, key).ok_or_else(|| Error::Parse(format!("segment is missing `{key}`")))
}

fn parse_enum<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Error::Parse(format!("bad {key} value `{value}`")))
}

fn parse_seconds(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse(format!("bad {key} value `{value}`")))
}

fn open_segment(attrs: &[(String, String)]) -> Result<SsmlSegment> {
    Ok(SsmlSegment {
        emotion: required(attrs, "emotion")?
            .parse()
            .map_err(|_| Error::Parse("bad emotion value".into()))?,
        pitch: parse_enum("pitch", required(attrs, "pitch")?)?,
        energy: parse_enum("energy", required(attrs, "energy")?)?,
        speed: parse_enum("speed", required(attrs, "speed")?)?,
        start_s: parse_seconds("start", required(attrs, "start")?)?,
        end_s: parse_seconds("end", required(attrs, "end")?)?,
        text: String::new(),
    })
}

pub fn parse_ssml(text: &str) -> Result<SsmlDocument> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut doc = SsmlDocument {
        language: None,
        profile: SpeakerProfile::default(),
        segments: Vec::new(),
    };
    let mut stack: Vec<String> = Vec::new();
    let mut current: Option<SsmlSegment> = None;
    let mut saw_root = false;
    loop {
        let event = reader
            .read_event()
            .map_err(|e| Error::Parse(format!("markup error at byte {}: {e}", reader.buffer_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let attrs = attrs_of(e)?;
                match (stack.last().map(String::as_str), name.as_str()) {
                    (None, "speak") => {
                        saw_root = true;
                        if let Some(d) = get(&attrs, "dialect") {
                            if d != DIALECT {
                                return Err(Error::Parse(format!("unsupported dialect `{d}`")));
                            }
                        }
                        doc.language = get(&attrs, "xml:lang").and_then(|l| l.parse().ok());
                    }
                    (Some("speak"), "voice") => {
                        if let Some(g) = get(&attrs, "gender") {
                            doc.profile.gender = parse_enum("gender", g)?;
                        }
                        if let Some(a) = get(&attrs, "age") {
                            doc.profile.age_bucket = parse_enum("age", a)?;
                        }
                    }
                    (Some("speak" | "voice"), "segment") => {
                        let seg = open_segment(&attrs)?;
                        if matches!(event, Event::Empty(_)) {
                            doc.segments.push(seg);
                        } else {
                            current = Some(seg);
                        }
                    }
                    (parent, other) => {
                        return Err(Error::Parse(format!(
                            "unexpected <{other}> inside {}",
                            parent.map_or("document".to_string(), |p| format!("<{p}>"))
                        )))
                    }
                }
                if matches!(event, Event::Start(_)) {
                    stack.push(name);
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| Error::Parse(e.to_string()))?;
                if let Some(seg) = current.as_mut() {
                    seg.text.push_str(&s);
                } else if !s.trim().is_empty() {
                    return Err(Error::Parse(format!("stray text `{s}`")));
                }
            }
            Event::End(_) => {
                if stack.pop().as_deref() == Some("segment") {
                    doc.segments.extend(current.take());
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_root {
        return Err(Error::Parse("no <speak> root".into()));
    }
    if !stack.is_empty() {
        return Err(Error::Parse("unclosed element".into()));
    }
    if doc.segments.is_empty() {
        return Err(Error::Parse("no <segment> elements".into()));
    }
    Ok(doc)
}
