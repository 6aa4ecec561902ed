//! Objective metrics: transition accuracies, EES, FEA, EER and dataset statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::attributes::count_units;
use crate::audio::Waveform;
use crate::clients::{AsrClient, CharTiming, EmbedderClient};
use crate::error::{Error, Result};
use crate::types::{Language, TransitionPlan, UtteranceManifest};

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub const NORM_TOLERANCE: f64 = 1e-6;

    /// Accepts a vector that is already unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if values.is_empty() || !values.iter().all(|v| v.is_finite()) || (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self(values))
    }

    /// Scales `values` to unit norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let norm = l2(&values);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidInput("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("embedding dims {} and {}", a.dim(), b.dim())));
    }
    if a.0 == b.0 {
        return Ok(1.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (l2(&a.0) * l2(&b.0))).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub predicted_plan: TransitionPlan,
    pub true_plan: TransitionPlan,
    pub k: usize,
}

impl EvalPair {
    pub fn new(predicted_plan: TransitionPlan, true_plan: TransitionPlan) -> Self {
        let k = true_plan.transition_count();
        Self {
            predicted_plan,
            true_plan,
            k,
        }
    }

    pub fn count_correct(&self) -> bool {
        self.predicted_plan.transition_count() == self.k
    }

    pub fn sequence_correct(&self) -> bool {
        self.predicted_plan == self.true_plan
    }
}

fn percent(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

/// Transition-count accuracy over one group of pairs.
pub fn acc_etc(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Evaluation("Acc_ETC over an empty group".into()));
    }
    Ok(percent(pairs.iter().filter(|p| p.count_correct()).count(), pairs.len()))
}

/// [`acc_etc`] per true transition count.
pub fn acc_etc_by_k(pairs: &[EvalPair]) -> BTreeMap<usize, f64> {
    let mut groups: BTreeMap<usize, Vec<EvalPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(p.k).or_default().push(p.clone());
    }
    groups
        .into_iter()
        .map(|(k, g)| (k, acc_etc(&g).expect("non-empty group")))
        .collect()
}

/// Ordered-sequence accuracy among count-correct pairs; `None` if there are none.
pub fn acc_ett(pairs: &[EvalPair]) -> Option<f64> {
    let counted: Vec<&EvalPair> = pairs.iter().filter(|p| p.count_correct()).collect();
    if counted.is_empty() {
        return None;
    }
    Some(percent(counted.iter().filter(|p| p.sequence_correct()).count(), counted.len()))
}

/// Unconditional exact-sequence accuracy.
pub fn exact_sequence_accuracy(pairs: &[EvalPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Evaluation("sequence accuracy over an empty group".into()));
    }
    Ok(percent(pairs.iter().filter(|p| p.sequence_correct()).count(), pairs.len()))
}

pub fn ees_from_cosines(cosines: &[f64]) -> f64 {
    cosines.iter().product()
}

fn countable(c: char) -> bool {
    c.is_alphanumeric()
}

/// Internal boundary times (one fewer than `texts`) placed midway between the
/// last character of each reference segment and the first of the next.
pub fn boundaries_from_char_timings(timings: &[CharTiming], texts: &[String]) -> Result<Vec<f64>> {
    let chars: Vec<&CharTiming> = timings.iter().filter(|t| countable(t.ch)).collect();
    let counts: Vec<usize> = texts.iter().map(|t| t.chars().filter(|&c| countable(c)).count()).collect();
    let total: usize = counts.iter().sum();
    if chars.len() < total {
        return Err(Error::Alignment(format!(
            "ASR produced {} characters but the references need {total}",
            chars.len()
        )));
    }
    let mut out = Vec::with_capacity(texts.len().saturating_sub(1));
    let mut cum = 0;
    for &c in &counts[..counts.len().saturating_sub(1)] {
        cum += c;
        let before = if cum == 0 { 0.0 } else { chars[cum - 1].end_s };
        let after = chars[cum].start_s;
        out.push(0.5 * (before + after));
    }
    Ok(out)
}

/// Product of per-segment cosine similarities between the synthesized audio
/// (segmented by ASR character timings) and the reference embeddings.
pub fn ees(
    synth: &Waveform,
    texts: &[String],
    asr: &dyn AsrClient,
    embedder: &dyn EmbedderClient,
    truth: &[EmbeddingVector],
) -> Result<f64> {
    if texts.is_empty() || texts.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "{} segment texts for {} reference embeddings",
            texts.len(),
            truth.len()
        )));
    }
    let transcript = asr.transcribe(synth)?;
    let timings = transcript
        .char_timings
        .ok_or_else(|| Error::Alignment("ASR returned no character timings".into()))?;
    let inner = boundaries_from_char_timings(&timings, texts)?;
    let mut edges = vec![0.0];
    edges.extend(inner);
    edges.push(synth.duration_s());
    let mut cosines = Vec::with_capacity(texts.len());
    for (i, w) in edges.windows(2).enumerate() {
        let piece = synth.slice_s(w[0], w[1].max(w[0]));
        let e = embedder.embed(&piece)?;
        cosines.push(cosine(&e, &truth[i])?);
    }
    Ok(ees_from_cosines(&cosines))
}

/// Mean EES ×100 per transition count.
pub fn ees_by_k(scores: &[(usize, f64)]) -> BTreeMap<usize, f64> {
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &(k, s) in scores {
        let e = acc.entry(k).or_default();
        e.0 += s;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, 100.0 * s / n as f64)).collect()
}

/// Frame-level emotion accuracy (×100).
pub fn fea<T: PartialEq>(predicted: &[T], target: &[T]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predicted frames for {} target frames",
            predicted.len(),
            target.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::Evaluation("no frames to score".into()));
    }
    Ok(percent(predicted.iter().zip(target).filter(|(a, b)| a == b).count(), target.len()))
}

pub const DEFAULT_EER_TOLERANCE: usize = 5;

/// Centre frame of each positive run.
pub fn boundary_centres(targets: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < targets.len() {
        if targets[t] {
            let start = t;
            while t < targets.len() && targets[t] {
                t += 1;
            }
            out.push((start + t - 1) / 2);
        } else {
            t += 1;
        }
    }
    out
}

/// Local maxima: `s[t] >= s[t-1]` and `s[t] > s[t+1]`, edges count as satisfied.
pub fn score_peaks(scores: &[f64]) -> Vec<usize> {
    (0..scores.len())
        .filter(|&t| {
            (t == 0 || scores[t] >= scores[t - 1]) && (t + 1 == scores.len() || scores[t] > scores[t + 1])
        })
        .collect()
}

fn near(a: usize, b: usize, tol: usize) -> bool {
    a.abs_diff(b) <= tol
}

struct EerSetup {
    truth: Vec<usize>,
    negatives: usize,
}

fn eer_setup(scores: &[f64], targets: &[bool], tol: usize) -> Result<Option<EerSetup>> {
    if scores.len() != targets.len() {
        return Err(Error::Shape(format!("{} scores for {} targets", scores.len(), targets.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite detection score".into()));
    }
    let truth = boundary_centres(targets);
    if truth.is_empty() {
        return Ok(None);
    }
    let negatives = (0..scores.len()).filter(|&t| !truth.iter().any(|&b| near(t, b, tol))).count();
    Ok(Some(EerSetup { truth, negatives }))
}

fn rates(setup: &EerSetup, covered: usize, false_peaks: usize) -> (f64, f64) {
    let miss = (setup.truth.len() - covered) as f64 / setup.truth.len() as f64;
    let fa = if setup.negatives == 0 {
        0.0
    } else {
        false_peaks as f64 / setup.negatives as f64
    };
    (miss, fa)
}

fn pick(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let best = points
        .into_iter()
        .min_by(|a, b| {
            let ka = ((a.0 - a.1).abs(), (a.0 + a.1) / 2.0);
            let kb = ((b.0 - b.1).abs(), (b.0 + b.1) / 2.0);
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        })
        .expect("at least the empty operating point");
    100.0 * (best.0 + best.1) / 2.0
}

/// Boundary-detection equal error rate (×100) by an incremental threshold sweep
/// over peak scores. `None` when the targets hold no boundary.
pub fn eer_fast(scores: &[f64], targets: &[bool], tol: usize) -> Result<Option<f64>> {
    let Some(setup) = eer_setup(scores, targets, tol)? else {
        return Ok(None);
    };
    let mut peaks = score_peaks(scores);
    peaks.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut cover = vec![0usize; setup.truth.len()];
    let mut covered = 0;
    let mut false_peaks = 0;
    let mut points = vec![rates(&setup, 0, 0)];
    let mut i = 0;
    while i < peaks.len() {
        let level = scores[peaks[i]];
        while i < peaks.len() && scores[peaks[i]] == level {
            let p = peaks[i];
            let mut hit = false;
            for (j, &b) in setup.truth.iter().enumerate() {
                if near(p, b, tol) {
                    hit = true;
                    if cover[j] == 0 {
                        covered += 1;
                    }
                    cover[j] += 1;
                }
            }
            if !hit {
                false_peaks += 1;
            }
            i += 1;
        }
        points.push(rates(&setup, covered, false_peaks));
    }
    Ok(Some(pick(points)))
}

/// Reference implementation: every distinct frame score as a threshold,
/// recomputing hits from scratch.
pub fn eer_brute_force(scores: &[f64], targets: &[bool], tol: usize) -> Result<Option<f64>> {
    let Some(setup) = eer_setup(scores, targets, tol)? else {
        return Ok(None);
    };
    let peaks = score_peaks(scores);
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let points = thresholds.iter().map(|&th| {
        let predicted: Vec<usize> = peaks.iter().copied().filter(|&p| scores[p] >= th).collect();
        let covered = setup
            .truth
            .iter()
            .filter(|&&b| predicted.iter().any(|&p| near(p, b, tol)))
            .count();
        let false_peaks = predicted
            .iter()
            .filter(|&&p| !setup.truth.iter().any(|&b| near(p, b, tol)))
            .count();
        rates(&setup, covered, false_peaks)
    });
    Ok(Some(pick(points)))
}

// ---------------------------------------------------------------------------
// Dataset statistics

pub const STAT_ROWS: [&str; 18] = [
    "Language",
    "Utterances",
    "Words",
    "Max words per utterance",
    "Min words per utterance",
    "Mean words per utterance",
    "Duration(h)",
    "Max utterance duration(s)",
    "Min utterance duration(s)",
    "Mean utterance duration(s)",
    "Max caption (V_I) length",
    "Min caption (V_I) length",
    "Mean caption (V_I) length",
    "Max caption (V_D) length",
    "Min caption (V_D) length",
    "Mean caption (V_D) length",
    "Emotion Transitions",
    "Speakers",
];

pub fn stat_rows() -> &'static [&'static str] {
    &STAT_ROWS
}

pub const TRANSITION_GROUPS: [&str; 4] = ["w/o Trans", "One Trans", "Two Trans", "Three Trans"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub total: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let total: f64 = values.iter().sum();
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: total / values.len() as f64,
            total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub utterances: usize,
    pub words: Summary,
    pub duration_s: Summary,
    pub caption_vi: Option<Summary>,
    pub caption_vd: Option<Summary>,
    pub emotion_transitions: usize,
    pub speakers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsColumn {
    pub language: Language,
    pub transitions: usize,
    pub cell: Option<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub columns: Vec<StatsColumn>,
}

/// Text units in a caption: words for en, CJK characters for zh.
pub fn caption_length(text: &str, language: Language) -> usize {
    count_units(text, language)
}

pub fn dataset_stats(manifests: &[UtteranceManifest]) -> Result<DatasetStats> {
    if manifests.is_empty() {
        return Err(Error::Evaluation("no manifests to summarize".into()));
    }
    let mut columns = Vec::new();
    for k in 0..TRANSITION_GROUPS.len() {
        for language in [Language::En, Language::Zh] {
            let group: Vec<&UtteranceManifest> = manifests
                .iter()
                .filter(|m| m.language == language && m.plan.transition_count() == k)
                .collect();
            columns.push(StatsColumn {
                language,
                transitions: k,
                cell: cell_stats(&group, language),
            });
        }
    }
    let skipped = manifests.iter().filter(|m| m.plan.transition_count() >= TRANSITION_GROUPS.len()).count();
    if skipped > 0 {
        log::warn!("{skipped} manifests with more than three transitions are not tabulated");
    }
    Ok(DatasetStats { columns })
}

fn cell_stats(group: &[&UtteranceManifest], language: Language) -> Option<CellStats> {
    if group.is_empty() {
        return None;
    }
    let words: Vec<f64> = group
        .iter()
        .map(|m| m.sentences.iter().map(|s| count_units(&s.text, language)).sum::<usize>() as f64)
        .collect();
    let durations: Vec<f64> = group.iter().map(|m| m.duration_s()).collect();
    let captions = |f: fn(&crate::types::CaptionRecord) -> &str| -> Vec<f64> {
        group
            .iter()
            .filter_map(|m| m.captions.as_ref())
            .map(|c| caption_length(f(c), language) as f64)
            .collect()
    };
    Some(CellStats {
        utterances: group.len(),
        words: Summary::of(&words)?,
        duration_s: Summary::of(&durations)?,
        caption_vi: Summary::of(&captions(|c| &c.v_i)),
        caption_vd: Summary::of(&captions(|c| &c.v_d)),
        emotion_transitions: group.iter().map(|m| m.plan.clone()).collect::<BTreeSet<_>>().len(),
        speakers: group.iter().map(|m| m.speaker_id.as_str()).collect::<BTreeSet<_>>().len(),
    })
}

const ABSENT: &str = "-";

impl DatasetStats {
    /// One row per label of [`stat_rows`], each with one cell per column.
    pub fn rows(&self) -> Vec<(String, Vec<String>)> {
        let int = |v: f64| format!("{}", v.round() as i64);
        let two = |v: f64| format!("{v:.2}");
        let cell = |f: &dyn Fn(&CellStats) -> Option<String>| -> Vec<String> {
            self.columns
                .iter()
                .map(|c| c.cell.as_ref().and_then(f).unwrap_or_else(|| ABSENT.to_string()))
                .collect()
        };
        let mut rows = Vec::new();
        for &label in stat_rows() {
            let values = match label {
                "Language" => self.columns.iter().map(|c| c.language.as_str().to_uppercase()).collect(),
                "Utterances" => cell(&|c| Some(c.utterances.to_string())),
                "Words" => cell(&|c| Some(int(c.words.total))),
                "Max words per utterance" => cell(&|c| Some(int(c.words.max))),
                "Min words per utterance" => cell(&|c| Some(int(c.words.min))),
                "Mean words per utterance" => cell(&|c| Some(int(c.words.mean))),
                "Duration(h)" => cell(&|c| Some(two(c.duration_s.total / 3600.0))),
                "Max utterance duration(s)" => cell(&|c| Some(two(c.duration_s.max))),
                "Min utterance duration(s)" => cell(&|c| Some(two(c.duration_s.min))),
                "Mean utterance duration(s)" => cell(&|c| Some(two(c.duration_s.mean))),
                "Max caption (V_I) length" => cell(&|c| c.caption_vi.map(|s| int(s.max))),
                "Min caption (V_I) length" => cell(&|c| c.caption_vi.map(|s| int(s.min))),
                "Mean caption (V_I) length" => cell(&|c| c.caption_vi.map(|s| int(s.mean))),
                "Max caption (V_D) length" => cell(&|c| c.caption_vd.map(|s| int(s.max))),
                "Min caption (V_D) length" => cell(&|c| c.caption_vd.map(|s| int(s.min))),
                "Mean caption (V_D) length" => cell(&|c| c.caption_vd.map(|s| int(s.mean))),
                "Emotion Transitions" => cell(&|c| Some(c.emotion_transitions.to_string())),
                "Speakers" => cell(&|c| Some(c.speakers.to_string())),
                _ => unreachable!("unknown row"),
            };
            rows.push((label.to_string(), values));
        }
        rows
    }

    /// Plain-text table with the transition groups as column headers.
    pub fn render_text(&self) -> String {
        let rows = self.rows();
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(4).max(4);
        let cell_w = rows
            .iter()
            .flat_map(|(_, v)| v.iter().map(String::len))
            .max()
            .unwrap_or(1)
            .max(9);
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "Item");
        for g in TRANSITION_GROUPS {
            let _ = write!(out, " | {:^w$}", g, w = 2 * cell_w + 1);
        }
        out.push('\n');
        for (label, values) in rows {
            let _ = write!(out, "{label:<label_w$}");
            for pair in values.chunks(2) {
                let _ = write!(out, " | {:>cell_w$} {:>cell_w$}", pair[0], pair[1]);
            }
            out.push('\n');
        }
        out
    }
}
