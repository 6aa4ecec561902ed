//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p emotrans-cli --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use emotrans_core::builder::{concatenate, normalize_loudness};
use emotrans_core::caption::{
    parse_caption_plan, template_vd, template_vi, validate_caption, CaptionVersion, GLOBAL_HEADER, PARTIAL_HEADER,
};
use emotrans_core::attributes::{AttributeSequence, Level, SegmentAttributes, SpeakerProfile, Speed};
use emotrans_core::clients::{ClientResult, EmbedderClient};
use emotrans_core::fallback::ManifestAsr;
use emotrans_core::metrics::{self, cosine, eer_brute_force, eer_fast, ees_from_cosines, EmbeddingVector};
use emotrans_core::planner::{enumerate_transition_plans, template_discourse, GenerationRequest, Perspective, Topic};
use emotrans_core::preprocess::{trim_silence, VadParams};
use emotrans_core::seed::substream;
use emotrans_core::ssml::{emit_ssml, parse_ssml};
use emotrans_core::{EmotionLabel, Language, TimedSegment, TransitionPlan, Waveform};
use emotrans_mtetr::eval::{evaluate, EvalExample};
use emotrans_mtetr::synth::SyntheticGenerator;
use emotrans_mtetr::targets::one_hot;
use emotrans_mtetr::{
    decode, format_segments, make_frame_targets, train, uncertainty_grad, uncertainty_loss, ModelConfig, Mtetr,
    SmoothingConfig, TrainConfig, TrainExample, UncertaintyState,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn combinatorics() -> Outcome {
    let t = Instant::now();
    let all = EmotionLabel::ALL;
    let mut counts = Vec::new();
    for k in 0..=3usize {
        let plans = enumerate_transition_plans(&all, k).map_err(|e| e.to_string())?;
        let mut brute: Vec<Vec<EmotionLabel>> = vec![vec![]];
        for _ in 0..=k {
            brute = brute
                .into_iter()
                .flat_map(|p| all.iter().map(move |&e| [p.clone(), vec![e]].concat()))
                .collect();
        }
        brute.retain(|p| p.windows(2).all(|w| w[0] != w[1]));
        let mut got: Vec<Vec<EmotionLabel>> = plans.iter().map(|p| p.emotions().to_vec()).collect();
        let n = got.len();
        got.sort();
        got.dedup();
        brute.sort();
        ensure(got.len() == n, || format!("k={k}: duplicates"))?;
        ensure(got == brute, || format!("k={k}: {} plans, brute force {}", n, brute.len()))?;
        counts.push(n);
    }
    ensure(counts == [5, 20, 80, 320], || format!("{counts:?}"))?;
    within(t.elapsed(), 1.0)?;
    Ok(format!("{counts:?} in {:.3} s", t.elapsed().as_secs_f64()))
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn uncertainty() -> Outcome {
    let t = Instant::now();
    let mut rng = substream(7, "acceptance-uncertainty", 0);
    let zero = UncertaintyState::default();
    for _ in 0..20 {
        let (ld, lt) = (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0));
        let v = uncertainty_loss(ld, lt, &zero).map_err(|e| e.to_string())?;
        ensure(v == 0.5 * (ld + lt), || format!("s=0: {v} vs {}", 0.5 * (ld + lt)))?;
    }
    let mut worst_rel = 0f64;
    for _ in 0..20 {
        let (ld, lt) = (rng.gen_range(0.01..5.0), rng.gen_range(0.01..5.0));
        let s = UncertaintyState {
            s_dia: rng.gen_range(-3.0..3.0),
            s_det: rng.gen_range(-3.0..3.0),
        };
        let (g_dia, g_det) = uncertainty_grad(ld, lt, &s).map_err(|e| e.to_string())?;
        let h = 1e-5;
        let f = |st: UncertaintyState| uncertainty_loss(ld, lt, &st).unwrap();
        let fd_dia = (f(UncertaintyState { s_dia: s.s_dia + h, ..s }) - f(UncertaintyState { s_dia: s.s_dia - h, ..s })) / (2.0 * h);
        let fd_det = (f(UncertaintyState { s_det: s.s_det + h, ..s }) - f(UncertaintyState { s_det: s.s_det - h, ..s })) / (2.0 * h);
        for (a, n) in [(g_dia, fd_dia), (g_det, fd_det)] {
            // Relative to the gradient scale; a near-zero gradient is compared absolutely.
            let rel = (a - n).abs() / a.abs().max(1.0);
            worst_rel = worst_rel.max(rel);
            ensure(rel < 1e-5, || format!("grad {a} vs fd {n}"))?;
        }
    }
    let mut worst_min = 0f64;
    for _ in 0..20 {
        let (ld, lt) = (rng.gen_range(0.05..5.0), rng.gen_range(0.05..5.0));
        let s_dia = golden_min(|s| uncertainty_loss(ld, lt, &UncertaintyState { s_dia: s, s_det: 0.0 }).unwrap(), -10.0, 10.0);
        let s_det = golden_min(|s| uncertainty_loss(ld, lt, &UncertaintyState { s_dia: 0.0, s_det: s }).unwrap(), -10.0, 10.0);
        for (s, l) in [(s_dia, ld), (s_det, lt)] {
            let err = (s.exp() - l).abs() / l;
            worst_min = worst_min.max(err);
            ensure(err < 1e-4, || format!("argmin σ² = {} for L = {l}", s.exp()))?;
        }
    }
    within(t.elapsed(), 5.0)?;
    Ok(format!("max fd rel err {worst_rel:.1e}, max σ²/L err {worst_min:.1e}"))
}

fn random_segments<R: Rng>(rng: &mut R) -> Vec<TimedSegment> {
    let n = rng.gen_range(1..=4);
    let plan = SyntheticGenerator::random_plan(rng, n - 1);
    let mut t = 0.0;
    plan.emotions()
        .iter()
        .map(|&e| {
            let d = (rng.gen_range(0.5..=10.0) * 50.0f64).round() / 50.0;
            let s = TimedSegment::new(t, t + d, e).unwrap();
            t += d;
            s
        })
        .collect()
}

fn decode_round_trip() -> Outcome {
    let t = Instant::now();
    let mut rng = substream(7, "acceptance-decode", 0);
    let frame = 1.0 / 50.0;
    let mut worst = 0f64;
    for case in 0..500 {
        let segs = random_segments(&mut rng);
        let frames = (segs.last().unwrap().end_s * 50.0).round() as usize;
        let targets = make_frame_targets(&segs, 50.0, frames, 2).map_err(|e| e.to_string())?;
        let out = decode(one_hot(&targets.dia).view(), 50.0, &SmoothingConfig::default());
        let seq = |v: &[TimedSegment]| v.iter().map(|s| s.emotion).collect::<Vec<_>>();
        ensure(seq(&out) == seq(&segs), || format!("case {case}: {segs:?} -> {out:?}"))?;
        for (a, b) in out.iter().zip(&segs) {
            let err = (a.start_s - b.start_s).abs().max((a.end_s - b.end_s).abs());
            worst = worst.max(err);
            ensure(err <= frame + 1e-9, || format!("case {case}: boundary off by {err} s"))?;
        }
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!("500 cases, max boundary error {:.3} s", worst))
}

fn synthetic_mtetr() -> Outcome {
    const DIM: usize = 768;
    let t = Instant::now();
    let gen = SyntheticGenerator::new(DIM, 21);
    let train_set: Vec<TrainExample> = gen.dataset(21, "acceptance-train", 200, &[1, 2, 3]).map_err(|e| e.to_string())?
        .into_iter()
        .map(|d| {
            let t = make_frame_targets(&d.segments, 50.0, d.features.len(), 2).unwrap();
            TrainExample::new(d.features, t).unwrap()
        })
        .collect();
    let model_cfg = ModelConfig {
        dropout: 0.5,
        ..ModelConfig::reduced()
    };
    let train_cfg = TrainConfig {
        seed: 21,
        epochs: 3,
        batch_size: 4,
        learning_rate: 1e-3,
        time_budget_s: Some(540.0),
        ..TrainConfig::default()
    };
    let model = Mtetr::new(model_cfg.clone(), 21).map_err(|e| e.to_string())?;
    let first = train(&model, &train_set, &train_cfg).map_err(|e| e.to_string())?;
    let train_time = t.elapsed();
    ensure(train_time.as_secs_f64() < 600.0, || format!("training took {:.0} s", train_time.as_secs_f64()))?;

    let mut summary = Vec::new();
    for k in 1..=3usize {
        let held = gen.dataset(21, &format!("acceptance-test-{k}"), 50, &[k]).map_err(|e| e.to_string())?;
        let examples: Vec<EvalExample> = held
            .into_iter()
            .map(|d| {
                let targets = make_frame_targets(&d.segments, 50.0, d.features.len(), 2).unwrap();
                EvalExample { features: d.features, targets, plan: d.plan }
            })
            .collect();
        let r = evaluate(&model, &examples, &SmoothingConfig::default()).map_err(|e| e.to_string())?;
        ensure(r.fea >= 95.0, || format!("k={k}: FEA {:.2}", r.fea))?;
        ensure(r.sequence_accuracy >= 90.0, || format!("k={k}: sequence accuracy {:.2}", r.sequence_accuracy))?;
        summary.push(format!("k={k} FEA {:.1} seq {:.0}", r.fea, r.sequence_accuracy));
    }

    let again = train(&Mtetr::new(model_cfg, 21).map_err(|e| e.to_string())?, &train_set, &train_cfg)
        .map_err(|e| e.to_string())?;
    ensure(first.losses() == again.losses(), || format!("{:?} vs {:?}", first.losses(), again.losses()))?;
    Ok(format!(
        "{}; train {:.0} s, {} epochs, histories identical",
        summary.join(", "),
        train_time.as_secs_f64(),
        first.history.len()
    ))
}

/// Embeds a waveform as a fixed direction chosen by its mean sample.
struct LevelEmbedder;

impl EmbedderClient for LevelEmbedder {
    fn embed(&self, w: &Waveform) -> ClientResult<EmbeddingVector> {
        let m = w.samples().iter().sum::<f64>() / w.len().max(1) as f64;
        Ok(EmbeddingVector::normalized(vec![1.0, m, 0.5]).unwrap())
    }
}

fn constant(v: f64, secs: f64) -> Waveform {
    Waveform::new(vec![v; (secs * 16000.0) as usize], 16000).unwrap()
}

fn ees_oracle() -> Outcome {
    let pieces = [constant(0.1, 1.0), constant(0.3, 1.5)];
    let labels = [EmotionLabel::Happy, EmotionLabel::Sad];
    let (synth, spans) = concatenate(&pieces, &labels).map_err(|e| e.to_string())?;
    let texts = vec!["first part".to_string(), "second part here".to_string()];
    let asr = ManifestAsr::new(texts.iter().zip(&spans).map(|(t, s)| (t.clone(), s.start_s, s.end_s)).collect());
    let truth: Vec<EmbeddingVector> = pieces.iter().map(|p| LevelEmbedder.embed(p).unwrap()).collect();
    let identity = metrics::ees(&synth, &texts, &asr, &LevelEmbedder, &truth).map_err(|e| e.to_string())?;
    ensure(identity == 1.0, || format!("identity EES {identity}"))?;

    // Truth vectors at angle acos(c) from the embedder's output for each piece.
    let rotate = |e: &EmbeddingVector, c: f64| {
        let v = e.values();
        let n2 = EmbeddingVector::normalized(vec![v[1], -v[0], 0.0]).unwrap();
        let s = (1.0 - c * c).sqrt();
        EmbeddingVector::normalized((0..3).map(|i| c * v[i] + s * n2.values()[i]).collect()).unwrap()
    };
    let constructed: Vec<EmbeddingVector> = truth.iter().zip([0.9, 0.8]).map(|(e, c)| rotate(e, c)).collect();
    let score = metrics::ees(&synth, &texts, &asr, &LevelEmbedder, &constructed).map_err(|e| e.to_string())?;
    ensure((score - 0.72).abs() <= 1e-9, || format!("constructed EES {score}"))?;

    let mut rng = substream(7, "acceptance-ees", 0);
    for case in 0..100 {
        let n = rng.gen_range(1..=4);
        let dim = rng.gen_range(2..16);
        let mut draw = || EmbeddingVector::normalized((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let pairs: Vec<(EmbeddingVector, EmbeddingVector)> = (0..n).map(|_| (draw(), draw())).collect();
        let cos: Vec<f64> = pairs.iter().map(|(a, b)| cosine(a, b).unwrap()).collect();
        let mut product = 1.0;
        for (a, b) in &pairs {
            let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
            product *= dot;
        }
        let got = ees_from_cosines(&cos);
        ensure((got - product).abs() <= 1e-12, || format!("case {case}: {got} vs {product}"))?;
    }
    Ok(format!("identity 1.0, constructed {score:.12}, 100 random cases"))
}

fn alignment() -> Outcome {
    let mut rng = substream(7, "acceptance-alignment", 0);
    let params = VadParams::default();
    let tol = f64::from(params.frame_ms) / 1000.0;
    let mut worst = 0f64;
    for case in 0..200 {
        let bursts = rng.gen_range(1..=4);
        let mut samples = Vec::new();
        let mut truth = Vec::new();
        let sr = 16000.0;
        for i in 0..=bursts {
            let gap = if i == 0 || i == bursts { rng.gen_range(0.0..1.5) } else { rng.gen_range(0.4..1.5) };
            samples.extend((0..(gap * sr) as usize).map(|_| rng.gen_range(-1e-4..1e-4)));
            if i < bursts {
                let amp = rng.gen_range(0.05..0.5);
                let start = samples.len() as f64 / sr;
                samples.extend((0..(rng.gen_range(0.4..2.0) * sr) as usize).map(|_| rng.gen_range(-amp..amp)));
                truth.push((start, samples.len() as f64 / sr));
            }
        }
        let w = Waveform::new(samples, 16000).map_err(|e| e.to_string())?;
        let (_, map) = trim_silence(&w, &params).map_err(|e| e.to_string())?;
        ensure(map.kept_spans.len() == truth.len(), || {
            format!("case {case}: {} spans for {} bursts", map.kept_spans.len(), truth.len())
        })?;
        let mut join = 0.0;
        for (i, &(on, off)) in truth.iter().enumerate() {
            let len = map.kept_spans[i].1 - map.kept_spans[i].0;
            let start = map.map_to_original(if i == 0 { 0.0 } else { join + 1e-7 }).map_err(|e| e.to_string())?;
            join += len;
            let end = map.map_to_original(join).map_err(|e| e.to_string())?;
            let err = (start - on).abs().max((end - off).abs());
            worst = worst.max(err);
            ensure(err <= tol + 1e-6, || format!("case {case} burst {i}: ({start}, {end}) vs ({on}, {off})"))?;
        }
    }
    Ok(format!("200 patterns, max boundary error {:.1} ms", worst * 1000.0))
}

fn loudness_and_format() -> Outcome {
    let mut rng = substream(7, "acceptance-loudness", 0);
    let segs: Vec<Waveform> = (0..6)
        .map(|_| {
            let amp = rng.gen_range(0.01..0.9);
            let n = rng.gen_range(800..8000);
            Waveform::new((0..n).map(|_| rng.gen_range(-amp..amp)).collect(), 16000).unwrap()
        })
        .collect();
    let out = normalize_loudness(&segs).map_err(|e| e.to_string())?;
    let rms: Vec<f64> = out
        .iter()
        .map(|w| (w.samples().iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt())
        .collect();
    let spread = rms.iter().map(|r| (r - rms[0]).abs() / rms[0]).fold(0.0, f64::max);
    ensure(spread <= 1e-6, || format!("RMS spread {spread:e}"))?;

    let (_, timeline) = concatenate(&[constant(0.1, 5.0), constant(0.2, 3.0)], &[EmotionLabel::Angry, EmotionLabel::Sad])
        .map_err(|e| e.to_string())?;
    let spans: Vec<(f64, f64)> = timeline.iter().map(|s| (s.start_s, s.end_s)).collect();
    ensure(spans == [(0.0, 5.0), (5.0, 8.0)], || format!("{spans:?}"))?;
    let text = format_segments(&timeline).map_err(|e| e.to_string())?;
    let expected = "start_time: 00:00, end_time: 00:05, emotion: \"Angry\"";
    ensure(text.as_bytes().starts_with(expected.as_bytes()), || text.clone())?;
    Ok(format!("RMS spread {spread:.1e}, spans {spans:?}, `{text}`"))
}

const LEVELS: [Level; 3] = [Level::Low, Level::Medium, Level::High];
const SPEEDS: [Speed; 3] = [Speed::Slow, Speed::Medium, Speed::Fast];

fn attrs_for(plan: &TransitionPlan, language: Language, i: usize) -> AttributeSequence {
    let req = GenerationRequest {
        topic: Topic {
            primary: "Travel".into(),
            secondary: "night trains".into(),
            secondary_zh: Some("夜行列车".into()),
        },
        plan: plan.clone(),
        perspective: [Perspective::First, Perspective::Second, Perspective::Third][i % 3],
        language,
        seed: i as u64,
    };
    AttributeSequence {
        profile: SpeakerProfile::default(),
        segments: plan
            .emotions()
            .iter()
            .zip(template_discourse(&req))
            .enumerate()
            .map(|(j, (&e, text))| SegmentAttributes {
                start_s: 2.5 * j as f64,
                end_s: 2.5 * (j + 1) as f64,
                emotion: e,
                transcript: text,
                pitch_hz: 140.0,
                pitch_cat: LEVELS[(i + j) % 3],
                energy_db: -22.0,
                energy_cat: LEVELS[(i + 2 * j) % 3],
                speed_ups: 3.2,
                speed_cat: SPEEDS[(i + j) % 3],
            })
            .collect(),
    }
}

fn captions() -> Outcome {
    let plans: Vec<TransitionPlan> = (0..=3)
        .flat_map(|k| enumerate_transition_plans(&EmotionLabel::ALL, k).unwrap())
        .collect();
    ensure(plans.len() == 425, || format!("{} plans", plans.len()))?;
    let mut pairs = Vec::new();
    for (i, plan) in plans.iter().enumerate() {
        for language in [Language::En, Language::Zh] {
            let a = attrs_for(plan, language, i);
            let vi = template_vi(&a, language);
            let r = validate_caption(CaptionVersion::VI, &vi, &a, language);
            ensure(r.passed, || format!("{plan}: V_I rejected {:?}", r.violations))?;
            let vd = template_vd(&a, language).map_err(|e| e.to_string())?;
            let r = validate_caption(CaptionVersion::VD, &vd, &a, language);
            ensure(r.passed, || format!("{plan}: V_D rejected {:?}", r.violations))?;
            let parsed = parse_caption_plan(&vi).map_err(|e| e.to_string())?.plan;
            let markup = parse_ssml(&emit_ssml(&a, language)).and_then(|d| d.plan()).map_err(|e| e.to_string())?;
            ensure(&markup == plan, || format!("{plan}: SSML gave {markup}"))?;
            pairs.push(metrics::EvalPair::new(parsed, plan.clone()));
        }
    }
    let etc = metrics::acc_etc(&pairs).map_err(|e| e.to_string())?;
    let ett = metrics::acc_ett(&pairs);
    ensure(etc == 100.0 && ett == Some(100.0), || format!("Acc_ETC {etc}, Acc_ETT {ett:?}"))?;

    let plan = TransitionPlan::new(vec![EmotionLabel::Happy, EmotionLabel::Sad, EmotionLabel::Angry]).unwrap();
    let a = attrs_for(&plan, Language::En, 1);
    let vi = template_vi(&a, Language::En);
    let vd = template_vd(&a, Language::En).map_err(|e| e.to_string())?;
    let vi_lines: Vec<&str> = vi.lines().collect();
    let vd_lines: Vec<&str> = vd.lines().collect();
    let part_idx: Vec<usize> = (0..vd_lines.len()).filter(|&i| vd_lines[i].starts_with("Part")).collect();
    let swap_parts = {
        let mut l: Vec<String> = vd_lines.iter().map(|s| s.to_string()).collect();
        let (p1, p2) = (part_idx[0], part_idx[1]);
        let t1 = l[p1].clone();
        let t2 = l[p2].clone();
        let stamp = |s: &str| s[s.find('(').unwrap()..=s.find(')').unwrap()].to_string();
        l[p1] = t1.replacen(&stamp(&t1), &stamp(&t2), 1);
        l[p2] = t2.replacen(&stamp(&t2), &stamp(&t1), 1);
        l.join("\n")
    };
    let malformed: Vec<(&str, CaptionVersion, String)> = vec![
        ("V_I missing a line", CaptionVersion::VI, vi_lines[..2].join("\n")),
        ("V_I extra line", CaptionVersion::VI, format!("{vi}\nThe voice then fades away calmly.")),
        ("V_I numbered lines", CaptionVersion::VI, vi_lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect::<Vec<_>>().join("\n")),
        ("V_I transcript leak", CaptionVersion::VI, format!("{vi} {}", a.segments[1].transcript)),
        ("V_D transcript leak", CaptionVersion::VD, format!("{vd} {}", a.segments[0].transcript)),
        ("V_D missing global header", CaptionVersion::VD, vd.replacen(GLOBAL_HEADER, "", 1)),
        ("V_D missing partial header", CaptionVersion::VD, vd.replacen(PARTIAL_HEADER, "", 1)),
        ("V_D non-monotone parts", CaptionVersion::VD, swap_parts),
        ("V_D missing part", CaptionVersion::VD, vd_lines[..vd_lines.len() - 1].join("\n")),
        ("V_D headers swapped", CaptionVersion::VD, {
            vd.replacen(GLOBAL_HEADER, "\u{0}", 1).replacen(PARTIAL_HEADER, GLOBAL_HEADER, 1).replacen('\u{0}', PARTIAL_HEADER, 1)
        }),
    ];
    for (name, version, caption) in &malformed {
        let r = validate_caption(*version, caption, &a, Language::En);
        ensure(!r.passed, || format!("{name} accepted:\n{caption}"))?;
    }
    Ok(format!("850 captions and 850 SSML documents round trip, {} malformed rejected", malformed.len()))
}

fn eer() -> Outcome {
    let mut rng = substream(7, "acceptance-eer", 0);
    for case in 0..100 {
        let t = rng.gen_range(10..=200);
        let quantize = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..t)
            .map(|_| {
                let s: f64 = rng.gen();
                if quantize { (s * 6.0).floor() / 6.0 } else { s }
            })
            .collect();
        let mut targets = vec![false; t];
        for _ in 0..rng.gen_range(1..4) {
            let c = rng.gen_range(0..t);
            for i in c.saturating_sub(2)..=(c + 2).min(t - 1) {
                targets[i] = true;
            }
        }
        let tol = rng.gen_range(1..6);
        let fast = eer_fast(&scores, &targets, tol).map_err(|e| e.to_string())?;
        let brute = eer_brute_force(&scores, &targets, tol).map_err(|e| e.to_string())?;
        ensure(fast == brute, || format!("case {case}: {fast:?} vs {brute:?}"))?;
    }
    Ok("100 instances identical".into())
}

fn full_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "seed = 2024\n\n[dataset]\nutterances = 60\n").map_err(|e| e.to_string())?;
    let t = Instant::now();
    let mut times = Vec::new();
    for stage in ["plan", "build-dataset", "preprocess", "train-mtetr", "annotate", "evaluate", "stats"] {
        let s = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_emotrans"))
            .current_dir(dir.path())
            .args(["--config", cfg.to_str().unwrap(), "--offline", stage])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(o.status.success(), || format!("{stage}: {}", String::from_utf8_lossy(&o.stderr)))?;
        times.push(format!("{stage} {:.0}s", s.elapsed().as_secs_f64()));
    }
    within(t.elapsed(), 1200.0)?;
    let run = dir.path().join("run");
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()));
    let stats: metrics::DatasetStats = serde_json::from_str(&read(&run.join("stats.json"))?).map_err(|e| e.to_string())?;
    let rows: Vec<String> = stats.rows().into_iter().map(|(name, _)| name).collect();
    ensure(rows == metrics::stat_rows(), || format!("stats rows {rows:?}"))?;
    let m: serde_json::Value = serde_json::from_str(&read(&run.join("metrics.json"))?).map_err(|e| e.to_string())?;
    for key in ["Acc_ETC", "Acc_ETT", "EES^1", "EES^2", "EES^3", "FEA", "EER"] {
        ensure(m.get(key).is_some(), || format!("metrics.json lacks {key}"))?;
    }
    Ok(format!("{:.0} s total ({})", t.elapsed().as_secs_f64(), times.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("plan combinatorics", combinatorics),
        ("uncertainty loss", uncertainty),
        ("target/decode round trip", decode_round_trip),
        ("synthetic MTETR", synthetic_mtetr),
        ("EES oracle", ees_oracle),
        ("alignment round trip", alignment),
        ("loudness and concatenation", loudness_and_format),
        ("caption round trip", captions),
        ("EER oracle", eer),
        ("full offline pipeline", full_pipeline),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{:.1} s]", t.elapsed().as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {why} [{:.1} s]", t.elapsed().as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
