use emotrans_core::attributes::{AgeBucket, AttributeSequence, Gender, Level, SegmentAttributes, SpeakerProfile, Speed};
use emotrans_core::caption::{
    parse_caption_plan, template_vd, template_vi, validate_caption, validate_vd, validate_vi, CaptionVersion, Confidence,
};
use emotrans_core::planner::{enumerate_transition_plans, template_discourse, GenerationRequest, Perspective, Topic};
use emotrans_core::ssml::{emit_ssml, parse_ssml};
use emotrans_core::{EmotionLabel, Language, TransitionPlan};
use proptest::prelude::*;

const LEVELS: [Level; 3] = [Level::Low, Level::Medium, Level::High];
const SPEEDS: [Speed; 3] = [Speed::Slow, Speed::Medium, Speed::Fast];

fn attrs_for(plan: &TransitionPlan, language: Language, seed: u64, profile: SpeakerProfile) -> AttributeSequence {
    let req = GenerationRequest {
        topic: Topic {
            primary: "Culture".into(),
            secondary: "local museums".into(),
            secondary_zh: Some("本地博物馆".into()),
        },
        plan: plan.clone(),
        perspective: [Perspective::First, Perspective::Second, Perspective::Third][(seed % 3) as usize],
        language,
        seed,
    };
    let texts = template_discourse(&req);
    AttributeSequence {
        profile,
        segments: plan
            .emotions()
            .iter()
            .zip(texts)
            .enumerate()
            .map(|(i, (&e, text))| {
                let j = i + seed as usize;
                SegmentAttributes {
                    start_s: 3.3 * i as f64,
                    end_s: 3.3 * (i + 1) as f64,
                    emotion: e,
                    transcript: text,
                    pitch_hz: 150.0,
                    pitch_cat: LEVELS[j % 3],
                    energy_db: -25.0,
                    energy_cat: LEVELS[(j / 3) % 3],
                    speed_ups: 3.0,
                    speed_cat: SPEEDS[(j / 9) % 3],
                }
            })
            .collect(),
    }
}

fn all_plans() -> Vec<TransitionPlan> {
    (0..=3)
        .flat_map(|k| enumerate_transition_plans(&EmotionLabel::ALL, k).unwrap())
        .collect()
}

#[test]
fn every_plan_round_trips_through_templates_and_markup() {
    let plans = all_plans();
    assert_eq!(plans.len(), 425);
    let profiles = [
        SpeakerProfile::default(),
        SpeakerProfile {
            gender: Gender::Male,
            age_bucket: AgeBucket::MiddleAged,
        },
    ];
    for (i, plan) in plans.iter().enumerate() {
        for language in [Language::En, Language::Zh] {
            let a = attrs_for(plan, language, i as u64, profiles[i % 2]);
            let vi = template_vi(&a, language);
            let report = validate_caption(CaptionVersion::VI, &vi, &a, language);
            assert!(report.passed, "{plan}: {vi}\n{report:?}");
            let parsed = parse_caption_plan(&vi).unwrap();
            assert_eq!(&parsed.plan, plan);
            assert_eq!(parsed.confidence, Confidence::Exact);

            let vd = template_vd(&a, language).unwrap();
            let report = validate_caption(CaptionVersion::VD, &vd, &a, language);
            assert!(report.passed, "{plan}: {vd}\n{report:?}");

            let markup = emit_ssml(&a, language);
            assert_eq!(&parse_ssml(&markup).unwrap().plan().unwrap(), plan);
            assert_eq!(&parse_caption_plan(&markup).unwrap().plan, plan);
        }
    }
}

proptest! {
    #[test]
    fn validators_are_pure(caption in "\\PC{0,200}", n in 1usize..4) {
        let transcripts = vec!["a fixed transcript for testing".to_string()];
        prop_assert_eq!(
            validate_vi(&caption, n, &transcripts, Language::En),
            validate_vi(&caption, n, &transcripts, Language::En)
        );
        prop_assert_eq!(validate_vd(&caption), validate_vd(&caption));
        let report = validate_vd(&caption);
        prop_assert_eq!(report.passed, report.violations.is_empty());
    }
}
