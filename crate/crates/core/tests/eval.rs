use std::collections::BTreeMap;
use std::path::PathBuf;

use serde_json::Value;
use teachbench_core::eval::{
    believability_summary, load_records, run_interview, run_lesson, BiasReport, DialogueScript, TUTOR_TAG,
};
use teachbench_core::gateway::{Gateway, Gateways, Matcher, Script, ScriptRule};
use teachbench_core::student::{SimSettings, REFLECT_TAG, RESPOND_TAG};
use teachbench_core::{phase_transition_components, EvalRecord, Pipeline, Role, StudentProfile, Topic};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn profiles() -> Vec<StudentProfile> {
    serde_json::from_str(&std::fs::read_to_string(fixtures().join("reference_profiles.json")).unwrap()).unwrap()
}

/// Straight from the raw JSON: per-profile mean of wrong-component
/// percentages, without going through the library's metric code.
fn oracle_knowledge(pipeline: &str) -> Vec<f64> {
    let raw_profiles: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("reference_profiles.json")).unwrap()).unwrap();
    let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for entry in std::fs::read_dir(fixtures().join("reference_records")).unwrap() {
        let recs: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(entry.unwrap().path()).unwrap()).unwrap();
        for r in recs.iter().filter(|r| r["pipeline"] == pipeline) {
            let idx = raw_profiles.iter().position(|p| p["id"] == r["profile_id"]).unwrap();
            let conf = raw_profiles[idx]["initial_knowledge"].as_array().unwrap();
            let pred = r["predicted_knowledge"].as_array().unwrap();
            let wrong = conf.iter().zip(pred).filter(|(a, b)| a != b).count() as f64;
            let slot = sums.entry(idx).or_default();
            slot.0 += 100.0 * wrong / conf.len() as f64;
            slot.1 += 1.0;
        }
    }
    sums.values().map(|(s, n)| s / n).collect()
}

fn oracle_mean_median(mut xs: Vec<f64>) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (mean, xs[xs.len() / 2])
}

fn report() -> BiasReport {
    let records = load_records(&fixtures().join("reference_records")).unwrap();
    assert_eq!(records.len(), 180);
    BiasReport::build(&profiles(), &records).unwrap()
}

#[test]
fn knowledge_bias_matches_oracle_and_targets() {
    let report = report();
    for (pipeline, key, mean, median) in [(Pipeline::Ours, "ours", 7.0, 5.0), (Pipeline::Baseline, "baseline", 4.4, 1.7)] {
        let oracle = oracle_knowledge(key);
        let ours: Vec<f64> = (1..=9)
            .map(|i| report.profile(pipeline, &format!("S{i}")).unwrap().knowledge_bias.mean)
            .collect();
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        let (om, omed) = oracle_mean_median(oracle);
        let s = report.summary(pipeline).unwrap();
        assert!((s.knowledge_bias_mean - om).abs() < 1e-9);
        assert!((s.knowledge_bias_median - omed).abs() < 1e-9);
        assert!((s.knowledge_bias_mean - mean).abs() < 0.05, "{key} mean {}", s.knowledge_bias_mean);
        assert!((s.knowledge_bias_median - median).abs() < 0.05, "{key} median {}", s.knowledge_bias_median);
    }
    let per_profile: Vec<f64> = (1..=9)
        .map(|i| report.profile(Pipeline::Ours, &format!("S{i}")).unwrap().knowledge_bias.mean)
        .collect();
    let published = [8.3, 6.7, 5.0, 21.7, 0.0, 0.0, 21.7, 0.0, 0.0];
    for (a, b) in per_profile.iter().zip(published) {
        assert!((a - b).abs() < 0.05);
    }
}

#[test]
fn trait_bias_aggregate() {
    let report = report();
    let s = report.summary(Pipeline::Ours).unwrap();
    assert!((s.trait_bias_mean - 1.9).abs() <= 0.05, "mean {}", s.trait_bias_mean);
    assert!((s.trait_bias_min - 0.4).abs() <= 0.05);
    assert!((s.trait_bias_max - 4.9).abs() <= 0.05);
    for id in ["S3", "S4", "S9"] {
        assert!(report.profile(Pipeline::Ours, id).unwrap().trait_bias[0].mean > 4.0, "{id}");
    }
    for p in report.profiles.iter() {
        for t in &p.trait_bias {
            assert!((0.0..=12.0).contains(&t.mean));
        }
    }
}

#[test]
fn believability_recomputed_by_hand() {
    let records = load_records(&fixtures().join("reference_records")).unwrap();
    let ours: Vec<EvalRecord> = records.into_iter().filter(|r| r.pipeline == Pipeline::Ours).collect();
    let s = believability_summary(&ours).unwrap();

    let mut per_profile: BTreeMap<&str, Vec<[u8; 3]>> = BTreeMap::new();
    for r in &ours {
        per_profile.entry(&r.profile_id).or_default().push(r.believability);
    }
    let means: Vec<[f64; 3]> = per_profile
        .values()
        .map(|v| {
            let n = v.len() as f64;
            [0, 1, 2].map(|i| v.iter().map(|b| b[i] as f64).sum::<f64>() / n)
        })
        .collect();
    for i in 0..3 {
        let col: Vec<f64> = means.iter().map(|m| m[i]).collect();
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64;
        assert!((s.statements[i].mean - m).abs() < 1e-9);
        assert!((s.statements[i].sd - var.sqrt()).abs() < 1e-9);
    }
    let target = [(3.6, 0.4), (3.5, 0.3), (3.4, 0.3)];
    for (st, (m, sd)) in s.statements.iter().zip(target) {
        assert!((st.mean - m).abs() < 0.05 && (st.sd - sd).abs() < 0.05, "{st:?}");
    }
    assert!((s.pearson_b1_b3.unwrap() - 0.96).abs() < 0.005);
}

#[test]
fn hand_computed_four_records() {
    let mk = |p: &str, b: [u8; 3]| EvalRecord {
        profile_id: p.into(),
        pipeline: Pipeline::Ours,
        rater_id: "r".into(),
        predicted_knowledge: teachbench_core::KnowledgeState::empty(6),
        predicted_trait_sums: [9; 4],
        believability: b,
    };
    // A: B1 (4+2)/2=3, B3 (5+3)/2=4; B: B1 5, B3 4; C: B1 1, B3 2
    let recs = [mk("A", [4, 3, 5]), mk("A", [2, 3, 3]), mk("B", [5, 4, 4]), mk("C", [1, 1, 2])];
    let s = believability_summary(&recs).unwrap();
    assert!((s.statements[0].mean - 3.0).abs() < 1e-12);
    assert!((s.statements[0].sd - 2.0).abs() < 1e-12);
    assert!((s.statements[2].mean - 10.0 / 3.0).abs() < 1e-12);
    // r over (3,4), (5,4), (1,2): sxy = 0*(2/3) + 2*(2/3) + (-2)*(-4/3) = 4, sxx = 8, syy = 8/3
    let expect = 4.0 / (8.0f64 * 8.0 / 3.0).sqrt();
    assert!((s.pearson_b1_b3.unwrap() - expect).abs() < 1e-12);
}

#[test]
fn report_is_reproducible() {
    let a = report();
    let b = report();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.to_markdown(), b.to_markdown());
    let md = a.to_markdown();
    assert!(md.contains("| Pipeline | S1 | S2 | S3 | S4 | S5 | S6 | S7 | S8 | S9 | Mean | Median |"));
    assert!(md.contains("| ours | 8.3±"));
    assert!(md.contains("| GC | MO | SE | ST |"));
    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let back: BiasReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, a);
}

fn template_honoring() -> Script {
    Script::new(vec![
        ScriptRule::reply(Matcher::tag(RESPOND_TAG).and_contains("<knowledge>\n</knowledge>"), "I don't know."),
        ScriptRule::reply(Matcher::tag(RESPOND_TAG), "I think it is about particles."),
        ScriptRule::reply(Matcher::tag(REFLECT_TAG).and_contains("0. Solids"), "The teacher explained solids.\n0"),
        ScriptRule::reply(Matcher::tag(REFLECT_TAG).and_contains("3. Substances"), "Phase change was defined.\n3, 4"),
        ScriptRule::reply(Matcher::tag(REFLECT_TAG), "null"),
        ScriptRule::reply(Matcher::tag(TUTOR_TAG), "Solids keep their shape. What happens when ice melts?"),
    ])
}

#[tokio::test]
async fn zero_knowledge_interview_says_i_dont_know() {
    let mut s6 = profiles().into_iter().find(|p| p.id == "S6").unwrap();
    s6.pipeline = Pipeline::Baseline;
    let gw = Gateway::scripted(template_honoring());
    let kcs = phase_transition_components();
    let t = run_interview(&s6, &DialogueScript::default_interview(), &Topic::default(), &kcs, &gw, &SimSettings::default())
        .await
        .unwrap();
    assert!(t.is_complete());
    assert_eq!(t.conversation.len(), 32);
    let replies: Vec<&str> = t
        .conversation
        .messages()
        .iter()
        .filter(|m| m.role == Role::Student)
        .map(|m| m.text.as_str())
        .collect();
    assert!(replies[..6].iter().all(|r| *r == "I don't know."));
    assert!(gw.trace().with_tag(REFLECT_TAG).is_empty());
    let again = run_interview(&s6, &DialogueScript::default_interview(), &Topic::default(), &kcs, &gw, &SimSettings::default())
        .await
        .unwrap();
    assert_eq!(again.render(), t.render());
}

#[tokio::test]
async fn lesson_has_24_messages_and_monotone_knowledge() {
    let s9 = profiles().into_iter().find(|p| p.id == "S9").unwrap();
    let kcs = phase_transition_components();
    let run = || async {
        let gws = Gateways::shared(Gateway::scripted(template_honoring()));
        run_lesson(&s9, &DialogueScript::default_lesson(), &Topic::default(), &kcs, &gws, &SimSettings::default())
            .await
            .unwrap()
    };
    let t = run().await;
    assert!(t.is_complete());
    assert_eq!(t.conversation.len(), 24);
    let snaps: Vec<_> = t
        .conversation
        .messages()
        .iter()
        .filter_map(|m| m.knowledge_snapshot.clone())
        .collect();
    assert_eq!(snaps.len(), 12);
    for w in snaps.windows(2) {
        assert!(w[1].covers(&w[0]));
    }
    assert_eq!(snaps.last().unwrap().acquired_indices(), vec![0, 3, 4]);
    let again = run().await;
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&t).unwrap());
}
