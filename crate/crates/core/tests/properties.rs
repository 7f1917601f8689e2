use proptest::prelude::*;
use teachbench_core::autochat::{generate_batch, ChatContext, ReviewSession};
use teachbench_core::engine::{MASTER_TAG, PCA_TAG};
use teachbench_core::gateway::{Gateway, Gateways, Matcher, Script, ScriptRule};
use teachbench_core::student::{SimSettings, REFLECT_TAG, RESPOND_TAG};
use teachbench_core::{
    phase_transition_components, Conversation, EvalRecord, KnowledgeState, Message, NodeId, Pipeline, StateDiagram,
    StudentProfile, Topic, TraitOverview, TraitRatings,
};

fn knowledge(n: usize) -> impl Strategy<Value = KnowledgeState> {
    prop::collection::vec(any::<bool>(), n).prop_map(move |bits| KnowledgeState::new(bits, n).unwrap())
}

fn ratings() -> impl Strategy<Value = TraitRatings> {
    prop::array::uniform4(prop::array::uniform3(1u8..=5)).prop_map(|items| TraitRatings::new(items).unwrap())
}

fn pipeline() -> impl Strategy<Value = Pipeline> {
    prop_oneof![Just(Pipeline::Ours), Just(Pipeline::Baseline), Just(Pipeline::KnowledgeOnly)]
}

fn profile() -> impl Strategy<Value = StudentProfile> {
    (
        "[a-z0-9-]{1,12}",
        ".{0,20}",
        knowledge(6),
        ratings(),
        pipeline(),
        proptest::option::of((".{1,80}", ratings(), any::<bool>())),
    )
        .prop_map(|(id, name, k, r, p, overview)| {
            let mut profile = StudentProfile::new(id, name, k, r, p);
            profile.trait_overview = overview.map(|(text, generated_from, edited)| TraitOverview {
                text,
                generated_from,
                edited,
            });
            profile
        })
}

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
    let json = serde_json::to_string(v).unwrap();
    let back: T = serde_json::from_str(&json).unwrap();
    assert_eq!(&back, v);
}

proptest! {
    #[test]
    fn profiles_round_trip(p in profile()) {
        round_trip(&p);
    }

    #[test]
    fn records_round_trip(k in knowledge(6), sums in prop::array::uniform4(3u8..=15), b in prop::array::uniform3(1u8..=5), p in pipeline()) {
        let r = EvalRecord {
            profile_id: "S1".into(),
            pipeline: p,
            rater_id: "R01".into(),
            predicted_knowledge: k,
            predicted_trait_sums: sums,
            believability: b,
        };
        r.validate(6).unwrap();
        round_trip(&r);
    }

    #[test]
    fn conversations_round_trip(texts in prop::collection::vec(".{1,40}", 0..10), k in knowledge(6)) {
        let mut c = Conversation::new("c", 3);
        for (i, t) in texts.iter().enumerate() {
            let m = if i % 2 == 0 { Message::pca(t.clone(), NodeId::new("root")) } else { Message::student(t.clone(), k.clone()) };
            c.push(m).unwrap();
        }
        round_trip(&c);
    }

    #[test]
    fn diagrams_round_trip(extra in prop::collection::vec(("[a-z]{1,8}", ".{1,30}", ".{1,30}"), 0..6)) {
        let mut d = StateDiagram::starter();
        for (id, behavior, instruction) in extra {
            if d.add_node(teachbench_core::Node::behavior(format!("n-{id}"), behavior, instruction)).is_ok() {
                let _ = d.add_edge("root", format!("n-{id}"));
            }
        }
        round_trip(&d);
    }

    #[test]
    fn out_of_range_ratings_rejected(bad in prop_oneof![Just(0u8), 6u8..=255]) {
        let json = format!(r#"{{"goal_commitment":[{bad},1,1],"motivation":[1,1,1],"self_efficacy":[1,1,1],"stress":[1,1,1]}}"#);
        prop_assert!(serde_json::from_str::<TraitRatings>(&json).is_err());
    }
}

fn reflect_reply() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("null".to_string()),
        Just("no idea what to output".to_string()),
        prop::collection::vec(0usize..9, 1..4).prop_map(|v| {
            format!("The teacher explained some.\n{}", v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "))
        }),
        Just("1, x, -2, 99".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn knowledge_snapshots_never_shrink(initial in knowledge(6), replies in prop::collection::vec(reflect_reply(), 6)) {
        let mut rules: Vec<ScriptRule> = replies
            .into_iter()
            .map(|r| ScriptRule::reply(Matcher::tag(REFLECT_TAG), r).once())
            .collect();
        rules.extend([
            ScriptRule::reply(Matcher::tag(MASTER_TAG), "2"),
            ScriptRule::reply(Matcher::tag(PCA_TAG), "Let me explain."),
            ScriptRule::reply(Matcher::tag(RESPOND_TAG), "Okay."),
            ScriptRule::reply(Matcher::tag(REFLECT_TAG), "null"),
        ]);
        let gateways = Gateways::shared(Gateway::scripted(Script::new(rules)));
        let diagram = StateDiagram::starter();
        let topic = Topic::default();
        let components = phase_transition_components();
        let settings = SimSettings::default();
        let ctx = ChatContext {
            diagram: &diagram,
            diagram_version: 1,
            topic: &topic,
            components: &components,
            gateways: &gateways,
            settings: &settings,
        };
        let profile = StudentProfile::new("p", "P", initial.clone(), TraitRatings::uniform(3).unwrap(), Pipeline::Baseline);
        let mut session = ReviewSession::automated("s", "p", &diagram, 1);
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        rt.block_on(async {
            generate_batch(&mut session, &profile, &ctx, None).await.unwrap();
            generate_batch(&mut session, &profile, &ctx, None).await.unwrap();
        });
        let mut prev = initial;
        for m in session.conversation.messages().iter().filter(|m| m.knowledge_snapshot.is_some()) {
            let snap = m.knowledge_snapshot.clone().unwrap();
            prop_assert!(snap.covers(&prev));
            prev = snap;
        }
    }
}
