//! The three ways a teacher reviews an agent: automated conversations with a
//! simulated student, direct chat where the teacher plays the student, and
//! single-turn test cases.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc::UnboundedSender;
use tokio::sync::{Mutex, OwnedMutexGuard};

use crate::engine::EngineState;
use crate::error::{Error, Result};
use crate::gateway::Gateways;
use crate::model::{
    Conversation, KnowledgeComponent, KnowledgeState, Message, NodeId, Role, StateDiagram,
    StudentProfile, Topic, SCHEMA_VERSION,
};
use crate::student::{SimSettings, StudentSimulator};

/// Turns per automated batch; each turn is one agent and one student message.
pub const BATCH_TURNS: usize = 3;
pub const BATCH_MESSAGES: usize = BATCH_TURNS * 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewMode {
    Automated,
    Direct,
    Testcases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    pub schema: u32,
    pub id: String,
    pub mode: ReviewMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_id: Option<String>,
    pub conversation: Conversation,
    pub engine: EngineState,
}

impl ReviewSession {
    pub fn automated(id: impl Into<String>, profile_id: impl Into<String>, diagram: &StateDiagram, diagram_version: u64) -> Self {
        let id = id.into();
        Self {
            schema: SCHEMA_VERSION,
            conversation: Conversation::new(id.clone(), diagram_version),
            id,
            mode: ReviewMode::Automated,
            profile_id: Some(profile_id.into()),
            engine: EngineState::new(diagram),
        }
    }

    /// Direct-chat session, opened with the root's start message.
    pub fn direct(id: impl Into<String>, diagram: &StateDiagram, diagram_version: u64) -> Result<Self> {
        let id = id.into();
        let mut session = Self {
            schema: SCHEMA_VERSION,
            conversation: Conversation::new(id.clone(), diagram_version),
            id,
            mode: ReviewMode::Direct,
            profile_id: None,
            engine: EngineState::new(diagram),
        };
        session.open(diagram)?;
        Ok(session)
    }

    fn open(&mut self, diagram: &StateDiagram) -> Result<()> {
        let root = diagram
            .root()
            .ok_or_else(|| Error::NotFound(format!("root node {}", diagram.root_id)))?;
        self.conversation
            .push(Message::pca(root.start_message.clone(), root.id.clone()))
    }

    /// Checks the bound mode/profile invariants.
    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.profile_id) {
            (ReviewMode::Automated, None) => Err(Error::validation("automated sessions need a profile")),
            (ReviewMode::Direct | ReviewMode::Testcases, Some(_)) => {
                Err(Error::validation("only automated sessions bind a profile"))
            }
            _ => Ok(()),
        }
    }

    /// Marks the conversation stale if the diagram moved on, and errors if so.
    pub fn ensure_fresh(&mut self, diagram_version: u64) -> Result<()> {
        if self.conversation.refresh_staleness(diagram_version) {
            return Err(Error::StaleConversation {
                conversation: self.conversation.diagram_version,
                current: diagram_version,
            });
        }
        Ok(())
    }

    /// Throws away the conversation and starts over against the current
    /// diagram.
    pub fn regenerate(&mut self, diagram: &StateDiagram, diagram_version: u64) -> Result<()> {
        self.conversation = Conversation::new(self.id.clone(), diagram_version);
        self.engine = EngineState::new(diagram);
        if self.mode == ReviewMode::Direct {
            self.open(diagram)?;
        }
        Ok(())
    }

    /// Truncates everything after agent message `to_index` and restores the
    /// routing state that produced it.
    pub fn rollback(&mut self, to_index: usize) -> Result<()> {
        if self.mode != ReviewMode::Direct {
            return Err(Error::validation("rollback is only available in direct chat"));
        }
        self.engine.rewind(&self.conversation, to_index)?;
        self.conversation.truncate(to_index + 1);
        Ok(())
    }
}

/// Everything a conversation step needs besides the session itself.
#[derive(Clone, Copy)]
pub struct ChatContext<'a> {
    pub diagram: &'a StateDiagram,
    pub diagram_version: u64,
    pub topic: &'a Topic,
    pub components: &'a [KnowledgeComponent],
    pub gateways: &'a Gateways,
    pub settings: &'a SimSettings,
}

impl<'a> ChatContext<'a> {
    fn simulator(&self) -> StudentSimulator<'a> {
        StudentSimulator::new(self.topic, self.components, &self.gateways.student, self.settings)
    }
}

/// Progress of a running batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum BatchEvent {
    Message { index: usize, message: Message },
    Completed { length: usize },
    RolledBack { length: usize, error: String, code: String },
}

fn emit(progress: Option<&UnboundedSender<BatchEvent>>, event: BatchEvent) {
    if let Some(tx) = progress {
        let _ = tx.send(event);
    }
}

async fn run_batch(
    session: &mut ReviewSession,
    profile: &StudentProfile,
    ctx: &ChatContext<'_>,
    progress: Option<&UnboundedSender<BatchEvent>>,
) -> Result<()> {
    let sim = ctx.simulator();
    for _ in 0..BATCH_TURNS {
        let agent = session
            .engine
            .respond(
                ctx.diagram,
                &session.conversation,
                ctx.components,
                ctx.topic,
                &ctx.gateways.pca,
                ctx.settings.pca_temperature,
            )
            .await?;
        session.conversation.push(agent.clone())?;
        emit(progress, BatchEvent::Message { index: session.conversation.len() - 1, message: agent });

        let (reply, _) = sim.turn(profile, &session.conversation).await?;
        session.conversation.push(reply.clone())?;
        emit(progress, BatchEvent::Message { index: session.conversation.len() - 1, message: reply });

        session
            .engine
            .transition(ctx.diagram, &session.conversation, &ctx.gateways.pca)
            .await?;
    }
    Ok(())
}

/// Appends three turns (six messages) of agent/simulated-student
/// conversation. A failure part-way through restores the session to its
/// state before the call.
pub async fn generate_batch(
    session: &mut ReviewSession,
    profile: &StudentProfile,
    ctx: &ChatContext<'_>,
    progress: Option<&UnboundedSender<BatchEvent>>,
) -> Result<Vec<Message>> {
    if session.mode != ReviewMode::Automated {
        return Err(Error::validation("batches run only in automated sessions"));
    }
    if session.profile_id.as_deref() != Some(profile.id.as_str()) {
        return Err(Error::validation(format!(
            "session {} is bound to a different profile",
            session.id
        )));
    }
    session.ensure_fresh(ctx.diagram_version)?;
    profile.ready_for_simulation(ctx.components)?;
    if session.conversation.next_role() != Role::Pca {
        return Err(Error::validation("conversation does not end on a completed turn"));
    }

    let start = session.conversation.len();
    let saved_engine = session.engine.clone();
    match run_batch(session, profile, ctx, progress).await {
        Ok(()) => {
            emit(progress, BatchEvent::Completed { length: session.conversation.len() });
            Ok(session.conversation.messages()[start..].to_vec())
        }
        Err(e) => {
            session.conversation.truncate(start);
            session.engine = saved_engine;
            emit(
                progress,
                BatchEvent::RolledBack {
                    length: start,
                    error: e.to_string(),
                    code: e.code().to_string(),
                },
            );
            Err(e)
        }
    }
}

/// Teacher message in direct chat: routes on it and returns the agent's
/// reply. Both messages are appended, or neither on failure.
pub async fn direct_message(session: &mut ReviewSession, user_text: &str, ctx: &ChatContext<'_>) -> Result<Message> {
    if session.mode != ReviewMode::Direct {
        return Err(Error::validation("direct messages need a direct session"));
    }
    let text = user_text.trim();
    if text.is_empty() {
        return Err(Error::validation("message text is empty"));
    }
    session.ensure_fresh(ctx.diagram_version)?;
    if session.conversation.next_role() != Role::Student {
        return Err(Error::validation("waiting for the agent to speak"));
    }
    let start = session.conversation.len();
    let saved_engine = session.engine.clone();
    let snapshot = session
        .conversation
        .latest_snapshot()
        .cloned()
        .unwrap_or_else(|| KnowledgeState::empty(ctx.components.len()));

    let result = async {
        session.conversation.push(Message::student(text, snapshot))?;
        session
            .engine
            .transition(ctx.diagram, &session.conversation, &ctx.gateways.pca)
            .await?;
        let reply = session
            .engine
            .respond(
                ctx.diagram,
                &session.conversation,
                ctx.components,
                ctx.topic,
                &ctx.gateways.pca,
                ctx.settings.pca_temperature,
            )
            .await?;
        session.conversation.push(reply.clone())?;
        Ok(reply)
    }
    .await;
    if result.is_err() {
        session.conversation.truncate(start);
        session.engine = saved_engine;
    }
    result
}

/// Named list of single-turn student utterances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCaseSet {
    pub id: String,
    pub name: String,
    pub cases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCaseResult {
    pub utterance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<CaseError>,
}

async fn run_case(utterance: &str, start_node: &NodeId, ctx: &ChatContext<'_>) -> Result<Message> {
    let root = ctx
        .diagram
        .root()
        .ok_or_else(|| Error::NotFound(format!("root node {}", ctx.diagram.root_id)))?;
    let mut conversation = Conversation::new("testcase", ctx.diagram_version);
    conversation.push(Message::pca(root.start_message.clone(), start_node.clone()))?;
    conversation.push(Message::student(utterance, KnowledgeState::empty(ctx.components.len())))?;
    let mut engine = EngineState::at(start_node.clone());
    engine
        .transition(ctx.diagram, &conversation, &ctx.gateways.pca)
        .await?;
    engine
        .respond(
            ctx.diagram,
            &conversation,
            ctx.components,
            ctx.topic,
            &ctx.gateways.pca,
            ctx.settings.pca_temperature,
        )
        .await
}

/// Runs each utterance as the first student message of a fresh
/// conversation. Failures are recorded per case.
///
/// `start_node` positions the engine somewhere other than the root
/// (experimental).
pub async fn run_test_cases(
    cases: &[String],
    ctx: &ChatContext<'_>,
    start_node: Option<&NodeId>,
) -> Result<Vec<TestCaseResult>> {
    if cases.is_empty() {
        return Err(Error::validation("no test cases given"));
    }
    let start = start_node.unwrap_or(&ctx.diagram.root_id).clone();
    if ctx.diagram.node(&start).is_none() {
        return Err(Error::NotFound(format!("node {start}")));
    }
    let mut results = Vec::with_capacity(cases.len());
    for utterance in cases {
        let result = match run_case(utterance, &start, ctx).await {
            Ok(reply) => TestCaseResult {
                utterance: utterance.clone(),
                reply: Some(reply.text),
                node_id: reply.active_node_id,
                error: None,
            },
            Err(e) => TestCaseResult {
                utterance: utterance.clone(),
                reply: None,
                node_id: None,
                error: Some(CaseError {
                    code: e.code().to_string(),
                    message: e.to_string(),
                }),
            },
        };
        results.push(result);
    }
    Ok(results)
}

/// Stored knowledge snapshot of the student message at `index`.
pub fn knowledge_at(conversation: &Conversation, index: usize) -> Result<KnowledgeState> {
    conversation
        .messages()
        .get(index)
        .filter(|m| m.role == Role::Student)
        .and_then(|m| m.knowledge_snapshot.clone())
        .ok_or(Error::IndexNotStudentMessage(index))
}

/// A session shared between request handlers. Only one operation may hold
/// it at a time; a second concurrent caller gets [`Error::SessionBusy`].
#[derive(Clone, Debug)]
pub struct SharedSession(Arc<Mutex<ReviewSession>>);

impl SharedSession {
    pub fn new(session: ReviewSession) -> Self {
        Self(Arc::new(Mutex::new(session)))
    }

    pub fn try_begin(&self) -> Result<OwnedMutexGuard<ReviewSession>> {
        self.0.clone().try_lock_owned().map_err(|_| Error::SessionBusy)
    }

    /// Copy of the session, waiting for any running operation to finish.
    pub async fn snapshot(&self) -> ReviewSession {
        self.0.lock().await.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{MASTER_TAG, PCA_TAG};
    use crate::gateway::{Gateway, Matcher, Script, ScriptRule};
    use crate::model::{phase_transition_components, Node, Pipeline, TraitRatings};
    use crate::student::{REFLECT_TAG, RESPOND_TAG};

    fn script() -> Script {
        Script::new(vec![
            ScriptRule::reply(Matcher::tag(MASTER_TAG), "1"),
            ScriptRule::reply(Matcher::tag(PCA_TAG), "Good. Tell me more."),
            ScriptRule::reply(Matcher::tag(REFLECT_TAG), "1"),
            ScriptRule::reply(Matcher::tag(RESPOND_TAG), "Liquids flow, I think."),
        ])
    }

    fn profile() -> StudentProfile {
        StudentProfile::new(
            "p1",
            "Alex",
            KnowledgeState::empty(6),
            TraitRatings::uniform(3).unwrap(),
            Pipeline::Baseline,
        )
    }

    struct Fixture {
        diagram: StateDiagram,
        topic: Topic,
        components: Vec<KnowledgeComponent>,
        gateways: Gateways,
        settings: SimSettings,
    }

    impl Fixture {
        fn new(script: Script) -> Self {
            Self {
                diagram: StateDiagram::starter(),
                topic: Topic::default(),
                components: phase_transition_components(),
                gateways: Gateways::shared(Gateway::scripted(script)),
                settings: SimSettings::default(),
            }
        }

        fn ctx(&self, version: u64) -> ChatContext<'_> {
            ChatContext {
                diagram: &self.diagram,
                diagram_version: version,
                topic: &self.topic,
                components: &self.components,
                gateways: &self.gateways,
                settings: &self.settings,
            }
        }
    }

    #[tokio::test]
    async fn batch_appends_six_alternating_messages() {
        let f = Fixture::new(script());
        let mut s = ReviewSession::automated("s", "p1", &f.diagram, 1);
        let (tx, mut rx) = tokio::sync::mpsc::unbounded_channel();
        let msgs = generate_batch(&mut s, &profile(), &f.ctx(1), Some(&tx)).await.unwrap();
        assert_eq!(msgs.len(), 6);
        assert_eq!(s.conversation.messages()[0].text, f.diagram.root().unwrap().start_message);
        let roles: Vec<Role> = s.conversation.messages().iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::Pca, Role::Student].repeat(3));
        let mut indices = Vec::new();
        while let Ok(ev) = rx.try_recv() {
            match ev {
                BatchEvent::Message { index, .. } => indices.push(index),
                BatchEvent::Completed { length } => assert_eq!(length, 6),
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(indices, (0..6).collect::<Vec<_>>());
        generate_batch(&mut s, &profile(), &f.ctx(1), None).await.unwrap();
        assert_eq!(s.conversation.len(), 12);
        assert_eq!(s.engine.transition_log.len(), 6);
    }

    #[tokio::test]
    async fn stale_session_refuses_then_regenerates() {
        let f = Fixture::new(script());
        let mut s = ReviewSession::automated("s", "p1", &f.diagram, 1);
        generate_batch(&mut s, &profile(), &f.ctx(1), None).await.unwrap();
        let err = generate_batch(&mut s, &profile(), &f.ctx(2), None).await.unwrap_err();
        assert_eq!(err.code(), "stale_conversation");
        assert!(s.conversation.stale);
        s.regenerate(&f.diagram, 2).unwrap();
        generate_batch(&mut s, &profile(), &f.ctx(2), None).await.unwrap();
        assert_eq!(s.conversation.len(), 6);
        assert!(!s.conversation.stale);
    }

    #[tokio::test]
    async fn mid_batch_failure_rolls_back() {
        let mut rules = vec![ScriptRule::reply(Matcher::tag(RESPOND_TAG), "ok").once()];
        rules.push(ScriptRule::reply(Matcher::tag(RESPOND_TAG), "ok again").once());
        rules.push(ScriptRule::fail(Matcher::tag(RESPOND_TAG), "quota"));
        rules.extend(script().rules);
        let f = Fixture::new(Script::new(rules));
        let mut s = ReviewSession::automated("s", "p1", &f.diagram, 1);
        let before = s.clone();
        let err = generate_batch(&mut s, &profile(), &f.ctx(1), None).await.unwrap_err();
        assert_eq!(err.code(), "provider_error");
        assert_eq!(s, before);
    }

    #[tokio::test]
    async fn wrong_mode_or_profile_rejected() {
        let f = Fixture::new(script());
        let mut direct = ReviewSession::direct("d", &f.diagram, 1).unwrap();
        assert!(generate_batch(&mut direct, &profile(), &f.ctx(1), None).await.is_err());
        let mut other = ReviewSession::automated("s", "someone-else", &f.diagram, 1);
        assert!(generate_batch(&mut other, &profile(), &f.ctx(1), None).await.is_err());
    }

    #[tokio::test]
    async fn direct_chat_and_rollback() {
        let f = Fixture::new(script());
        let mut s = ReviewSession::direct("d", &f.diagram, 1).unwrap();
        assert_eq!(s.conversation.len(), 1);
        let reply = direct_message(&mut s, "Hi, I didn't get what phase transition is", &f.ctx(1))
            .await
            .unwrap();
        assert_eq!(reply.active_node_id.unwrap().as_str(), "explains-well");
        direct_message(&mut s, "Water boils?", &f.ctx(1)).await.unwrap();
        assert_eq!(s.conversation.len(), 5);
        s.rollback(2).unwrap();
        assert_eq!(s.conversation.len(), 3);
        assert_eq!(s.engine.active_node_id.as_str(), "explains-well");
        direct_message(&mut s, "Ice melts.", &f.ctx(1)).await.unwrap();
        assert_eq!(s.conversation.len(), 5);
        assert!(direct_message(&mut s, "   ", &f.ctx(1)).await.is_err());
        assert!(s.rollback(1).is_err());
    }

    #[tokio::test]
    async fn test_cases_are_independent() {
        let rules = vec![
            ScriptRule::fail(Matcher::tag(PCA_TAG).and_contains("too difficult"), "boom"),
            ScriptRule::reply(Matcher::tag(PCA_TAG).and_contains("examples"), "Ice melting is one."),
        ];
        let mut all = rules;
        all.extend(script().rules);
        let f = Fixture::new(Script::new(all));
        let cases: Vec<String> = [
            "I don't want to study this",
            "This is too difficult for me",
            "Could you give examples",
        ]
        .map(String::from)
        .to_vec();
        let results = run_test_cases(&cases, &f.ctx(1), None).await.unwrap();
        assert_eq!(results.len(), 3);
        assert!(results[0].error.is_none());
        assert_eq!(results[1].error.as_ref().unwrap().code, "provider_error");
        assert_eq!(results[2].reply.as_deref(), Some("Ice melting is one."));
        assert!(run_test_cases(&[], &f.ctx(1), None).await.is_err());
    }

    #[tokio::test]
    async fn test_cases_can_start_elsewhere() {
        let mut f = Fixture::new(script());
        f.diagram.nodes.push(Node::behavior("extra", "Student asks for more.", "Give more."));
        let cases = vec!["More please".to_string()];
        let results = run_test_cases(&cases, &f.ctx(1), Some(&"understood".into())).await.unwrap();
        assert_eq!(results[0].node_id.as_ref().unwrap().as_str(), "understood");
        assert!(run_test_cases(&cases, &f.ctx(1), Some(&"missing".into())).await.is_err());
    }

    #[tokio::test]
    async fn knowledge_lookup() {
        let f = Fixture::new(script());
        let mut s = ReviewSession::automated("s", "p1", &f.diagram, 1);
        generate_batch(&mut s, &profile(), &f.ctx(1), None).await.unwrap();
        assert_eq!(knowledge_at(&s.conversation, 1).unwrap().acquired_indices(), vec![1]);
        assert!(matches!(knowledge_at(&s.conversation, 0), Err(Error::IndexNotStudentMessage(0))));
        assert!(knowledge_at(&s.conversation, 99).is_err());
    }

    #[tokio::test]
    async fn shared_session_rejects_overlap() {
        let f = Fixture::new(script());
        let shared = SharedSession::new(ReviewSession::automated("s", "p1", &f.diagram, 1));
        let guard = shared.try_begin().unwrap();
        assert!(matches!(shared.try_begin(), Err(Error::SessionBusy)));
        drop(guard);
        assert!(shared.try_begin().is_ok());
    }
}
