use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, Gateways};
use crate::model::{
    Conversation, KnowledgeComponent, Message, Pipeline, Role, StudentProfile, Topic, Trait,
};
use crate::prompts;
use crate::student::{SimSettings, StudentSimulator};

pub const TUTOR_TAG: &str = "tutor";
pub const DEFAULT_LESSON_MESSAGES: usize = 12;

/// Fixed interviewer lines or a generated lesson.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DialogueScript {
    Interview {
        quizzes: Vec<String>,
        trait_questions: Vec<String>,
    },
    Lesson {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tutor_system_prompt: Option<String>,
        #[serde(default = "default_lesson_messages")]
        message_count: usize,
    },
}

fn default_lesson_messages() -> usize {
    DEFAULT_LESSON_MESSAGES
}

const PHASE_QUIZZES: [&str; 6] = [
    "How are particles arranged in a solid, and does a solid keep its shape and volume?",
    "What happens to the shape and volume of a liquid when you pour it into a different container?",
    "Does a gas have a fixed shape or volume? What does it do in a space?",
    "What do we call it when a substance changes from one state to another, and what can cause it?",
    "When ice melts into water, do the properties of the substance change? Why?",
    "If you melt 10 g of ice, what is the mass of the water? Why?",
];

/// Trait questions drawn from the inventory: all of goal commitment and
/// motivation, the first two of self-efficacy and stress.
fn default_trait_questions() -> Vec<String> {
    let picks = [
        (Trait::GoalCommitment, 3),
        (Trait::Motivation, 3),
        (Trait::SelfEfficacy, 2),
        (Trait::Stress, 2),
    ];
    picks
        .iter()
        .flat_map(|(t, n)| {
            t.statements()[..*n]
                .iter()
                .map(|s| format!("Do you agree with this statement: \"{s}\" Why or why not?"))
        })
        .collect()
}

impl DialogueScript {
    /// Interview with six phase-transition quizzes and ten trait questions.
    pub fn default_interview() -> Self {
        DialogueScript::Interview {
            quizzes: PHASE_QUIZZES.iter().map(|q| q.to_string()).collect(),
            trait_questions: default_trait_questions(),
        }
    }

    pub fn default_lesson() -> Self {
        DialogueScript::Lesson {
            tutor_system_prompt: None,
            message_count: DEFAULT_LESSON_MESSAGES,
        }
    }

    pub fn validate(&self, components: &[KnowledgeComponent]) -> Result<()> {
        match self {
            DialogueScript::Interview { quizzes, trait_questions } => {
                if quizzes.len() != components.len() {
                    return Err(Error::validation(format!(
                        "interview has {} quizzes for {} knowledge components",
                        quizzes.len(),
                        components.len()
                    )));
                }
                if quizzes.iter().chain(trait_questions).any(|l| l.trim().is_empty()) {
                    return Err(Error::validation("interview lines must not be empty"));
                }
            }
            DialogueScript::Lesson { message_count, .. } => {
                if *message_count == 0 {
                    return Err(Error::validation("lesson needs at least one tutor message"));
                }
            }
        }
        Ok(())
    }

    /// Interviewer lines in order, quizzes first.
    pub fn interview_lines(&self) -> Option<Vec<&str>> {
        match self {
            DialogueScript::Interview { quizzes, trait_questions } => {
                Some(quizzes.iter().chain(trait_questions).map(String::as_str).collect())
            }
            DialogueScript::Lesson { .. } => None,
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DialogueKind {
    Interview,
    Lesson,
}

/// Why a dialogue stopped early.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub code: String,
    pub message: String,
}

/// Dialogue between an interviewer or tutor and one simulated student.
/// On a gateway failure the messages so far are kept and `aborted` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub profile_id: String,
    pub pipeline: Pipeline,
    pub kind: DialogueKind,
    pub conversation: Conversation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<Abort>,
}

impl Transcript {
    fn new(profile: &StudentProfile, kind: DialogueKind) -> Self {
        Self {
            profile_id: profile.id.clone(),
            pipeline: profile.pipeline,
            kind,
            conversation: Conversation::new(format!("{}-{}", profile.id, profile.pipeline.as_str()), 0),
            aborted: None,
        }
    }

    fn abort(&mut self, e: Error) {
        self.aborted = Some(Abort {
            code: e.code().to_string(),
            message: e.to_string(),
        });
    }

    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }

    /// Plain-text rendering with `Interviewer:`/`Tutor:` and `Student:` labels.
    pub fn render(&self) -> String {
        let other = match self.kind {
            DialogueKind::Interview => "Interviewer",
            DialogueKind::Lesson => "Tutor",
        };
        let mut out = String::new();
        for m in self.conversation.messages() {
            let who = if m.role == Role::Student { "Student" } else { other };
            out.push_str(&format!("{who}: {}\n", m.text));
        }
        out
    }
}

/// Asks the fixed interviewer lines in order. The student's knowledge stays
/// at its initial state throughout; only Respond runs.
pub async fn run_interview(
    profile: &StudentProfile,
    script: &DialogueScript,
    topic: &Topic,
    components: &[KnowledgeComponent],
    gateway: &Gateway,
    settings: &SimSettings,
) -> Result<Transcript> {
    let lines = script
        .interview_lines()
        .ok_or_else(|| Error::validation("run_interview needs an interview script"))?;
    script.validate(components)?;
    profile.ready_for_simulation(components)?;
    let sim = StudentSimulator::new(topic, components, gateway, settings);
    let mut transcript = Transcript::new(profile, DialogueKind::Interview);
    for line in lines {
        transcript.conversation.push(Message::teacher(line))?;
        match sim
            .respond(profile, &profile.initial_knowledge, &transcript.conversation)
            .await
        {
            Ok(reply) => transcript.conversation.push(reply)?,
            Err(e) => {
                transcript.abort(e);
                break;
            }
        }
    }
    Ok(transcript)
}

async fn tutor_message(system: &str, conversation: &Conversation, gateway: &Gateway, temperature: f32) -> Result<Message> {
    let history = conversation.messages().iter().map(|m| match m.role {
        Role::Student => ChatMessage::user(m.text.clone()),
        Role::Pca => ChatMessage::assistant(m.text.clone()),
    });
    let request = ChatRequest::new(TUTOR_TAG, temperature)
        .with_system(system)
        .with_messages(history);
    let text = gateway.complete(&request).await?;
    Ok(Message::teacher(text.trim()))
}

/// Lesson where a model tutor teaches and the student runs the full
/// Reflect-Respond turn.
pub async fn run_lesson(
    profile: &StudentProfile,
    script: &DialogueScript,
    topic: &Topic,
    components: &[KnowledgeComponent],
    gateways: &Gateways,
    settings: &SimSettings,
) -> Result<Transcript> {
    let DialogueScript::Lesson { tutor_system_prompt, message_count } = script else {
        return Err(Error::validation("run_lesson needs a lesson script"));
    };
    script.validate(components)?;
    profile.ready_for_simulation(components)?;
    let system = tutor_system_prompt
        .clone()
        .unwrap_or_else(|| prompts::tutor_system_prompt(topic, components));
    let sim = StudentSimulator::new(topic, components, &gateways.student, settings);
    let mut transcript = Transcript::new(profile, DialogueKind::Lesson);
    for _ in 0..*message_count {
        let step = async {
            let tutor = tutor_message(&system, &transcript.conversation, &gateways.pca, settings.pca_temperature).await?;
            transcript.conversation.push(tutor)?;
            let (reply, _) = sim.turn(profile, &transcript.conversation).await?;
            transcript.conversation.push(reply)?;
            Ok::<_, Error>(())
        }
        .await;
        if let Err(e) = step {
            transcript.abort(e);
            break;
        }
    }
    Ok(transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Matcher, Script, ScriptRule};
    use crate::model::{phase_transition_components, KnowledgeState, TraitRatings};
    use crate::student::{REFLECT_TAG, RESPOND_TAG};

    #[test]
    fn default_interview_has_sixteen_lines() {
        let s = DialogueScript::default_interview();
        assert_eq!(s.interview_lines().unwrap().len(), 16);
        assert!(s.validate(&phase_transition_components()).is_ok());
        assert!(s.validate(&phase_transition_components()[..5]).is_err());
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"kind\":\"interview\""));
        assert_eq!(serde_json::from_str::<DialogueScript>(&json).unwrap(), s);
    }

    #[test]
    fn lesson_defaults() {
        let s: DialogueScript = serde_json::from_str(r#"{"kind":"lesson"}"#).unwrap();
        assert_eq!(s, DialogueScript::default_lesson());
        let zero = DialogueScript::Lesson { tutor_system_prompt: None, message_count: 0 };
        assert!(zero.validate(&[]).is_err());
    }

    #[tokio::test]
    async fn interview_failure_keeps_partial_transcript() {
        let gw = Gateway::scripted(Script::new(vec![
            ScriptRule::reply(Matcher::tag(RESPOND_TAG), "I don't know.").once(),
            ScriptRule::fail(Matcher::tag(RESPOND_TAG), "down"),
        ]));
        let p = StudentProfile::new("s", "", KnowledgeState::empty(6), TraitRatings::uniform(3).unwrap(), Pipeline::Baseline);
        let t = run_interview(
            &p,
            &DialogueScript::default_interview(),
            &Topic::default(),
            &phase_transition_components(),
            &gw,
            &SimSettings::default(),
        )
        .await
        .unwrap();
        assert_eq!(t.conversation.len(), 3);
        assert_eq!(t.aborted.as_ref().unwrap().code, "provider_error");
        assert!(t.render().starts_with("Interviewer: "));
    }

    #[tokio::test]
    async fn lesson_rejects_interview_script() {
        let gws = Gateways::shared(Gateway::scripted(Script::new(vec![ScriptRule::reply(Matcher::tag(REFLECT_TAG), "null")])));
        let p = StudentProfile::new("s", "", KnowledgeState::empty(6), TraitRatings::uniform(3).unwrap(), Pipeline::Baseline);
        let err = run_lesson(
            &p,
            &DialogueScript::default_interview(),
            &Topic::default(),
            &phase_transition_components(),
            &gws,
            &SimSettings::default(),
        )
        .await
        .unwrap_err();
        assert_eq!(err.code(), "validation_failed");
    }
}
