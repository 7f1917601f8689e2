//! Simulated students.
//!
//! A student turn runs two model calls: *reflect* decides which components
//! the latest exchange taught, then *respond* writes the reply from the
//! updated knowledge state plus the profile's behavior description. The
//! behavior description is produced once per profile by *interpret*.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::model::{
    Conversation, KnowledgeComponent, KnowledgeState, Message, Pipeline, Role, StudentProfile,
    Topic, Trait, TraitOverview, TraitRatings,
};
use crate::prompts;

pub const INTERPRET_TAG: &str = "interpret";
pub const REFLECT_TAG: &str = "reflect";
pub const RESPOND_TAG: &str = "respond";

/// Messages of context shown to the reflect call: the student's previous
/// message and the agent message being reflected on.
pub const REFLECT_WINDOW: usize = 2;

/// Knobs that shape the simulated conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSettings {
    pub respond_temperature: f32,
    pub pca_temperature: f32,
    pub anti_repetition: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            respond_temperature: 1.0,
            pca_temperature: 0.0,
            anti_repetition: true,
        }
    }
}

/// Parsed last line of a reflect completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReflectParse {
    /// The model reported that nothing was learned.
    Null,
    /// Indices found on the line; `rejected` holds tokens that were not
    /// valid component indices.
    Indices { valid: Vec<usize>, rejected: Vec<String> },
    /// Nothing on the line could be read.
    Unparseable,
}

fn strip_decoration(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '`' | '.' | '"' | '\'' | '[' | ']'))
}

/// Reads the last non-empty line of a reflect completion.
pub fn parse_reflect_reply(reply: &str, component_count: usize) -> ReflectParse {
    let Some(line) = reply.lines().map(str::trim).rev().find(|l| !l.is_empty()) else {
        return ReflectParse::Unparseable;
    };
    let line = strip_decoration(line);
    if line.eq_ignore_ascii_case("null") {
        return ReflectParse::Null;
    }
    let mut valid = Vec::new();
    let mut rejected = Vec::new();
    let mut any_number = false;
    for token in line.split(',').map(strip_decoration).filter(|t| !t.is_empty()) {
        match token.parse::<usize>() {
            Ok(i) if i < component_count => {
                any_number = true;
                if !valid.contains(&i) {
                    valid.push(i);
                }
            }
            Ok(_) => {
                any_number = true;
                rejected.push(token.to_string());
            }
            Err(_) => rejected.push(token.to_string()),
        }
    }
    if any_number {
        ReflectParse::Indices { valid, rejected }
    } else {
        ReflectParse::Unparseable
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectOutcome {
    pub state: KnowledgeState,
    /// Components that flipped to acquired on this call.
    pub newly_acquired: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Sections of an overview that never mention one of the four traits.
pub fn missing_trait_sections(overview: &str) -> Vec<Trait> {
    let lower = overview.to_lowercase();
    Trait::ALL
        .into_iter()
        .filter(|t| {
            let keys: &[&str] = match t {
                Trait::GoalCommitment => &["goal"],
                Trait::Motivation => &["motivat"],
                Trait::SelfEfficacy => &["self-efficacy", "self efficacy"],
                Trait::Stress => &["stress"],
            };
            !keys.iter().any(|k| lower.contains(k))
        })
        .collect()
}

/// Knowledge the student holds at the end of `conversation`: the latest
/// snapshot, or the profile's initial state before the first student turn.
pub fn current_knowledge(profile: &StudentProfile, conversation: &Conversation) -> KnowledgeState {
    conversation
        .latest_snapshot()
        .cloned()
        .unwrap_or_else(|| profile.initial_knowledge.clone())
}

/// Simulated-student pipeline bound to one curriculum and gateway.
#[derive(Clone, Copy)]
pub struct StudentSimulator<'a> {
    pub topic: &'a Topic,
    pub components: &'a [KnowledgeComponent],
    pub gateway: &'a Gateway,
    pub settings: &'a SimSettings,
}

impl<'a> StudentSimulator<'a> {
    pub fn new(
        topic: &'a Topic,
        components: &'a [KnowledgeComponent],
        gateway: &'a Gateway,
        settings: &'a SimSettings,
    ) -> Self {
        Self {
            topic,
            components,
            gateway,
            settings,
        }
    }

    /// Generates a trait overview from ratings at temperature 0.
    pub async fn interpret(&self, ratings: &TraitRatings) -> Result<TraitOverview> {
        let prompt = prompts::interpret_prompt(self.topic, ratings);
        let request = ChatRequest::new(INTERPRET_TAG, 0.0).with_user(prompt);
        let text = self.gateway.complete(&request).await?.trim().to_string();
        if text.is_empty() {
            return Err(GatewayError::EmptyCompletion.into());
        }
        let missing = missing_trait_sections(&text);
        if !missing.is_empty() {
            tracing::warn!(?missing, "trait overview does not mention every trait");
        }
        Ok(TraitOverview {
            text,
            generated_from: *ratings,
            edited: false,
        })
    }

    /// Attaches an overview to the profile unless a current one exists.
    /// Returns whether the model was called.
    pub async fn ensure_overview(&self, profile: &mut StudentProfile, regenerate: bool) -> Result<bool> {
        let current = profile
            .trait_overview
            .as_ref()
            .is_some_and(|o| !o.is_outdated(&profile.ratings) && !o.text.trim().is_empty());
        if current && !regenerate {
            return Ok(false);
        }
        profile.trait_overview = Some(self.interpret(&profile.ratings).await?);
        Ok(true)
    }

    /// Updates the knowledge state from the latest exchange at temperature 0.
    /// Acquired components never revert; bad indices are ignored with a warning.
    pub async fn reflect(&self, state: &KnowledgeState, tail: &[Message]) -> Result<ReflectOutcome> {
        if state.len() != self.components.len() {
            return Err(Error::LengthMismatch {
                expected: self.components.len(),
                actual: state.len(),
            });
        }
        if !matches!(tail.last(), Some(m) if m.role == Role::Pca) {
            return Err(Error::validation("reflect needs a tail ending with an agent message"));
        }
        let mut outcome = ReflectOutcome {
            state: state.clone(),
            newly_acquired: Vec::new(),
            warnings: Vec::new(),
        };
        if state.missing_indices().is_empty() {
            return Ok(outcome);
        }
        let prompt = prompts::reflect_prompt(tail, self.components, state);
        let request = ChatRequest::new(REFLECT_TAG, 0.0).with_user(prompt);
        let reply = self.gateway.complete(&request).await?;
        match parse_reflect_reply(&reply, self.components.len()) {
            ReflectParse::Null => {}
            ReflectParse::Unparseable => {
                outcome
                    .warnings
                    .push(format!("could not parse reflect reply: {:?}", reply.lines().last()));
            }
            ReflectParse::Indices { valid, rejected } => {
                for i in valid {
                    if !outcome.state.is_acquired(i) {
                        outcome.state.acquire(i)?;
                        outcome.newly_acquired.push(i);
                    }
                }
                if !rejected.is_empty() {
                    outcome
                        .warnings
                        .push(format!("ignored invalid component indices: {}", rejected.join(", ")));
                }
            }
        }
        for w in &outcome.warnings {
            tracing::warn!("{w}");
        }
        Ok(outcome)
    }

    /// Full system prompt for the student's reply.
    pub fn respond_prompt(&self, profile: &StudentProfile, state: &KnowledgeState) -> String {
        prompts::respond_system_prompt(
            self.topic,
            profile,
            state,
            self.components,
            self.settings.anti_repetition,
        )
    }

    /// Writes the student's reply given a knowledge state.
    pub async fn respond(
        &self,
        profile: &StudentProfile,
        state: &KnowledgeState,
        conversation: &Conversation,
    ) -> Result<Message> {
        if profile.pipeline == Pipeline::Ours && profile.overview_text().trim().is_empty() {
            return Err(Error::validation(format!(
                "profile {} has no trait overview",
                profile.id
            )));
        }
        let system = self.respond_prompt(profile, state);
        let history = conversation.messages().iter().map(|m| match m.role {
            Role::Pca => ChatMessage::user(m.text.clone()),
            Role::Student => ChatMessage::assistant(m.text.clone()),
        });
        let request = ChatRequest::new(RESPOND_TAG, self.settings.respond_temperature)
            .with_system(system)
            .with_messages(history);
        let text = self.gateway.complete(&request).await?;
        Ok(Message::student(text.trim().to_string(), state.clone()))
    }

    /// Reflect, then respond with the updated state.
    pub async fn turn(
        &self,
        profile: &StudentProfile,
        conversation: &Conversation,
    ) -> Result<(Message, KnowledgeState)> {
        if conversation.next_role() != Role::Student {
            return Err(Error::validation("a student turn needs the agent to have spoken last"));
        }
        let before = current_knowledge(profile, conversation);
        let outcome = self
            .reflect(&before, conversation.tail(REFLECT_WINDOW))
            .await?;
        let message = self.respond(profile, &outcome.state, conversation).await?;
        Ok((message, outcome.state))
    }
}
