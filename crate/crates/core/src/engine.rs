//! Runs the tutoring agent over a [`StateDiagram`].
//!
//! After every student message a routing call picks which child of the
//! active node (if any) the student's behavior matches; the agent's next
//! message is then generated under the active node's instruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatMessage, ChatRequest, Gateway};
use crate::model::{Conversation, KnowledgeComponent, Message, NodeId, Role, StateDiagram, Topic};
use crate::prompts;

/// Messages of context shown to the routing call.
pub const MASTER_WINDOW: usize = 6;

pub const MASTER_TAG: &str = "master";
pub const PCA_TAG: &str = "pca";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionOutcome {
    /// Moved to the chosen child.
    Moved,
    /// Routing answered none-of-the-above, out of range, or unparseable.
    Stayed,
    /// The active node has no children; no routing call was made.
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    /// 0-based count of student messages processed before this one.
    pub turn: usize,
    /// Index of the student message that triggered the transition.
    pub message_index: usize,
    pub from: NodeId,
    pub options_presented: Vec<NodeId>,
    pub raw_answer: Option<String>,
    pub chosen: NodeId,
    pub outcome: TransitionOutcome,
}

/// Routing state of one conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub active_node_id: NodeId,
    #[serde(default)]
    pub transition_log: Vec<TransitionRecord>,
}

/// First integer appearing in a routing reply.
pub fn parse_choice(reply: &str) -> Option<usize> {
    let start = reply.find(|c: char| c.is_ascii_digit())?;
    let digits: String = reply[start..].chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok()
}

impl EngineState {
    /// Engine positioned at the diagram's root.
    pub fn new(diagram: &StateDiagram) -> Self {
        Self::at(diagram.root_id.clone())
    }

    /// Engine positioned at an arbitrary node.
    pub fn at(node: NodeId) -> Self {
        Self {
            active_node_id: node,
            transition_log: Vec::new(),
        }
    }

    /// Routes on the latest student message and returns the (possibly
    /// unchanged) active node.
    ///
    /// Leaf nodes never call the gateway. Routing runs at temperature 0.
    pub async fn transition(
        &mut self,
        diagram: &StateDiagram,
        conversation: &Conversation,
        gateway: &Gateway,
    ) -> Result<NodeId> {
        if !matches!(conversation.last(), Some(m) if m.role == Role::Student) {
            return Err(Error::validation(
                "transition needs a conversation ending with a student message",
            ));
        }
        let from = self.active_node_id.clone();
        if diagram.node(&from).is_none() {
            return Err(Error::NotFound(format!("active node {from}")));
        }
        let children = diagram.children(&from);
        let turn = self.transition_log.len();
        let message_index = conversation.len() - 1;

        if children.is_empty() {
            self.transition_log.push(TransitionRecord {
                turn,
                message_index,
                from: from.clone(),
                options_presented: Vec::new(),
                raw_answer: None,
                chosen: from.clone(),
                outcome: TransitionOutcome::Leaf,
            });
            return Ok(from);
        }

        let options: Vec<&str> = children.iter().map(|n| n.behavior.as_str()).collect();
        let prompt = prompts::master_prompt(conversation.tail(MASTER_WINDOW), &options);
        let request = ChatRequest::new(MASTER_TAG, 0.0).with_user(prompt);
        let reply = gateway.complete(&request).await?;

        let picked = parse_choice(&reply)
            .filter(|n| (1..=children.len()).contains(n))
            .map(|n| children[n - 1].id.clone());
        let (chosen, outcome) = match picked {
            Some(id) => (id, TransitionOutcome::Moved),
            None => {
                if parse_choice(&reply).is_none() {
                    tracing::warn!(reply = %reply, node = %from, "unparseable routing reply; staying");
                } else {
                    tracing::debug!(reply = %reply, node = %from, "routing chose to stay");
                }
                (from.clone(), TransitionOutcome::Stayed)
            }
        };
        self.transition_log.push(TransitionRecord {
            turn,
            message_index,
            from,
            options_presented: children.iter().map(|n| n.id.clone()).collect(),
            raw_answer: Some(reply),
            chosen: chosen.clone(),
            outcome,
        });
        self.active_node_id = chosen.clone();
        Ok(chosen)
    }

    /// Produces the agent's next message. The opening message of a
    /// conversation is the root's start message, verbatim and without a
    /// model call.
    pub async fn respond(
        &self,
        diagram: &StateDiagram,
        conversation: &Conversation,
        components: &[KnowledgeComponent],
        topic: &Topic,
        gateway: &Gateway,
        temperature: f32,
    ) -> Result<Message> {
        if conversation.is_empty() {
            let root = diagram
                .root()
                .ok_or_else(|| Error::NotFound(format!("root node {}", diagram.root_id)))?;
            return Ok(Message::pca(root.start_message.clone(), root.id.clone()));
        }
        if conversation.next_role() != Role::Pca {
            return Err(Error::validation("the agent cannot speak twice in a row"));
        }
        let node = diagram
            .node(&self.active_node_id)
            .ok_or_else(|| Error::NotFound(format!("active node {}", self.active_node_id)))?;
        let system = prompts::pca_system_prompt(topic, &node.instruction, components);
        let history = conversation.messages().iter().map(|m| match m.role {
            Role::Pca => ChatMessage::assistant(m.text.clone()),
            Role::Student => ChatMessage::user(m.text.clone()),
        });
        let request = ChatRequest::new(PCA_TAG, temperature)
            .with_system(system)
            .with_messages(history);
        let text = gateway.complete(&request).await?;
        Ok(Message::pca(text.trim().to_string(), node.id.clone()))
    }

    /// Restores routing state to just after agent message `message_index`,
    /// which must carry its node annotation.
    pub fn rewind(&mut self, conversation: &Conversation, message_index: usize) -> Result<()> {
        let msg = conversation
            .messages()
            .get(message_index)
            .ok_or_else(|| Error::NotFound(format!("message {message_index}")))?;
        let node = match (msg.role, &msg.active_node_id) {
            (Role::Pca, Some(node)) => node.clone(),
            _ => {
                return Err(Error::validation(format!(
                    "message {message_index} is not an agent message"
                )))
            }
        };
        self.transition_log.retain(|r| r.message_index < message_index);
        self.active_node_id = node;
        Ok(())
    }

    /// Transition log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        self.transition_log
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}
