use serde::{Deserialize, Serialize};

use super::{KnowledgeState, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pca,
    Student,
}

/// One utterance. Agent messages carry the node that produced them; student
/// messages carry the knowledge state after that turn's reflection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMessage")]
pub struct Message {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_node_id: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_snapshot: Option<KnowledgeState>,
}

#[derive(Deserialize)]
struct RawMessage {
    role: Role,
    text: String,
    #[serde(default)]
    active_node_id: Option<NodeId>,
    #[serde(default)]
    knowledge_snapshot: Option<KnowledgeState>,
}

impl TryFrom<RawMessage> for Message {
    type Error = Error;

    fn try_from(raw: RawMessage) -> Result<Self> {
        match raw.role {
            Role::Pca if raw.knowledge_snapshot.is_some() => {
                Err(Error::validation("pca messages do not carry knowledge snapshots"))
            }
            Role::Student if raw.active_node_id.is_some() => {
                Err(Error::validation("student messages do not carry node ids"))
            }
            Role::Student if raw.knowledge_snapshot.is_none() => {
                Err(Error::validation("student messages need a knowledge snapshot"))
            }
            _ => Ok(Message {
                role: raw.role,
                text: raw.text,
                active_node_id: raw.active_node_id,
                knowledge_snapshot: raw.knowledge_snapshot,
            }),
        }
    }
}

impl Message {
    /// Agent message emitted from a diagram node.
    pub fn pca(text: impl Into<String>, node: NodeId) -> Self {
        Self {
            role: Role::Pca,
            text: text.into(),
            active_node_id: Some(node),
            knowledge_snapshot: None,
        }
    }

    /// Teacher-side message that does not come from the diagram, such as an
    /// interviewer or tutor line in evaluation dialogues.
    pub fn teacher(text: impl Into<String>) -> Self {
        Self {
            role: Role::Pca,
            text: text.into(),
            active_node_id: None,
            knowledge_snapshot: None,
        }
    }

    pub fn student(text: impl Into<String>, snapshot: KnowledgeState) -> Self {
        Self {
            role: Role::Student,
            text: text.into(),
            active_node_id: None,
            knowledge_snapshot: Some(snapshot),
        }
    }
}

/// Alternating agent/student transcript, always opened by the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawConversation")]
pub struct Conversation {
    pub id: String,
    pub diagram_version: u64,
    messages: Vec<Message>,
    #[serde(default)]
    pub stale: bool,
}

#[derive(Deserialize)]
struct RawConversation {
    id: String,
    diagram_version: u64,
    #[serde(default)]
    messages: Vec<Message>,
    #[serde(default)]
    stale: bool,
}

impl TryFrom<RawConversation> for Conversation {
    type Error = Error;

    fn try_from(raw: RawConversation) -> Result<Self> {
        let mut c = Conversation::new(raw.id, raw.diagram_version);
        c.stale = raw.stale;
        for m in raw.messages {
            c.push(m)?;
        }
        Ok(c)
    }
}

impl Conversation {
    pub fn new(id: impl Into<String>, diagram_version: u64) -> Self {
        Self {
            id: id.into(),
            diagram_version,
            messages: Vec::new(),
            stale: false,
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    /// Role the next message must have.
    pub fn next_role(&self) -> Role {
        match self.messages.last() {
            None | Some(Message { role: Role::Student, .. }) => Role::Pca,
            Some(_) => Role::Student,
        }
    }

    /// Appends a message, enforcing strict alternation starting with the agent.
    pub fn push(&mut self, message: Message) -> Result<()> {
        let expected = self.next_role();
        if message.role != expected {
            return Err(Error::validation(format!(
                "message {} must have role {expected:?}, got {:?}",
                self.messages.len(),
                message.role
            )));
        }
        self.messages.push(message);
        Ok(())
    }

    /// Drops every message from `len` on. Truncating to an odd length keeps
    /// the conversation ending on an agent message.
    pub fn truncate(&mut self, len: usize) {
        self.messages.truncate(len);
    }

    /// The last `n` messages.
    pub fn tail(&self, n: usize) -> &[Message] {
        let start = self.messages.len().saturating_sub(n);
        &self.messages[start..]
    }

    /// Recomputes the stale flag against the current diagram version.
    pub fn refresh_staleness(&mut self, current_version: u64) -> bool {
        self.stale = self.diagram_version < current_version;
        self.stale
    }

    /// Knowledge carried by the most recent student message, if any.
    pub fn latest_snapshot(&self) -> Option<&KnowledgeState> {
        self.messages
            .iter()
            .rev()
            .find_map(|m| m.knowledge_snapshot.as_ref())
    }
}
