//! Shared domain types and their canonical JSON encodings.

mod conversation;
mod diagram;
mod knowledge;
mod profile;
mod record;
mod topic;
mod traits;

pub use conversation::{Conversation, Message, Role};
pub use diagram::{Edge, Node, NodeId, StateDiagram, ValidationReport};
pub use knowledge::{KnowledgeComponent, KnowledgeState, validate_components};
pub use profile::{Pipeline, StudentProfile, TraitOverview};
pub use record::EvalRecord;
pub use topic::{phase_transition_components, Topic};
pub use traits::{likert_label, Trait, TraitRatings, INVENTORY};

/// Version stamped into every top-level JSON document.
pub const SCHEMA_VERSION: u32 = 1;
