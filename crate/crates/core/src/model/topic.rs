use serde::{Deserialize, Serialize};

use super::KnowledgeComponent;

/// Wording that places prompts in a particular classroom setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    /// Who the tutoring agent plays.
    pub teacher_role: String,
    /// Who the simulated student is, with an indefinite article.
    pub learner: String,
    /// Subject of the lesson as it appears after "Your subject is".
    pub subject: String,
    /// Knowledge the simulated student must set aside.
    pub topic: String,
}

impl Default for Topic {
    fn default() -> Self {
        Self {
            teacher_role: "a science teacher teaching middle school students".into(),
            learner: "a middle school student".into(),
            subject: "the change of state of matter".into(),
            topic: "phase transitions between solid, liquid, and gas".into(),
        }
    }
}

const PHASE_TRANSITION: [&str; 6] = [
    "Solids have a regular particle arrangement, are rigid, have a constant shape and volume, and do not flow.",
    "Liquids have a less regular particle arrangement than solids, change shape but have a constant volume, and flow.",
    "Gases have a highly irregular particle arrangement, have neither a constant shape nor volume, flow, and spread out to fill a space.",
    "Substances exist in only one of the three states of matter—solid, liquid, or gas—but can change to a different state depending on temperature or pressure; the change in a substance’s state is called a phase change.",
    "During a phase change, the properties of a substance do not change because the particles that make up the substance do not change.",
    "Even when a substance changes state, the particles that make up the substance and the number of particles do not change, so the mass does not change.",
];

/// The six phase-transition components used by the bundled starter project.
pub fn phase_transition_components() -> Vec<KnowledgeComponent> {
    KnowledgeComponent::list(&PHASE_TRANSITION)
}
