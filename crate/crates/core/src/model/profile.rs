use serde::{Deserialize, Serialize};

use super::{KnowledgeComponent, KnowledgeState, TraitRatings};
use crate::error::{Error, Result};

/// Which simulation pipeline drives a student's replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Interpret, Reflect, Respond with the trait overview.
    #[default]
    Ours,
    /// Raw ratings inlined into the Respond prompt, no Interpret step.
    Baseline,
    /// Knowledge state only; no trait information reaches the model.
    KnowledgeOnly,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Ours => "ours",
            Pipeline::Baseline => "baseline",
            Pipeline::KnowledgeOnly => "knowledge_only",
        }
    }
}

/// Natural-language reading of a student's trait ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitOverview {
    pub text: String,
    /// Ratings the overview was generated from.
    pub generated_from: TraitRatings,
    /// Set once a teacher has changed the generated text.
    #[serde(default)]
    pub edited: bool,
}

impl TraitOverview {
    /// True when the overview was generated from different ratings.
    pub fn is_outdated(&self, current: &TraitRatings) -> bool {
        &self.generated_from != current
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub initial_knowledge: KnowledgeState,
    pub ratings: TraitRatings,
    #[serde(default)]
    pub trait_overview: Option<TraitOverview>,
    #[serde(default)]
    pub pipeline: Pipeline,
}

impl StudentProfile {
    pub fn new(
        id: impl Into<String>,
        name: impl Into<String>,
        initial_knowledge: KnowledgeState,
        ratings: TraitRatings,
        pipeline: Pipeline,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            initial_knowledge,
            ratings,
            trait_overview: None,
            pipeline,
        }
    }

    pub fn overview_text(&self) -> &str {
        self.trait_overview.as_ref().map_or("", |o| o.text.as_str())
    }

    /// Replaces the overview text with a teacher's edit. Ratings are untouched.
    pub fn edit_overview(&mut self, text: impl Into<String>) {
        let text = text.into();
        match &mut self.trait_overview {
            Some(o) => {
                if o.text != text {
                    o.text = text;
                    o.edited = true;
                }
            }
            None => {
                self.trait_overview = Some(TraitOverview {
                    text,
                    generated_from: self.ratings,
                    edited: true,
                })
            }
        }
    }

    /// Structural checks against the project's component list.
    pub fn validate(&self, components: &[KnowledgeComponent]) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::validation("profile id is empty"));
        }
        if self.initial_knowledge.len() != components.len() {
            return Err(Error::LengthMismatch {
                expected: components.len(),
                actual: self.initial_knowledge.len(),
            });
        }
        Ok(())
    }

    /// Checks that the profile can drive a simulation. The `ours` pipeline
    /// cannot run without a trait overview.
    pub fn ready_for_simulation(&self, components: &[KnowledgeComponent]) -> Result<()> {
        self.validate(components)?;
        if self.pipeline == Pipeline::Ours && self.overview_text().trim().is_empty() {
            return Err(Error::validation(format!(
                "profile {} uses the ours pipeline but has no trait overview; run interpret first",
                self.id
            )));
        }
        Ok(())
    }
}
