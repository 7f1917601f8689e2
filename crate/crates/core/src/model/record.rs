use serde::{Deserialize, Serialize};

use super::{KnowledgeState, Pipeline};
use crate::error::{Error, Result};

/// One evaluator's prediction of one simulated student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub profile_id: String,
    /// Pipeline that powered the simulated student being rated.
    #[serde(default)]
    pub pipeline: Pipeline,
    pub rater_id: String,
    pub predicted_knowledge: KnowledgeState,
    /// Predicted per-trait sums in GC/MO/SE/ST order, each in 3..=15.
    pub predicted_trait_sums: [u8; 4],
    /// Believability ratings B1..B3, each in 1..=5.
    pub believability: [u8; 3],
}

impl EvalRecord {
    pub fn validate(&self, component_count: usize) -> Result<()> {
        if self.predicted_knowledge.len() != component_count {
            return Err(Error::LengthMismatch {
                expected: component_count,
                actual: self.predicted_knowledge.len(),
            });
        }
        if let Some(s) = self.predicted_trait_sums.iter().find(|s| !(3..=15).contains(*s)) {
            return Err(Error::OutOfRange(format!(
                "record {}/{}: trait sum {s} outside 3..=15",
                self.profile_id, self.rater_id
            )));
        }
        if let Some(b) = self.believability.iter().find(|b| !(1..=5).contains(*b)) {
            return Err(Error::OutOfRange(format!(
                "record {}/{}: believability {b} outside 1..=5",
                self.profile_id, self.rater_id
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_checked() {
        let mut r = EvalRecord {
            profile_id: "S1".into(),
            pipeline: Pipeline::Ours,
            rater_id: "R1".into(),
            predicted_knowledge: KnowledgeState::empty(6),
            predicted_trait_sums: [3, 9, 15, 12],
            believability: [1, 3, 5],
        };
        assert!(r.validate(6).is_ok());
        assert!(r.validate(5).is_err());
        r.predicted_trait_sums[0] = 2;
        assert!(r.validate(6).is_err());
        r.predicted_trait_sums[0] = 3;
        r.believability[2] = 6;
        assert!(r.validate(6).is_err());
    }

    #[test]
    fn pipeline_defaults_to_ours() {
        let json = r#"{"profile_id":"S1","rater_id":"R1","predicted_knowledge":[true],"predicted_trait_sums":[3,3,3,3],"believability":[3,3,3]}"#;
        let r: EvalRecord = serde_json::from_str(json).unwrap();
        assert_eq!(r.pipeline, Pipeline::Ours);
    }
}
