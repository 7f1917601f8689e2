use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One atomic statement of curriculum knowledge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeComponent {
    pub index: usize,
    pub text: String,
}

impl KnowledgeComponent {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
        }
    }

    /// Builds a contiguous, 0-indexed component list from statements.
    pub fn list<S: AsRef<str>>(texts: &[S]) -> Vec<KnowledgeComponent> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| KnowledgeComponent::new(i, t.as_ref()))
            .collect()
    }
}

/// Checks that a component list is non-empty, contiguous from 0, and has no
/// blank statements.
pub fn validate_components(components: &[KnowledgeComponent]) -> Result<()> {
    if components.is_empty() {
        return Err(Error::validation("component list is empty"));
    }
    for (i, c) in components.iter().enumerate() {
        if c.index != i {
            return Err(Error::validation(format!(
                "component indices must be contiguous from 0; position {i} has index {}",
                c.index
            )));
        }
        if c.text.trim().is_empty() {
            return Err(Error::validation(format!("component {i} has empty text")));
        }
    }
    Ok(())
}

/// Which knowledge components a student has acquired.
///
/// Serialized as a plain JSON array of booleans.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnowledgeState(Vec<bool>);

impl KnowledgeState {
    /// Nothing acquired.
    pub fn empty(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn full(len: usize) -> Self {
        Self(vec![true; len])
    }

    /// Wraps `bits`, rejecting a length that does not match the component list.
    pub fn new(bits: Vec<bool>, expected_len: usize) -> Result<Self> {
        if bits.len() != expected_len {
            return Err(Error::LengthMismatch {
                expected: expected_len,
                actual: bits.len(),
            });
        }
        Ok(Self(bits))
    }

    pub fn from_indices(len: usize, indices: &[usize]) -> Result<Self> {
        let mut state = Self::empty(len);
        for &i in indices {
            if i >= len {
                return Err(Error::OutOfRange(format!(
                    "component index {i} (have {len} components)"
                )));
            }
            state.0[i] = true;
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn is_acquired(&self, index: usize) -> bool {
        self.0.get(index).copied().unwrap_or(false)
    }

    pub fn acquired_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }

    pub fn acquired_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Marks a component as acquired. Acquisition never reverts.
    pub fn acquire(&mut self, index: usize) -> Result<()> {
        match self.0.get_mut(index) {
            Some(slot) => {
                *slot = true;
                Ok(())
            }
            None => Err(Error::OutOfRange(format!(
                "component index {index} (have {} components)",
                self.0.len()
            ))),
        }
    }

    /// Componentwise `self >= other`.
    pub fn covers(&self, other: &KnowledgeState) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| *a || !*b)
    }

    /// Number of positions where the two states disagree.
    pub fn hamming(&self, other: &KnowledgeState) -> Result<usize> {
        if self.0.len() != other.0.len() {
            return Err(Error::LengthMismatch {
                expected: self.0.len(),
                actual: other.0.len(),
            });
        }
        Ok(self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count())
    }
}
