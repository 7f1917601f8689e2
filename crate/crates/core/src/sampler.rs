//! Diverse student profiles from the grid of characteristic levels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KnowledgeComponent, KnowledgeState, Pipeline, StudentProfile, TraitRatings};

/// Levels per dimension: low, medium, high.
pub const LEVELS: u8 = 3;
pub const DIMENSIONS: usize = 5;
pub const GRID_SIZE: usize = 243;

/// Levels for (knowledge, goal commitment, motivation, self-efficacy,
/// stress), each 0 = low, 1 = medium, 2 = high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; DIMENSIONS]", into = "[u8; DIMENSIONS]")]
pub struct LevelVector([u8; DIMENSIONS]);

impl LevelVector {
    pub fn new(levels: [u8; DIMENSIONS]) -> Result<Self> {
        if let Some(bad) = levels.iter().find(|&&l| l >= LEVELS) {
            return Err(Error::validation(format!("level {bad} is not 0, 1 or 2")));
        }
        Ok(Self(levels))
    }

    pub fn levels(&self) -> [u8; DIMENSIONS] {
        self.0
    }

    pub fn knowledge(&self) -> u8 {
        self.0[0]
    }

    /// Levels of the four traits in inventory order.
    pub fn traits(&self) -> [u8; 4] {
        [self.0[1], self.0[2], self.0[3], self.0[4]]
    }

    /// Short form such as `M-H-M-L-L`.
    pub fn code(&self) -> String {
        self.0
            .iter()
            .map(|l| ["L", "M", "H"][*l as usize])
            .collect::<Vec<_>>()
            .join("-")
    }
}

impl TryFrom<[u8; DIMENSIONS]> for LevelVector {
    type Error = Error;

    fn try_from(levels: [u8; DIMENSIONS]) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<LevelVector> for [u8; DIMENSIONS] {
    fn from(v: LevelVector) -> Self {
        v.0
    }
}

/// All 243 level vectors in lexicographic order.
pub fn enumerate_grid() -> Vec<LevelVector> {
    (0..GRID_SIZE)
        .map(|mut n| {
            let mut levels = [0u8; DIMENSIONS];
            for slot in levels.iter_mut().rev() {
                *slot = (n % LEVELS as usize) as u8;
                n /= LEVELS as usize;
            }
            LevelVector(levels)
        })
        .collect()
}

pub fn l1<const D: usize>(a: &[u8; D], b: &[u8; D]) -> u32 {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y) as u32).sum()
}

/// Greedy farthest-point sampling under L1 distance. Returns indices into
/// `points`, starting with `seed_index`. Each further pick maximizes the
/// minimum distance to the points already picked; ties go to the
/// lexicographically smallest vector.
pub fn farthest_point_sample<const D: usize>(points: &[[u8; D]], k: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    if seed_index >= n {
        return Err(Error::OutOfRange(format!("seed index {seed_index} with {n} points")));
    }
    let mut selected = vec![seed_index];
    let mut taken = vec![false; n];
    taken[seed_index] = true;
    let mut nearest: Vec<u32> = points.iter().map(|p| l1(p, &points[seed_index])).collect();
    while selected.len() < k {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            best = match best {
                None => Some(i),
                Some(b) if nearest[i] > nearest[b] || (nearest[i] == nearest[b] && points[i] < points[b]) => Some(i),
                keep => keep,
            };
        }
        let pick = best.expect("k <= n leaves a candidate");
        taken[pick] = true;
        selected.push(pick);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(l1(p, &points[pick]));
        }
    }
    Ok(selected)
}

/// Samples `k` level vectors from the full grid starting at `seed`.
pub fn sample_grid(k: usize, seed: LevelVector) -> Result<Vec<LevelVector>> {
    let grid = enumerate_grid();
    let raw: Vec<[u8; DIMENSIONS]> = grid.iter().map(|v| v.0).collect();
    let seed_index = grid.iter().position(|v| *v == seed).expect("grid holds every vector");
    Ok(farthest_point_sample(&raw, k, seed_index)?
        .into_iter()
        .map(|i| grid[i])
        .collect())
}

/// Likert rating used for every statement of a trait at this level.
pub fn level_rating(level: u8) -> u8 {
    match level {
        0 => 1,
        1 => 3,
        _ => 5,
    }
}

/// Initial knowledge for a level: none, the first half (rounded up), or all.
pub fn level_knowledge(level: u8, component_count: usize) -> KnowledgeState {
    match level {
        0 => KnowledgeState::empty(component_count),
        1 => {
            let half = component_count.div_ceil(2);
            KnowledgeState::new((0..component_count).map(|i| i < half).collect(), component_count)
                .expect("length matches")
        }
        _ => KnowledgeState::full(component_count),
    }
}

/// Student profile for a level vector. The trait overview is left for the
/// Interpret step.
pub fn materialize(
    v: LevelVector,
    id: impl Into<String>,
    name: impl Into<String>,
    components: &[KnowledgeComponent],
    pipeline: Pipeline,
) -> Result<StudentProfile> {
    if components.is_empty() {
        return Err(Error::validation("profiles need at least one knowledge component"));
    }
    let ratings = TraitRatings::per_trait(v.traits().map(level_rating))?;
    Ok(StudentProfile::new(
        id,
        name,
        level_knowledge(v.knowledge(), components.len()),
        ratings,
        pipeline,
    ))
}
