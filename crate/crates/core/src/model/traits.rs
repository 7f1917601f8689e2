use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four non-cognitive student traits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trait {
    GoalCommitment,
    Motivation,
    SelfEfficacy,
    Stress,
}

impl Trait {
    pub const ALL: [Trait; 4] = [
        Trait::GoalCommitment,
        Trait::Motivation,
        Trait::SelfEfficacy,
        Trait::Stress,
    ];

    /// Short code used for inventory items (GC1, MO2, ...).
    pub fn code(self) -> &'static str {
        match self {
            Trait::GoalCommitment => "GC",
            Trait::Motivation => "MO",
            Trait::SelfEfficacy => "SE",
            Trait::Stress => "ST",
        }
    }

    /// Lower-case display name, as used in prompt prose.
    pub fn name(self) -> &'static str {
        match self {
            Trait::GoalCommitment => "goal commitment",
            Trait::Motivation => "motivation",
            Trait::SelfEfficacy => "self-efficacy",
            Trait::Stress => "stress",
        }
    }

    /// Tag name used to fence the trait's items inside prompts.
    pub fn tag(self) -> &'static str {
        match self {
            Trait::GoalCommitment => "student's-goal-commitment",
            Trait::Motivation => "student's-motivation",
            Trait::SelfEfficacy => "student's-self-efficacy",
            Trait::Stress => "student's-stress",
        }
    }

    pub fn statements(self) -> &'static [&'static str; 3] {
        &INVENTORY[self as usize].1
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Inventory statements, three per trait, in GC/MO/SE/ST order.
pub const INVENTORY: [(Trait, [&str; 3]); 4] = [
    (
        Trait::GoalCommitment,
        [
            "I am strongly committed to pursuing this goal.",
            "I think this is a good goal to shoot for.",
            "I am willing to put forth a great deal of effort beyond what I'd normally do to achieve this goal.",
        ],
    ),
    (
        Trait::Motivation,
        [
            "I keep working on a problem until I understand it.",
            "I try to learn more about something that I don't understand right away so that I will understand it.",
            "When I know I have learned something new, I feel good inside.",
        ],
    ),
    (
        Trait::SelfEfficacy,
        [
            "I believe I am the kind of person who is good at science.",
            "I believe I am the type of person who can do science.",
            "I believe I can learn well in a science course.",
        ],
    ),
    (
        Trait::Stress,
        [
            "I feel a lot of pressure in my daily studying.",
            "Future education and employment bring me a lot of academic pressure.",
            "I feel that I have disappointed my parents when my test/exam results are poor.",
        ],
    ),
];

/// Label for a 5-point Likert rating.
pub fn likert_label(rating: u8) -> &'static str {
    match rating {
        1 => "Strongly disagree",
        2 => "Disagree",
        3 => "Neutral",
        4 => "Agree",
        5 => "Strongly agree",
        _ => "Invalid",
    }
}

/// Likert ratings (1..=5) for the twelve inventory items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRatings", into = "RawRatings")]
pub struct TraitRatings {
    items: [[u8; 3]; 4],
}

#[derive(Serialize, Deserialize)]
struct RawRatings {
    goal_commitment: [u8; 3],
    motivation: [u8; 3],
    self_efficacy: [u8; 3],
    stress: [u8; 3],
}

impl TryFrom<RawRatings> for TraitRatings {
    type Error = Error;

    fn try_from(raw: RawRatings) -> Result<Self> {
        TraitRatings::new([raw.goal_commitment, raw.motivation, raw.self_efficacy, raw.stress])
    }
}

impl From<TraitRatings> for RawRatings {
    fn from(r: TraitRatings) -> Self {
        let [goal_commitment, motivation, self_efficacy, stress] = r.items;
        RawRatings {
            goal_commitment,
            motivation,
            self_efficacy,
            stress,
        }
    }
}

impl TraitRatings {
    /// Ratings in GC/MO/SE/ST order; every item must lie in 1..=5.
    pub fn new(items: [[u8; 3]; 4]) -> Result<Self> {
        for (t, row) in Trait::ALL.iter().zip(&items) {
            for (j, &v) in row.iter().enumerate() {
                if !(1..=5).contains(&v) {
                    return Err(Error::OutOfRange(format!(
                        "{}{} rating {v} is outside 1..=5",
                        t.code(),
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { items })
    }

    /// Every item of every trait set to `value`.
    pub fn uniform(value: u8) -> Result<Self> {
        Self::new([[value; 3]; 4])
    }

    /// Each trait's three items set to the given per-trait value.
    pub fn per_trait(values: [u8; 4]) -> Result<Self> {
        Self::new(values.map(|v| [v; 3]))
    }

    pub fn items(&self, t: Trait) -> [u8; 3] {
        self.items[t as usize]
    }

    /// Sum of the trait's three item ratings, in 3..=15.
    pub fn trait_sum(&self, t: Trait) -> u8 {
        self.items[t as usize].iter().sum()
    }

    pub fn sums(&self) -> [u8; 4] {
        Trait::ALL.map(|t| self.trait_sum(t))
    }
}
