use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EvalRecord, KnowledgeState, TraitRatings};

/// Percentage of components predicted wrongly.
pub fn knowledge_bias(configured: &KnowledgeState, predicted: &KnowledgeState) -> Result<f64> {
    let wrong = configured.hamming(predicted)?;
    if configured.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * wrong as f64 / configured.len() as f64)
}

/// Per-trait absolute difference between predicted and configured sums.
pub fn trait_bias(configured: &TraitRatings, predicted_sums: [u8; 4]) -> Result<[u8; 4]> {
    if let Some(s) = predicted_sums.iter().find(|s| !(3..=15).contains(*s)) {
        return Err(Error::OutOfRange(format!("trait sum {s} outside 3..=15")));
    }
    let sums = configured.sums();
    Ok(std::array::from_fn(|i| predicted_sums[i].abs_diff(sums[i])))
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

/// Pearson correlation; `None` when either side has no variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            sd: sample_sd(xs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BelievabilitySummary {
    /// B1..B3 over per-profile means.
    pub statements: [Stat; 3],
    /// Correlation of per-profile B1 and B3 means.
    pub pearson_b1_b3: Option<f64>,
    pub profiles: usize,
}

/// Believability per statement. Records are averaged per profile first;
/// mean and sd are then taken across profiles.
pub fn believability_summary(records: &[EvalRecord]) -> Result<BelievabilitySummary> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut groups: Vec<(&str, Vec<[u8; 3]>)> = Vec::new();
    for r in records {
        if let Some(b) = r.believability.iter().find(|b| !(1..=5).contains(*b)) {
            return Err(Error::OutOfRange(format!("believability {b} outside 1..=5")));
        }
        match groups.iter_mut().find(|(id, _)| *id == r.profile_id) {
            Some((_, v)) => v.push(r.believability),
            None => groups.push((&r.profile_id, vec![r.believability])),
        }
    }
    let per_profile: Vec<[f64; 3]> = groups
        .iter()
        .map(|(_, v)| std::array::from_fn(|i| mean(&v.iter().map(|b| b[i] as f64).collect::<Vec<_>>())))
        .collect();
    let column = |i: usize| per_profile.iter().map(|p| p[i]).collect::<Vec<_>>();
    Ok(BelievabilitySummary {
        statements: std::array::from_fn(|i| Stat::of(&column(i))),
        pearson_b1_b3: pearson(&column(0), &column(2)),
        profiles: per_profile.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pipeline;

    fn rec(profile: &str, b: [u8; 3]) -> EvalRecord {
        EvalRecord {
            profile_id: profile.into(),
            pipeline: Pipeline::Ours,
            rater_id: "r".into(),
            predicted_knowledge: KnowledgeState::empty(6),
            predicted_trait_sums: [3; 4],
            believability: b,
        }
    }

    #[test]
    fn knowledge_bias_basics() {
        let a = KnowledgeState::from_indices(6, &[0, 1]).unwrap();
        assert_eq!(knowledge_bias(&a, &a).unwrap(), 0.0);
        let b = KnowledgeState::from_indices(6, &[0]).unwrap();
        assert!((knowledge_bias(&a, &b).unwrap() - 100.0 / 6.0).abs() < 1e-12);
        assert!(matches!(
            knowledge_bias(&a, &KnowledgeState::empty(5)),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn trait_bias_bounds() {
        let lows = TraitRatings::uniform(1).unwrap();
        assert_eq!(trait_bias(&lows, [3; 4]).unwrap(), [0; 4]);
        assert_eq!(trait_bias(&lows, [15, 3, 3, 3]).unwrap(), [12, 0, 0, 0]);
        assert!(trait_bias(&lows, [2, 3, 3, 3]).is_err());
    }

    #[test]
    fn stats() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((sample_sd(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138089935).abs() < 1e-8);
        assert_eq!(sample_sd(&[5.0]), 0.0);
        assert!(pearson(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn single_record() {
        let s = believability_summary(&[rec("a", [3, 3, 3])]).unwrap();
        assert_eq!(s.statements.map(|x| x.mean), [3.0; 3]);
        assert_eq!(s.statements.map(|x| x.sd), [0.0; 3]);
        assert!(matches!(believability_summary(&[]), Err(Error::EmptyRecords)));
    }

    #[test]
    fn linear_b1_b3() {
        let recs = [rec("a", [1, 2, 1]), rec("b", [3, 2, 3]), rec("c", [5, 4, 5])];
        let s = believability_summary(&recs).unwrap();
        assert!((s.pearson_b1_b3.unwrap() - 1.0).abs() < 1e-12);
    }
}
