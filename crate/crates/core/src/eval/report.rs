use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{believability_summary, knowledge_bias, mean, median, trait_bias, BelievabilitySummary, Stat};
use crate::error::{Error, Result};
use crate::model::{EvalRecord, Pipeline, StudentProfile, Trait, SCHEMA_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterRow {
    pub rater_id: String,
    pub knowledge_bias: f64,
    pub trait_errors: [u8; 4],
    pub believability: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBias {
    pub profile_id: String,
    pub pipeline: Pipeline,
    pub knowledge_bias: Stat,
    /// Mean absolute error per trait in GC/MO/SE/ST order.
    pub trait_bias: [Stat; 4],
    pub believability: [Stat; 3],
    pub raters: Vec<RaterRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub pipeline: Pipeline,
    /// Over per-profile mean knowledge bias.
    pub knowledge_bias_mean: f64,
    pub knowledge_bias_median: f64,
    /// Over the per-profile, per-trait mean absolute errors.
    pub trait_bias_mean: f64,
    pub trait_bias_median: f64,
    pub trait_bias_min: f64,
    pub trait_bias_max: f64,
    pub believability: BelievabilitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema: u32,
    pub profiles: Vec<ProfileBias>,
    pub summaries: Vec<PipelineSummary>,
}

fn column<const N: usize>(rows: &[RaterRow], f: impl Fn(&RaterRow) -> [f64; N], i: usize) -> Vec<f64> {
    rows.iter().map(|r| f(r)[i]).collect()
}

impl BiasReport {
    /// Builds the report from evaluator records. Profiles appear in the
    /// order given, grouped by pipeline (ours, baseline, knowledge-only).
    pub fn build(profiles: &[StudentProfile], records: &[EvalRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyRecords);
        }
        for r in records {
            let p = profiles
                .iter()
                .find(|p| p.id == r.profile_id)
                .ok_or_else(|| Error::NotFound(format!("profile {} in record of {}", r.profile_id, r.rater_id)))?;
            r.validate(p.initial_knowledge.len())?;
        }
        let mut out = Self {
            schema: SCHEMA_VERSION,
            profiles: Vec::new(),
            summaries: Vec::new(),
        };
        for pipeline in [Pipeline::Ours, Pipeline::Baseline, Pipeline::KnowledgeOnly] {
            let mut rows_for_pipeline = Vec::new();
            for profile in profiles {
                let mut rows = Vec::new();
                for r in records.iter().filter(|r| r.pipeline == pipeline && r.profile_id == profile.id) {
                    rows.push(RaterRow {
                        rater_id: r.rater_id.clone(),
                        knowledge_bias: knowledge_bias(&profile.initial_knowledge, &r.predicted_knowledge)?,
                        trait_errors: trait_bias(&profile.ratings, r.predicted_trait_sums)?,
                        believability: r.believability,
                    });
                }
                if rows.is_empty() {
                    continue;
                }
                let kb: Vec<f64> = rows.iter().map(|r| r.knowledge_bias).collect();
                rows_for_pipeline.push(ProfileBias {
                    profile_id: profile.id.clone(),
                    pipeline,
                    knowledge_bias: Stat::of(&kb),
                    trait_bias: std::array::from_fn(|i| Stat::of(&column(&rows, |r| r.trait_errors.map(f64::from), i))),
                    believability: std::array::from_fn(|i| Stat::of(&column(&rows, |r| r.believability.map(f64::from), i))),
                    raters: rows,
                });
            }
            if rows_for_pipeline.is_empty() {
                continue;
            }
            let kb_means: Vec<f64> = rows_for_pipeline.iter().map(|p| p.knowledge_bias.mean).collect();
            let cells: Vec<f64> = rows_for_pipeline
                .iter()
                .flat_map(|p| p.trait_bias.iter().map(|s| s.mean))
                .collect();
            let pipeline_records: Vec<EvalRecord> = records.iter().filter(|r| r.pipeline == pipeline).cloned().collect();
            out.summaries.push(PipelineSummary {
                pipeline,
                knowledge_bias_mean: mean(&kb_means),
                knowledge_bias_median: median(&kb_means),
                trait_bias_mean: mean(&cells),
                trait_bias_median: median(&cells),
                trait_bias_min: cells.iter().copied().fold(f64::INFINITY, f64::min),
                trait_bias_max: cells.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                believability: believability_summary(&pipeline_records)?,
            });
            out.profiles.extend(rows_for_pipeline);
        }
        Ok(out)
    }

    pub fn summary(&self, pipeline: Pipeline) -> Option<&PipelineSummary> {
        self.summaries.iter().find(|s| s.pipeline == pipeline)
    }

    pub fn profile(&self, pipeline: Pipeline, profile_id: &str) -> Option<&ProfileBias> {
        self.profiles
            .iter()
            .find(|p| p.pipeline == pipeline && p.profile_id == profile_id)
    }

    fn profile_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for p in &self.profiles {
            if !ids.contains(&p.profile_id.as_str()) {
                ids.push(&p.profile_id);
            }
        }
        ids
    }

    /// Markdown with a knowledge-bias table (pipelines as rows, profiles as
    /// columns, then mean and median), a per-trait error table, and
    /// believability.
    pub fn to_markdown(&self) -> String {
        let ids = self.profile_ids();
        let mut md = String::from("# Simulated student bias report\n\n## Knowledge bias (% error)\n\n");
        let _ = writeln!(md, "| Pipeline | {} | Mean | Median |", ids.join(" | "));
        let _ = writeln!(md, "|---|{}---|---|", "---|".repeat(ids.len()));
        for s in &self.summaries {
            let cells: Vec<String> = ids
                .iter()
                .map(|id| {
                    self.profile(s.pipeline, id)
                        .map(|p| format!("{:.1}±{:.1}", p.knowledge_bias.mean, p.knowledge_bias.sd))
                        .unwrap_or_else(|| "-".into())
                })
                .collect();
            let _ = writeln!(
                md,
                "| {} | {} | {:.1} | {:.1} |",
                s.pipeline.as_str(),
                cells.join(" | "),
                s.knowledge_bias_mean,
                s.knowledge_bias_median
            );
        }

        md.push_str("\n## Trait bias (mean absolute error, 0-12)\n\n");
        let header: Vec<&str> = Trait::ALL.iter().map(|t| t.code()).collect();
        let _ = writeln!(md, "| Profile | Pipeline | {} |", header.join(" | "));
        let _ = writeln!(md, "|---|---|{}", "---|".repeat(header.len()));
        for id in &ids {
            for s in &self.summaries {
                if let Some(p) = self.profile(s.pipeline, id) {
                    let cells: Vec<String> = p.trait_bias.iter().map(|t| format!("{:.1}", t.mean)).collect();
                    let _ = writeln!(md, "| {id} | {} | {} |", s.pipeline.as_str(), cells.join(" | "));
                }
            }
        }
        md.push('\n');
        for s in &self.summaries {
            let _ = writeln!(
                md,
                "- {}: mean {:.1}, median {:.1}, min {:.1}, max {:.1}",
                s.pipeline.as_str(),
                s.trait_bias_mean,
                s.trait_bias_median,
                s.trait_bias_min,
                s.trait_bias_max
            );
        }

        md.push_str("\n## Believability (1-5)\n\n| Pipeline | B1 | B2 | B3 | r(B1, B3) |\n|---|---|---|---|---|\n");
        for s in &self.summaries {
            let b: Vec<String> = s
                .believability
                .statements
                .iter()
                .map(|x| format!("{:.1}±{:.1}", x.mean, x.sd))
                .collect();
            let r = s
                .believability
                .pearson_b1_b3
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(md, "| {} | {} | {r} |", s.pipeline.as_str(), b.join(" | "));
        }
        md
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(dir.join("report.json"), json + "\n")?;
        std::fs::write(dir.join("report.md"), self.to_markdown())?;
        Ok(())
    }
}

/// Reads every `*.json` file in `dir` as a record or an array of records,
/// in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<EvalRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let parsed = if value.is_array() {
            serde_json::from_value::<Vec<EvalRecord>>(value)
        } else {
            serde_json::from_value::<EvalRecord>(value).map(|r| vec![r])
        };
        out.extend(parsed.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{KnowledgeState, TraitRatings};

    fn profile(id: &str) -> StudentProfile {
        StudentProfile::new(id, id, KnowledgeState::empty(2), TraitRatings::uniform(1).unwrap(), Pipeline::Ours)
    }

    fn rec(profile: &str, pipeline: Pipeline, rater: &str, known: &[usize], sums: [u8; 4]) -> EvalRecord {
        EvalRecord {
            profile_id: profile.into(),
            pipeline,
            rater_id: rater.into(),
            predicted_knowledge: KnowledgeState::from_indices(2, known).unwrap(),
            predicted_trait_sums: sums,
            believability: [3, 4, 3],
        }
    }

    #[test]
    fn builds_per_pipeline() {
        let profiles = [profile("a"), profile("b")];
        let records = [
            rec("a", Pipeline::Ours, "r1", &[0], [3, 3, 3, 5]),
            rec("a", Pipeline::Ours, "r2", &[], [3, 3, 3, 3]),
            rec("b", Pipeline::Ours, "r1", &[0, 1], [4, 3, 3, 3]),
            rec("a", Pipeline::Baseline, "r1", &[], [3, 3, 3, 3]),
        ];
        let report = BiasReport::build(&profiles, &records).unwrap();
        let ours = report.summary(Pipeline::Ours).unwrap();
        assert_eq!(ours.knowledge_bias_mean, (25.0 + 100.0) / 2.0);
        assert_eq!(ours.trait_bias_max, 1.0);
        assert_eq!(ours.trait_bias_min, 0.0);
        assert_eq!(report.profile(Pipeline::Baseline, "a").unwrap().knowledge_bias.mean, 0.0);
        let md = report.to_markdown();
        assert!(md.contains("| Pipeline | a | b | Mean | Median |"));
        assert!(md.contains("| baseline | 0.0±0.0 | - | 0.0 | 0.0 |"));
        let back: BiasReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn unknown_profile_rejected() {
        let err = BiasReport::build(&[profile("a")], &[rec("z", Pipeline::Ours, "r", &[], [3; 4])]).unwrap_err();
        assert_eq!(err.code(), "not_found");
        assert!(matches!(BiasReport::build(&[profile("a")], &[]), Err(Error::EmptyRecords)));
    }
}
