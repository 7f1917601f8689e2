//! Interview and lesson dialogues with simulated students, and the bias
//! and believability measures computed from evaluator predictions.

mod dialogue;
mod metrics;
mod report;

pub use dialogue::{
    run_interview, run_lesson, Abort, DialogueKind, DialogueScript, Transcript, DEFAULT_LESSON_MESSAGES, TUTOR_TAG,
};
pub use metrics::{
    believability_summary, knowledge_bias, mean, median, pearson, sample_sd, trait_bias, BelievabilitySummary, Stat,
};
pub use report::{load_records, BiasReport, PipelineSummary, ProfileBias, RaterRow};
