//! Prompt templates for every model call the workbench makes.
//!
//! Templates are plain string assembly so that golden files can pin them
//! byte-for-byte. Knowledge components are always shown with their 0-based
//! index.

use std::fmt::Write;

use crate::model::{
    likert_label, KnowledgeComponent, KnowledgeState, Message, Pipeline, Role, StudentProfile,
    Topic, Trait, TraitRatings,
};

/// Label of the extra routing option that keeps the current node.
pub const NONE_OF_THE_ABOVE: &str = "None of the above";

/// Closing line of the routing prompt.
pub const MASTER_ANSWER_LINE: &str = "Answer (write in numbers):";

/// Reconstructed wording of the two acquisition rules.
pub const REFLECT_RULES: [&str; 2] = [
    "The teacher fully and correctly explained the component in the conversation.",
    "The student themselves correctly stated the component.",
];

pub const ANTI_REPETITION: &str =
    "Do not repeat what you have already said in this conversation; reply with new wording each time.";

fn transcript(messages: &[Message], agent_label: &str) -> String {
    messages
        .iter()
        .map(|m| {
            let who = match m.role {
                Role::Student => "Student",
                Role::Pca => agent_label,
            };
            format!("{who}: {}", m.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Routing prompt asking which child behavior best matches the student's
/// latest message. Options are numbered from 1 and followed by a
/// none-of-the-above option.
pub fn master_prompt(tail: &[Message], options: &[&str]) -> String {
    let mut out = String::from(
        "The following passage represents a conversation between a student and a chatbot. \
         Choose the most appropriate student response from the options. \
         You should choose only one answer and write it in numbers.\n\nPassage:\n",
    );
    out.push_str(&transcript(tail, "Chatbot"));
    out.push_str("\n\nOptions:\n");
    for (i, opt) in options.iter().chain(std::iter::once(&NONE_OF_THE_ABOVE)).enumerate() {
        let _ = writeln!(out, "{}. {opt}", i + 1);
    }
    out.push('\n');
    out.push_str(MASTER_ANSWER_LINE);
    out
}

fn bullet_list(components: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    components
        .into_iter()
        .map(|c| format!("- {}\n", c.as_ref()))
        .collect()
}

/// System prompt for the tutoring agent while a node is active.
pub fn pca_system_prompt(topic: &Topic, instruction: &str, components: &[KnowledgeComponent]) -> String {
    format!(
        "You are {teacher}.\n\
         Your subject is {subject}, and the elements that students need to learn are as follows.\n\
         {list}\n\
         Follow the instructions below to teach {learner}. You must follow the contents of <instruction> exactly. \
         Do not ask for additional questions if there is no direct mention.\n\
         You should explain briefly and concisely in 2-3 lines.\n\
         <instruction>\n{instruction}\n</instruction>\n",
        teacher = topic.teacher_role,
        subject = topic.subject,
        learner = topic.learner,
        list = bullet_list(components.iter().map(|c| &c.text)),
    )
}

/// The twelve inventory statements grouped by trait, each followed by its
/// rating as `N (label)`.
pub fn ratings_block(ratings: &TraitRatings) -> String {
    let mut out = String::new();
    for (i, t) in Trait::ALL.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "<{}>", t.tag());
        for (statement, rating) in t.statements().iter().zip(ratings.items(*t)) {
            let _ = writeln!(out, "- {statement}: {rating} ({})", likert_label(rating));
        }
        let _ = writeln!(out, "</{}>", t.tag());
    }
    out
}

/// Prompt that turns raw ratings into an editable trait overview.
pub fn interpret_prompt(topic: &Topic, ratings: &TraitRatings) -> String {
    format!(
        "You are a playwright who describes the psychology and behavior of characters well.\n\
         You need to describe {learner}, and the direct responses to the student's goal commitment, \
         motivation, self-efficacy, and stress are below.\n\n\
         {block}\n\
         Based on the information above, describe the student profile in detail about the student's \
         goal commitment, motivation, self-efficacy, and stress.\n\
         Interpret each category as independently as possible, and it should be interpreted as high, \
         medium, and low, not positive/negative.\n\
         For 'neutral,' you must write it in a neutral way.\n",
        learner = topic.learner,
        block = ratings_block(ratings),
    )
}

/// Prompt that asks which not-yet-acquired components the latest exchange
/// taught. Only components missing from `state` are listed.
pub fn reflect_prompt(tail: &[Message], components: &[KnowledgeComponent], state: &KnowledgeState) -> String {
    let mut list = String::new();
    for c in components.iter().filter(|c| !state.is_acquired(c.index)) {
        let _ = writeln!(list, "{}. {}", c.index, c.text);
    }
    format!(
        "You are a middle school teacher who evaluates students' knowledge. \
         You need to check what knowledge components the student has acquired from the conversation.\n\
         Read the conversation between the student and the teacher.\n\n\
         <conversation>\n{conversation}\n</conversation>\n\n\
         <knowledge-components>\n{list}</knowledge-components>\n\n\
         Output the indices of the knowledge components that meet the following two rules.\n\
         Rule 1. {rule1}\n\
         Rule 2. {rule2}\n\n\
         First, describe the knowledge component that meets the rule, and output only the numbers in the format of\n\
         0, 1, 2 at the last line.\n\
         If there is no knowledge component that meets the rule, output null instead.\n",
        conversation = transcript(tail, "Teacher"),
        rule1 = REFLECT_RULES[0],
        rule2 = REFLECT_RULES[1],
    )
}

/// The pipeline-specific part of the Respond prompt: how the student
/// behaves outside of subject knowledge. `None` for knowledge-only students.
pub fn behavior_block(profile: &StudentProfile) -> Option<String> {
    let content = match profile.pipeline {
        Pipeline::KnowledgeOnly => return None,
        Pipeline::Ours => format!("{}\n", profile.overview_text().trim_end()),
        Pipeline::Baseline => format!(
            "The direct responses to the student's goal commitment, motivation, self-efficacy, \
             and stress are below.\n\n{}",
            ratings_block(&profile.ratings)
        ),
    };
    Some(format!(
        "For questions not related to science knowledge, answer according to the following.\n\
         You should behave as follows in the conversation.\n\
         <behavior>\n{content}</behavior>\n\n"
    ))
}

/// System prompt for the simulated student's reply.
pub fn respond_system_prompt(
    topic: &Topic,
    profile: &StudentProfile,
    state: &KnowledgeState,
    components: &[KnowledgeComponent],
    anti_repetition: bool,
) -> String {
    let who = if profile.name.trim().is_empty() {
        topic.learner.clone()
    } else {
        format!("{}, {}", profile.name.trim(), topic.learner)
    };
    let known = components
        .iter()
        .filter(|c| state.is_acquired(c.index))
        .map(|c| &c.text);
    let mut out = format!(
        "You are {who}.\n\
         Forget all the existing knowledge about {topic}.\n\
         Your conversation partner is {teacher}.\n\n\
         You only know the following. Answer questions beyond this content with \"I don't know.\" or \"I can't remember.\"\n\
         Never answer questions that cannot be answered by combining the sentences below.\n\
         <knowledge>\n{list}</knowledge>\n\n",
        topic = topic.topic,
        teacher = topic.teacher_role,
        list = bullet_list(known),
    );
    if let Some(block) = behavior_block(profile) {
        out.push_str(&block);
    }
    out.push_str("Answer in 2 lines or less. Answer clearly without detailed reasons or additional explanations.\n");
    if anti_repetition {
        out.push_str(ANTI_REPETITION);
        out.push('\n');
    }
    out
}

/// System prompt for the lesson-dialogue tutor.
pub fn tutor_system_prompt(topic: &Topic, components: &[KnowledgeComponent]) -> String {
    format!(
        "You are {teacher}. You are giving a review lesson on {topic} to {learner}.\n\
         Teach the following content over the course of the conversation, one step at a time, \
         and adapt to what the student says.\n\
         {list}\n\
         Write one short message of 2-3 lines per turn and ask questions to check the student's understanding.\n",
        teacher = topic.teacher_role,
        topic = topic.topic,
        learner = topic.learner,
        list = bullet_list(components.iter().map(|c| &c.text)),
    )
}
