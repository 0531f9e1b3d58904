//! Every prompt the system sends, as templates with named `{placeholders}`.
//!
//! Rendering is strict: each placeholder in the template must be supplied and
//! no extra values are accepted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    RetrievalAgent,
    DecisionAgent,
    ChatConvey,
    ChatReask,
    ChatConfirm,
    GenBriefOpening,
    GenDetailedOpening,
    GenPatientResponse,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::RetrievalAgent,
        TemplateId::DecisionAgent,
        TemplateId::ChatConvey,
        TemplateId::ChatReask,
        TemplateId::ChatConfirm,
        TemplateId::GenBriefOpening,
        TemplateId::GenDetailedOpening,
        TemplateId::GenPatientResponse,
    ];
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {{{name}}}")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("template {template}: unexpected value for {{{name}}}")]
    UnknownPlaceholder { template: TemplateId, name: String },
}

const CHAT_RULES: &str = "Rules: 1. Your response must fully adhere to the provided context, no additional information is allowed.
2. Be concise and empathetic, avoid excessive repetition.";

/// The four decision axes, as shown to the classifier.
pub const DECISION_AXES: &str = r#"isOnTopic: Return "Yes" if the response is relevant to the question, otherwise return "No".
isAnswered: Return "Yes" if the response provides a yes or no answer to the question, otherwise return "No".
actualAnswer: Return "Yes" if the patient answers the question affirmatively, "No" if the patient answers negatively.
isUncertain: Return "Yes" if the response expresses uncertainty (e.g., 'maybe', 'not sure', 'probably'), otherwise return "No"."#;

const OPENING_TEMPLATE_BLOCK: &str = "Template for each set:
Sex: Male/Female
Age: A number followed by a unit (e.g., 25 years, 1 month)
Opening Statement: A conversational statement (in quotes) that the patient would use to raise their concern via online triage.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: &'static str,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> PromptTemplate {
        let text = match id {
            TemplateId::RetrievalAgent => RETRIEVAL_AGENT,
            TemplateId::DecisionAgent => DECISION_AGENT,
            TemplateId::ChatConvey => CHAT_CONVEY,
            TemplateId::ChatReask => CHAT_REASK,
            TemplateId::ChatConfirm => CHAT_CONFIRM,
            TemplateId::GenBriefOpening => GEN_BRIEF_OPENING,
            TemplateId::GenDetailedOpening => GEN_DETAILED_OPENING,
            TemplateId::GenPatientResponse => GEN_PATIENT_RESPONSE,
        };
        PromptTemplate { id, text }
    }

    pub fn placeholders(&self) -> BTreeSet<&'static str> {
        scan(self.text).filter_map(|piece| match piece {
            Piece::Placeholder(name) => Some(name),
            Piece::Literal(_) => None,
        })
        .collect()
    }
}

const RETRIEVAL_AGENT: &str = "Your role: You are an assistant supporting an Emergency Department nurse in patient triage.
Your task: Based on the patient's input, identify and return only the name of the appropriate flowchart to use from the provided context.
If there is no relevant flowchart, return: \"no flowchart available\".

Patient input: {patient}

Candidate flowcharts:
{candidates}";

const DECISION_AGENT: &str = "Your role: You are a decision making assistant supporting an Emergency Department nurse in patient triage.
Your task: Based on the patient input, decide whether the patient provided an answer to the question from the triage protocol below.
{axes}
Triage protocol: {question}
Patient input: {response}
Respond with only a JSON object with exactly the keys \"isOnTopic\", \"isAnswered\", \"actualAnswer\" and \"isUncertain\". Use \"Yes\" or \"No\" for each value, and null for \"actualAnswer\" when the patient gave no answer.";

const CHAT_CONVEY: &str = "Your role: You are a nurse responsible for online triage in the Emergency Department.
Patient's last message: {patient_message}
Your task: Convey this to the patient:
{node_text}
{rules}";

const CHAT_REASK: &str = "Your role: You are a nurse responsible for online triage in the Emergency Department.
Patient's last message: {patient_message}
Your task: Patient's response is off-topic, ask this again:
{node_text}
{rules}";

const CHAT_CONFIRM: &str = "Your role: You are a nurse responsible for online triage in the Emergency Department.
Patient's last message: {patient_message}
Your task: Patient's response indicates uncertainty, try confirming this:
{node_text}
{rules}";

const GEN_BRIEF_OPENING: &str = "Task: Generate {num} distinct sets of patient demographics and BRIEF opening statements according to the following flowchart.
Flowchart: {flowchart}
{template_block}
Rules: 1. Ensure diversity in age, sex, and opening statements across the sets. 2. Each opening statement should be no more than 25 words in length.{extra_rules}";

const GEN_DETAILED_OPENING: &str = "Task: Generate {num} distinct sets of patient demographics and DESCRIPTIVE opening statements according to the following flowchart.
Flowchart: {flowchart}
{template_block}
Rules: 1. Ensure diversity in age, sex, and opening statements across the sets. 2. Include relevant context, details, or accompanying symptoms in the opening statements. 3. Each opening statement should be at least 50 words in length.{extra_rules}";

const GEN_PATIENT_RESPONSE: &str = "Task: Provide {num} distinct ways to respond {answer_phrase}to the following question.
Question: {question}
Rules: 1. Responses should reflect natural and everyday language, as patients would phrase their answers conversationally with a triage nurse online.
2. Responses should be {pattern}: {pattern_definition}
Write each response on its own line, numbered 1. to {num}.";

/// Values that are the same for every rendering of a template.
fn fixed_value(id: TemplateId, name: &str) -> Option<&'static str> {
    match (id, name) {
        (TemplateId::DecisionAgent, "axes") => Some(DECISION_AXES),
        (TemplateId::ChatConvey | TemplateId::ChatReask | TemplateId::ChatConfirm, "rules") => Some(CHAT_RULES),
        (TemplateId::GenBriefOpening | TemplateId::GenDetailedOpening, "template_block") => Some(OPENING_TEMPLATE_BLOCK),
        _ => None,
    }
}

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

/// Splits a template into literal text and `{identifier}` placeholders.
fn scan(text: &str) -> impl Iterator<Item = Piece<'_>> {
    let mut rest = text;
    std::iter::from_fn(move || {
        if rest.is_empty() {
            return None;
        }
        if let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            let close = after.find('}');
            let is_ident = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_');
            match close {
                Some(close) if open == 0 && is_ident(&after[..close]) => {
                    let name = &after[..close];
                    rest = &after[close + 1..];
                    Some(Piece::Placeholder(name))
                }
                Some(close) if open > 0 && is_ident(&after[..close]) => {
                    let lit = &rest[..open];
                    rest = &rest[open..];
                    Some(Piece::Literal(lit))
                }
                _ => {
                    // A brace that does not open a placeholder is literal text.
                    let lit = &rest[..open + 1];
                    rest = &rest[open + 1..];
                    Some(Piece::Literal(lit))
                }
            }
        } else {
            let lit = rest;
            rest = "";
            Some(Piece::Literal(lit))
        }
    })
}

/// Renders template `id` with `values`.
pub fn render(id: TemplateId, values: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
    let template = PromptTemplate::get(id);
    let expected = template.placeholders();
    if let Some(extra) = values.keys().find(|k| !expected.contains(*k) || fixed_value(id, k).is_some()) {
        return Err(TemplateError::UnknownPlaceholder { template: id, name: extra.to_string() });
    }
    let mut out = String::with_capacity(template.text.len() + 256);
    for piece in scan(template.text) {
        match piece {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => match fixed_value(id, name).or_else(|| values.get(name).map(String::as_str)) {
                Some(v) => out.push_str(v),
                None => return Err(TemplateError::MissingPlaceholder { template: id, name: name.to_string() }),
            },
        }
    }
    Ok(out)
}

/// Convenience for call sites with a handful of values.
pub fn render_with(id: TemplateId, values: &[(&str, String)]) -> Result<String, TemplateError> {
    let map: BTreeMap<&str, String> = values.iter().cloned().collect();
    render(id, &map)
}
