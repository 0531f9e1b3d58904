//! Labeled synthetic records and their JSON Lines encoding.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::demographics::{AgeUnit, Demographics, DemographicsError, Sex};
use crate::flowchart::{Answer, NodeId};

use super::EvalError;

pub const BRIEF_MAX_WORDS: usize = 25;
pub const DETAILED_MIN_WORDS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpeningStyle {
    Brief,
    Detailed,
}

impl OpeningStyle {
    pub const ALL: [OpeningStyle; 2] = [OpeningStyle::Brief, OpeningStyle::Detailed];

    pub fn admits(self, text: &str) -> bool {
        let words = word_count(text);
        match self {
            OpeningStyle::Brief => words <= BRIEF_MAX_WORDS,
            OpeningStyle::Detailed => words >= DETAILED_MIN_WORDS,
        }
    }
}

impl fmt::Display for OpeningStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpeningStyle::Brief => "Brief",
            OpeningStyle::Detailed => "Detailed",
        })
    }
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpeningStatementRecord {
    pub id: String,
    pub label_flowchart_id: String,
    pub sex: Sex,
    pub age_value: u32,
    pub age_unit: AgeUnit,
    pub style: OpeningStyle,
    pub text: String,
    pub generator: String,
}

impl OpeningStatementRecord {
    pub fn demographics(&self) -> Result<Demographics, DemographicsError> {
        Demographics::new(self.sex, self.age_value, self.age_unit)
    }
}

/// The five synthetic response styles, numbered 1 to 5 in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    Brief,
    Descriptive,
    Weak,
    Uncertain,
    OffTopic,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [Pattern::Brief, Pattern::Descriptive, Pattern::Weak, Pattern::Uncertain, Pattern::OffTopic];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    /// Patterns 1 to 3 are generated once per polar answer.
    pub fn takes_answer(self) -> bool {
        matches!(self, Pattern::Brief | Pattern::Descriptive | Pattern::Weak)
    }

    /// Short characterisation used in the generation prompt.
    pub fn summary(self) -> &'static str {
        match self {
            Pattern::Brief => "Conclusive and minimalistic",
            Pattern::Descriptive => "Conclusive and descriptive",
            Pattern::Weak => "Vague or partially conclusive",
            Pattern::Uncertain => "Inconclusive",
            Pattern::OffTopic => "Irrelevant",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            Pattern::Brief => "Responses that clearly answer the question without additional reasoning, details, or repetition of the question.",
            Pattern::Descriptive => "Responses that clearly answer the question and provide additional details, context, or elaboration to support the answer.",
            Pattern::Weak => "Responses that lean towards an answer but include uncertainty or hedge the statement with ambiguous language.",
            Pattern::Uncertain => "Responses that remain uncertain due to a lack of sufficient information, neither confirming nor denying the question.",
            Pattern::OffTopic => "Responses that are completely unrelated to the question but still make basic conversational sense.",
        }
    }

    /// The only labels a record of this pattern may carry.
    pub fn labels(self) -> &'static [AnswerLabel] {
        match self {
            Pattern::Brief | Pattern::Descriptive | Pattern::Weak => &[AnswerLabel::Yes, AnswerLabel::No],
            Pattern::Uncertain => &[AnswerLabel::NotAnswered],
            Pattern::OffTopic => &[AnswerLabel::OffTopic],
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::Brief => "Brief",
            Pattern::Descriptive => "Descriptive",
            Pattern::Weak => "Weak",
            Pattern::Uncertain => "Uncertain",
            Pattern::OffTopic => "OffTopic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerLabel {
    Yes,
    No,
    NotAnswered,
    OffTopic,
}

impl AnswerLabel {
    pub const ALL: [AnswerLabel; 4] = [AnswerLabel::Yes, AnswerLabel::No, AnswerLabel::NotAnswered, AnswerLabel::OffTopic];

    pub fn answer(self) -> Option<Answer> {
        match self {
            AnswerLabel::Yes => Some(Answer::Yes),
            AnswerLabel::No => Some(Answer::No),
            AnswerLabel::NotAnswered | AnswerLabel::OffTopic => None,
        }
    }
}

impl From<Answer> for AnswerLabel {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Yes => AnswerLabel::Yes,
            Answer::No => AnswerLabel::No,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientResponseRecord {
    pub id: String,
    pub flowchart_id: String,
    pub node_id: NodeId,
    pub question: String,
    pub pattern: Pattern,
    pub answer_label: AnswerLabel,
    pub text: String,
    pub generator: String,
}

impl PatientResponseRecord {
    pub fn is_consistent(&self) -> bool {
        self.pattern.labels().contains(&self.answer_label)
    }
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON Lines, skipping blank lines. `origin` names the source in errors.
pub fn from_jsonl<T: DeserializeOwned>(text: &str, origin: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Record { origin: origin.to_string(), line: i + 1, detail: e.to_string() }))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), EvalError> {
    std::fs::write(path, to_jsonl(records)).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    from_jsonl(&text, &path.display().to_string())
}

/// Reads opening statements, warning on records outside their style's word bound.
pub fn read_opening_statements(path: &Path) -> Result<Vec<OpeningStatementRecord>, EvalError> {
    let records: Vec<OpeningStatementRecord> = read_jsonl(path)?;
    for r in records.iter().filter(|r| !r.style.admits(&r.text)) {
        log::warn!("{}: {} statement has {} words", r.id, r.style, word_count(&r.text));
    }
    Ok(records)
}

/// Reads patient responses, rejecting pattern/label combinations that cannot occur.
pub fn read_patient_responses(path: &Path) -> Result<Vec<PatientResponseRecord>, EvalError> {
    let records: Vec<PatientResponseRecord> = read_jsonl(path)?;
    if let Some(bad) = records.iter().find(|r| !r.is_consistent()) {
        return Err(EvalError::InconsistentLabel { id: bad.id.clone(), pattern: bad.pattern, label: bad.answer_label });
    }
    Ok(records)
}
