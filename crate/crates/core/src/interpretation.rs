//! The decision agent: four-axis classification of one patient reply against
//! one question, and the navigation action that follows from it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::flowchart::Answer;
use crate::gateway::prompts::{render_with, TemplateId};
use crate::gateway::{GatewayError, GenerationRequest, TextGenerator, AGENT_TEMPERATURE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpretationError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("malformed structured output: {0}")]
    MalformedStructuredOutput(String),
    #[error("classifier failed: {0}")]
    Classifier(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AxisVerdict {
    pub is_on_topic: bool,
    pub is_answered: bool,
    /// `None` when the reply carries no yes/no answer.
    pub actual_answer: Option<Answer>,
    pub is_uncertain: bool,
}

impl AxisVerdict {
    pub const fn new(is_on_topic: bool, is_answered: bool, actual_answer: Option<Answer>, is_uncertain: bool) -> Self {
        AxisVerdict { is_on_topic, is_answered, actual_answer, is_uncertain }
    }

    /// Consumers reject an answered verdict with no answer.
    pub fn is_well_formed(&self) -> bool {
        !(self.is_answered && self.actual_answer.is_none())
    }

    /// The wire object, with "Yes"/"No" strings and camelCase keys.
    pub fn to_wire(&self) -> Value {
        let yn = |b: bool| if b { "Yes" } else { "No" };
        serde_json::json!({
            "isOnTopic": yn(self.is_on_topic),
            "isAnswered": yn(self.is_answered),
            "actualAnswer": self.actual_answer.map(Answer::as_str),
            "isUncertain": yn(self.is_uncertain),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum NavigationAction {
    Advance { answer: Answer },
    ConfirmUncertain,
    Clarify,
    RestateOffTopic,
}

/// Off-topic outranks uncertainty, which outranks an answer.
pub fn derive_action(v: &AxisVerdict) -> NavigationAction {
    if !v.is_on_topic {
        NavigationAction::RestateOffTopic
    } else if v.is_uncertain {
        NavigationAction::ConfirmUncertain
    } else {
        match (v.is_answered, v.actual_answer) {
            (true, Some(answer)) => NavigationAction::Advance { answer },
            _ => NavigationAction::Clarify,
        }
    }
}

const WIRE_KEYS: [&str; 4] = ["isOnTopic", "isAnswered", "actualAnswer", "isUncertain"];

/// Parses classifier output against the strict four-key schema.
///
/// Keys and Yes/No values match case-insensitively. A fenced code block or
/// prose around a single JSON object is tolerated; anything else is not.
pub fn parse_verdict(raw: &str) -> Result<AxisVerdict, InterpretationError> {
    let bad = |m: String| InterpretationError::MalformedStructuredOutput(m);
    let (start, end) = match (raw.find('{'), raw.rfind('}')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err(bad("no JSON object found".into())),
    };
    let obj: Map<String, Value> = serde_json::from_str(&raw[start..=end]).map_err(|e| bad(format!("not a JSON object: {e}")))?;
    let mut found: [Option<&Value>; 4] = [None; 4];
    for (k, v) in &obj {
        let slot = WIRE_KEYS.iter().position(|w| w.eq_ignore_ascii_case(k)).ok_or_else(|| bad(format!("unexpected field {k:?}")))?;
        if found[slot].replace(v).is_some() {
            return Err(bad(format!("duplicate field {k:?}")));
        }
    }
    let field = |i: usize| found[i].ok_or_else(|| bad(format!("missing field {:?}", WIRE_KEYS[i])));
    let flag = |i: usize| -> Result<bool, InterpretationError> {
        match field(i)? {
            Value::Bool(b) => Ok(*b),
            Value::String(s) if s.eq_ignore_ascii_case("yes") => Ok(true),
            Value::String(s) if s.eq_ignore_ascii_case("no") => Ok(false),
            other => Err(bad(format!("{} must be \"Yes\" or \"No\", got {other}", WIRE_KEYS[i]))),
        }
    };
    let answer = match field(2)? {
        Value::Null => None,
        Value::String(s) if s.eq_ignore_ascii_case("yes") => Some(Answer::Yes),
        Value::String(s) if s.eq_ignore_ascii_case("no") => Some(Answer::No),
        other => return Err(bad(format!("actualAnswer must be \"Yes\", \"No\" or null, got {other}"))),
    };
    let v = AxisVerdict::new(flag(0)?, flag(1)?, answer, flag(3)?);
    if !v.is_well_formed() {
        return Err(bad("isAnswered is Yes but actualAnswer is null".into()));
    }
    Ok(v)
}

/// Produces raw structured output for one (question, reply) pair.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify_raw(&self, question: &str, response: &str) -> Result<String, GatewayError>;
    /// Extra attempts granted when the output fails to parse.
    fn malformed_retries(&self) -> u32 {
        0
    }
}

pub fn classify_response(question: &str, response: &str, c: &dyn Classifier) -> Result<AxisVerdict, InterpretationError> {
    if question.trim().is_empty() {
        return Err(InterpretationError::EmptyQuestion);
    }
    let mut attempt = 0;
    loop {
        let raw = c.classify_raw(question, response)?;
        match parse_verdict(&raw) {
            Ok(v) => return Ok(v),
            Err(e) if attempt < c.malformed_retries() => {
                attempt += 1;
                log::warn!("classifier {} output rejected ({e}); retry {attempt}", c.name());
            }
            Err(e) => return Err(e),
        }
    }
}

/// Word lists driving [`rule_based_classify`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    pub hedges: Vec<String>,
    pub yes: Vec<String>,
    pub no: Vec<String>,
    pub stopwords: Vec<String>,
}

const HEDGES: &[&str] = &["not sure", "maybe", "i guess", "possibly", "i doubt", "kind of", "i don't know", "probably", "it depends"];
const YES: &[&str] = &["yes", "yeah", "yep", "uh-huh", "absolutely", "definitely", "that's right", "for sure"];
const NO: &[&str] = &["no", "nope", "not at all", "never", "negative"];
const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be", "been", "before", "being",
    "both", "but", "by", "can", "could", "did", "do", "does", "doing", "during", "each", "either", "for", "from", "had", "has",
    "have", "having", "he", "her", "here", "him", "his", "how", "i", "i'm", "i've", "if", "in", "into", "is", "it", "it's", "its",
    "just", "like", "me", "more", "most", "my", "of", "off", "on", "one", "or", "other", "our", "out", "over", "recently", "she",
    "so", "some", "such", "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "too",
    "up", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "why", "will", "with", "would", "you",
    "your", "yours", "oh", "well", "really", "actually", "lately", "now", "today", "get", "got", "since", "ever",
    "still", "much", "many", "lot", "way", "things", "thing", "know", "think", "feel", "feeling", "felt", "seem", "seems",
];

impl Default for Lexicon {
    fn default() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Lexicon { hedges: own(HEDGES), yes: own(YES), no: own(NO), stopwords: own(STOPWORDS) }
    }
}

impl Lexicon {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Lowercased word tokens; apostrophes stay inside words, other punctuation splits.
fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['\u{2019}', '\u{2018}'], "'")
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Token spans `[start, end)` where `phrase` occurs as whole words.
fn phrase_spans(tokens: &[String], phrase: &str) -> Vec<(usize, usize)> {
    let p = words(phrase);
    if p.is_empty() || p.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - p.len()).filter(|&i| tokens[i..i + p.len()] == p[..]).map(|i| (i, i + p.len())).collect()
}

fn content_tokens(text: &str, stopwords: &BTreeSet<&str>) -> BTreeSet<String> {
    words(text)
        .into_iter()
        .filter(|t| t.len() > 1 && !stopwords.contains(t.as_str()) && !t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| match t.strip_suffix('s') {
            Some(stem) if stem.len() > 2 && !stem.ends_with('s') => stem.to_string(),
            _ => t,
        })
        .collect()
}

/// Deterministic lexicon classifier.
///
/// Uncertain iff a hedge phrase occurs. Polarity comes from the earliest
/// yes/no phrase lying outside every hedge span. On-topic iff there is a
/// polarity, a hedge, or a shared content word with the question. Answered iff
/// a polarity was found.
pub fn rule_based_classify(lex: &Lexicon, question: &str, response: &str) -> AxisVerdict {
    let tokens = words(response);
    let hedge_spans: Vec<(usize, usize)> = lex.hedges.iter().flat_map(|h| phrase_spans(&tokens, h)).collect();
    let in_hedge = |(s, e): (usize, usize)| hedge_spans.iter().any(|&(hs, he)| s < he && hs < e);
    let polarity = [(Answer::Yes, &lex.yes), (Answer::No, &lex.no)]
        .into_iter()
        .flat_map(|(answer, phrases)| {
            phrases.iter().flat_map(|p| phrase_spans(&tokens, p)).filter(|&span| !in_hedge(span)).map(move |(s, e)| (s, std::cmp::Reverse(e), answer))
        })
        .min()
        .map(|(_, _, answer)| answer);
    let uncertain = !hedge_spans.is_empty();
    let stop: BTreeSet<&str> = lex.stopwords.iter().map(String::as_str).collect();
    let overlap = !content_tokens(question, &stop).is_disjoint(&content_tokens(response, &stop));
    AxisVerdict {
        is_on_topic: polarity.is_some() || uncertain || overlap,
        is_answered: polarity.is_some(),
        actual_answer: polarity,
        is_uncertain: uncertain,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleBasedClassifier {
    pub lexicon: Lexicon,
}

impl RuleBasedClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        RuleBasedClassifier { lexicon }
    }

    pub fn verdict(&self, question: &str, response: &str) -> AxisVerdict {
        rule_based_classify(&self.lexicon, question, response)
    }
}

impl Classifier for RuleBasedClassifier {
    fn name(&self) -> &str {
        "rule-based"
    }

    fn classify_raw(&self, question: &str, response: &str) -> Result<String, GatewayError> {
        Ok(self.verdict(question, response).to_wire().to_string())
    }
}

/// Classifies with a text generator and the decision-agent prompt.
pub struct LlmClassifier<G> {
    generator: G,
    malformed_retries: u32,
}

impl<G: TextGenerator> LlmClassifier<G> {
    pub fn new(generator: G) -> Self {
        LlmClassifier { generator, malformed_retries: 2 }
    }

    pub fn with_malformed_retries(mut self, n: u32) -> Self {
        self.malformed_retries = n;
        self
    }

    pub fn prompt(question: &str, response: &str) -> Result<String, GatewayError> {
        Ok(render_with(TemplateId::DecisionAgent, &[("question", question.to_string()), ("response", response.to_string())])?)
    }
}

impl<G: TextGenerator> Classifier for LlmClassifier<G> {
    fn name(&self) -> &str {
        self.generator.name()
    }

    fn classify_raw(&self, question: &str, response: &str) -> Result<String, GatewayError> {
        let prompt = Self::prompt(question, response)?;
        self.generator.generate(&GenerationRequest::new(prompt).with_temperature(AGENT_TEMPERATURE))
    }

    fn malformed_retries(&self) -> u32 {
        self.malformed_retries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization() {
        assert_eq!(words("Kind of-I\u{2019}ve, UH-HUH!"), vec!["kind", "of", "i've", "uh", "huh"]);
        assert_eq!(phrase_spans(&words("no, not at all no"), "no"), vec![(0, 1), (4, 5)]);
        assert!(phrase_spans(&words("nobody knows"), "no").is_empty());
    }

    #[test]
    fn parse_accepts_case_variants_and_fences() {
        let raw = "```json\n{\"ISONTOPIC\": \"yes\", \"isanswered\": \"YES\", \"actualAnswer\": \"no\", \"isUncertain\": \"No\"}\n```";
        assert_eq!(parse_verdict(raw).unwrap(), AxisVerdict::new(true, true, Some(Answer::No), false));
    }

    #[test]
    fn parse_rejects_drift() {
        let cases = [
            r#"{"isOnTopic":"Yes","isAnswered":"Yes","actualAnswer":null,"isUncertain":"No"}"#,
            r#"{"isOnTopic":"Yes","isAnswered":"No","actualAnswer":null}"#,
            r#"{"isOnTopic":"Yes","isAnswered":"No","actualAnswer":null,"isUncertain":"No","reason":"x"}"#,
            r#"{"isOnTopic":"Sure","isAnswered":"No","actualAnswer":null,"isUncertain":"No"}"#,
            r#"{"isOnTopic":"Yes","isAnswered":"No","actualAnswer":"Maybe","isUncertain":"No"}"#,
            r#"{"isOnTopic":"Yes","isontopic":"Yes","isAnswered":"No","actualAnswer":null,"isUncertain":"No"}"#,
            "Yes",
        ];
        for c in cases {
            assert!(matches!(parse_verdict(c), Err(InterpretationError::MalformedStructuredOutput(_))), "{c}");
        }
    }
}
