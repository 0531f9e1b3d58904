use std::path::PathBuf;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};
use triage_core::flowchart::Answer;
use triage_core::gateway::{GatewayError, GenerationRequest, StubGenerator, TextGenerator};
use triage_core::interpretation::*;

fn rules(q: &str, r: &str) -> AxisVerdict {
    classify_response(q, r, &RuleBasedClassifier::default()).unwrap()
}

/// Every verdict the parser accepts: 2 x 2 x 2 x 3 minus the four answered-without-answer rows.
fn all_verdicts() -> Vec<AxisVerdict> {
    let mut out = Vec::new();
    for on in [false, true] {
        for answered in [false, true] {
            for answer in [None, Some(Answer::Yes), Some(Answer::No)] {
                for unc in [false, true] {
                    let v = AxisVerdict::new(on, answered, answer, unc);
                    if !(answered && answer.is_none()) {
                        out.push(v);
                    }
                }
            }
        }
    }
    out
}

#[test]
fn worked_example() {
    let v = rules("Have you had similar episodes of pain that come and go?", "No, this is the first time");
    assert_eq!(v, AxisVerdict::new(true, true, Some(Answer::No), false));
    assert_eq!(derive_action(&v), NavigationAction::Advance { answer: Answer::No });
}

#[test]
fn spec_examples_for_rule_classifier() {
    assert_eq!(rules("Is the pain severe?", ""), AxisVerdict::new(false, false, None, false));
    assert_eq!(
        rules("Have you checked your temperature?", "I'm not sure. I haven't checked yet."),
        AxisVerdict::new(true, false, None, true)
    );
    assert_eq!(rules("Are you over age 50?", "Yep."), AxisVerdict::new(true, true, Some(Answer::Yes), false));
    assert_eq!(
        rules("Do you have pain when you urinate?", "Oh, I've been organizing my closet lately."),
        AxisVerdict::new(false, false, None, false)
    );
    let weak = rules("Did you injure your head recently?", "I doubt it, but I guess it's possible");
    assert!(weak.is_on_topic && weak.is_uncertain);
    assert_eq!(derive_action(&weak), NavigationAction::ConfirmUncertain);
}

#[test]
fn polarity_earliest_match_and_hedge_spans() {
    assert_eq!(rules("Is it sore?", "Yes, but not at all today").actual_answer, Some(Answer::Yes));
    assert_eq!(rules("Is it sore?", "Never. Yes it used to be").actual_answer, Some(Answer::No));
    // "sure" inside "not sure" is not a yes; "for sure" is.
    assert_eq!(rules("Is it sore?", "Not sure").actual_answer, None);
    assert_eq!(rules("Is it sore?", "For sure").actual_answer, Some(Answer::Yes));
    assert_eq!(rules("Is it sore?", "Nobody knows").actual_answer, None);
    let maybe_yes = rules("Is it sore?", "Maybe yes");
    assert_eq!(maybe_yes, AxisVerdict::new(true, true, Some(Answer::Yes), true));
    assert_eq!(derive_action(&maybe_yes), NavigationAction::ConfirmUncertain);
}

/// Independent statement of the decision table, row by row.
fn expected_action(v: &AxisVerdict) -> NavigationAction {
    match (v.is_on_topic, v.is_uncertain, v.is_answered, v.actual_answer) {
        (false, _, _, _) => NavigationAction::RestateOffTopic,
        (true, true, _, _) => NavigationAction::ConfirmUncertain,
        (true, false, true, Some(a)) => NavigationAction::Advance { answer: a },
        (true, false, true, None) => unreachable!("malformed"),
        (true, false, false, _) => NavigationAction::Clarify,
    }
}

#[test]
fn decision_table_exhaustive() {
    let verdicts = all_verdicts();
    assert_eq!(verdicts.len(), 20);
    for v in &verdicts {
        assert_eq!(derive_action(v), expected_action(v), "{v:?}");
    }
    let off: Vec<_> = verdicts.iter().filter(|v| !v.is_on_topic).collect();
    assert_eq!(off.len(), 10);
    assert!(off.iter().all(|v| derive_action(v) == NavigationAction::RestateOffTopic));
    assert_eq!(
        derive_action(&AxisVerdict::new(true, true, Some(Answer::Yes), true)),
        NavigationAction::ConfirmUncertain
    );
}

#[test]
fn advance_only_when_certain_answer_on_topic() {
    for v in all_verdicts() {
        let advanced = matches!(derive_action(&v), NavigationAction::Advance { .. });
        let certain = v.is_on_topic && v.is_answered && !v.is_uncertain && v.actual_answer.is_some();
        assert_eq!(advanced, certain, "{v:?}");
        if let NavigationAction::Advance { answer } = derive_action(&v) {
            assert_eq!(Some(answer), v.actual_answer);
        }
    }
}

#[test]
fn wire_round_trip() {
    for v in all_verdicts() {
        let wire = v.to_wire().to_string();
        assert_eq!(parse_verdict(&wire).unwrap(), v);
        assert_eq!(parse_verdict(&wire).unwrap().to_wire().to_string(), wire);
    }
}

struct Scripted {
    replies: Vec<&'static str>,
    calls: AtomicU32,
}

impl TextGenerator for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        assert!(req.prompt.contains("Triage protocol: Are you over 40?"));
        let i = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
        Ok(self.replies[i.min(self.replies.len() - 1)].to_string())
    }
}

#[test]
fn llm_classifier_retries_malformed_output() {
    let good = r#"{"isOnTopic":"Yes","isAnswered":"Yes","actualAnswer":"Yes","isUncertain":"No"}"#;
    let gen = Scripted { replies: vec!["I think yes", good], calls: AtomicU32::new(0) };
    let c = LlmClassifier::new(gen);
    assert_eq!(classify_response("Are you over 40?", "Yep.", &c).unwrap(), AxisVerdict::new(true, true, Some(Answer::Yes), false));

    let gen = Scripted { replies: vec!["{}"], calls: AtomicU32::new(0) };
    let c = LlmClassifier::new(gen).with_malformed_retries(2);
    assert!(matches!(classify_response("Are you over 40?", "Yep.", &c), Err(InterpretationError::MalformedStructuredOutput(_))));
}

#[test]
fn llm_classifier_surfaces_provider_errors() {
    let stub = StubGenerator::new("down").with_fallback(|_| Err(GatewayError::Auth { status: 401 }));
    let err = classify_response("Q?", "yes", &LlmClassifier::new(stub)).unwrap_err();
    assert_eq!(err, InterpretationError::Classifier(GatewayError::Auth { status: 401 }));
    assert_eq!(classify_response(" ", "yes", &RuleBasedClassifier::default()).unwrap_err(), InterpretationError::EmptyQuestion);
}

#[test]
fn lexicon_is_configurable() {
    let mut lex = Lexicon::default();
    lex.yes.push("aye".into());
    lex.hedges.push("hard to say".into());
    let json = serde_json::to_string(&lex).unwrap();
    let c = RuleBasedClassifier::new(Lexicon::from_json(&json).unwrap());
    assert_eq!(c.verdict("Q?", "Aye").actual_answer, Some(Answer::Yes));
    assert!(c.verdict("Q?", "It's hard to say").is_uncertain);
    assert!(Lexicon::from_json(r#"{"hedges":[]}"#).is_err());
}

#[derive(Debug, Deserialize)]
struct Sample {
    model: String,
    pattern: u8,
    question: String,
    label: String,
    response: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Golden {
    model: String,
    pattern: u8,
    label: String,
    response: String,
    verdict: serde_json::Value,
    action: NavigationAction,
}

#[test]
fn golden_rule_verdicts_over_published_samples() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/interpretation");
    let samples: Vec<Sample> = std::fs::read_to_string(dir.join("table4_samples.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(samples.len() >= 60);
    let c = RuleBasedClassifier::default();
    let actual: Vec<Golden> = samples
        .iter()
        .map(|s| {
            let v = c.verdict(&s.question, &s.response);
            Golden {
                model: s.model.clone(),
                pattern: s.pattern,
                label: s.label.clone(),
                response: s.response.clone(),
                verdict: v.to_wire(),
                action: derive_action(&v),
            }
        })
        .collect();
    let golden_path = dir.join("table4_rule_verdicts.jsonl");
    if std::env::var_os("TRIAGE_UPDATE_GOLDEN").is_some() {
        let text: String = actual.iter().map(|g| serde_json::to_string(g).unwrap() + "\n").collect();
        std::fs::write(&golden_path, text).unwrap();
    }
    let expected: Vec<Golden> = std::fs::read_to_string(&golden_path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(actual.len(), expected.len());
    for (a, e) in actual.iter().zip(&expected) {
        assert_eq!(a, e);
    }
}
