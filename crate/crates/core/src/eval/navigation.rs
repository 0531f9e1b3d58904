//! Replaying patient responses through a classifier and categorising the verdicts.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::interpretation::{classify_response, AxisVerdict, Classifier};

use super::records::{AnswerLabel, Pattern, PatientResponseRecord};
use super::{par_map, ratio, POOLED};

/// Where one verdict falls for its record's pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NavCategory {
    #[serde(rename = "A_CertainCorrect")]
    ACertainCorrect,
    #[serde(rename = "B_UncertainCorrect")]
    BUncertainCorrect,
    #[serde(rename = "C_UncertainIncorrect")]
    CUncertainIncorrect,
    #[serde(rename = "D_CertainIncorrect")]
    DCertainIncorrect,
    #[serde(rename = "A_CertainUnanswered")]
    ACertainUnanswered,
    #[serde(rename = "B_UncertainUnanswered")]
    BUncertainUnanswered,
    #[serde(rename = "C_UncertainAnswered")]
    CUncertainAnswered,
    #[serde(rename = "D_CertainAnswered")]
    DCertainAnswered,
    OffTopicDetected,
    OffTopicMissed,
}

impl NavCategory {
    pub const ALL: [NavCategory; 10] = [
        NavCategory::ACertainCorrect,
        NavCategory::BUncertainCorrect,
        NavCategory::CUncertainIncorrect,
        NavCategory::DCertainIncorrect,
        NavCategory::ACertainUnanswered,
        NavCategory::BUncertainUnanswered,
        NavCategory::CUncertainAnswered,
        NavCategory::DCertainAnswered,
        NavCategory::OffTopicDetected,
        NavCategory::OffTopicMissed,
    ];

    /// The categories a record of `pattern` can fall into.
    pub fn for_pattern(pattern: Pattern) -> &'static [NavCategory] {
        match pattern {
            Pattern::Brief | Pattern::Descriptive | Pattern::Weak => &Self::ALL[0..4],
            Pattern::Uncertain => &Self::ALL[4..8],
            Pattern::OffTopic => &Self::ALL[8..10],
        }
    }

    pub fn is_acceptable(self) -> bool {
        !matches!(self, NavCategory::DCertainIncorrect | NavCategory::DCertainAnswered | NavCategory::OffTopicMissed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NavCategory::ACertainCorrect => "A_CertainCorrect",
            NavCategory::BUncertainCorrect => "B_UncertainCorrect",
            NavCategory::CUncertainIncorrect => "C_UncertainIncorrect",
            NavCategory::DCertainIncorrect => "D_CertainIncorrect",
            NavCategory::ACertainUnanswered => "A_CertainUnanswered",
            NavCategory::BUncertainUnanswered => "B_UncertainUnanswered",
            NavCategory::CUncertainAnswered => "C_UncertainAnswered",
            NavCategory::DCertainAnswered => "D_CertainAnswered",
            NavCategory::OffTopicDetected => "OffTopicDetected",
            NavCategory::OffTopicMissed => "OffTopicMissed",
        }
    }
}

impl fmt::Display for NavCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn categorize(v: &AxisVerdict, pattern: Pattern, label: AnswerLabel) -> NavCategory {
    use NavCategory::*;
    match pattern {
        Pattern::Brief | Pattern::Descriptive | Pattern::Weak => {
            let correct = v.is_answered && v.actual_answer.is_some() && v.actual_answer == label.answer();
            match (v.is_uncertain, correct) {
                (false, true) => ACertainCorrect,
                (true, true) => BUncertainCorrect,
                (true, false) => CUncertainIncorrect,
                (false, false) => DCertainIncorrect,
            }
        }
        Pattern::Uncertain => match (v.is_uncertain, v.is_answered) {
            (false, false) => ACertainUnanswered,
            (true, false) => BUncertainUnanswered,
            (true, true) => CUncertainAnswered,
            (false, true) => DCertainAnswered,
        },
        Pattern::OffTopic => {
            if v.is_on_topic {
                OffTopicMissed
            } else {
                OffTopicDetected
            }
        }
    }
}

/// One record's result. Exactly one of `category` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationOutcome {
    pub record_id: String,
    pub generator: String,
    pub pattern: Pattern,
    pub verdict: Option<AxisVerdict>,
    pub category: Option<NavCategory>,
    pub error: Option<String>,
}

pub fn navigation_outcome(record: &PatientResponseRecord, classifier: &dyn Classifier) -> NavigationOutcome {
    let (verdict, category, error) = match classify_response(&record.question, &record.text, classifier) {
        Ok(v) => (Some(v), Some(categorize(&v, record.pattern, record.answer_label)), None),
        Err(e) => {
            log::warn!("{}: classification failed: {e}", record.id);
            (None, None, Some(e.to_string()))
        }
    };
    NavigationOutcome { record_id: record.id.clone(), generator: record.generator.clone(), pattern: record.pattern, verdict, category, error }
}

/// Category counts and shares for one generator and pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCell {
    pub pattern: Pattern,
    /// Classified records; the denominator of every share.
    pub n: usize,
    /// Records whose classification failed.
    pub excluded: usize,
    pub counts: BTreeMap<NavCategory, usize>,
    /// Share of `n` per category; `None` when `n` is zero.
    pub shares: BTreeMap<NavCategory, Option<f64>>,
    pub acceptable: Option<f64>,
    pub unacceptable: Option<f64>,
}

impl PatternCell {
    fn of(pattern: Pattern, outcomes: &[&NavigationOutcome]) -> Self {
        let mine: Vec<_> = outcomes.iter().filter(|o| o.pattern == pattern).collect();
        let classified: Vec<NavCategory> = mine.iter().filter_map(|o| o.category).collect();
        let n = classified.len();
        let counts: BTreeMap<NavCategory, usize> = NavCategory::for_pattern(pattern)
            .iter()
            .map(|c| (*c, classified.iter().filter(|x| *x == c).count()))
            .collect();
        let shares = counts.iter().map(|(c, k)| (*c, ratio(*k, n))).collect();
        let good = classified.iter().filter(|c| c.is_acceptable()).count();
        PatternCell {
            pattern,
            n,
            excluded: mine.len() - n,
            counts,
            shares,
            acceptable: ratio(good, n),
            unacceptable: ratio(n - good, n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNavigation {
    pub generator: String,
    pub n: usize,
    pub excluded: usize,
    /// Acceptable share over every classified record of this generator.
    pub acceptable: Option<f64>,
    /// One cell per pattern, in pattern order.
    pub patterns: Vec<PatternCell>,
}

impl GeneratorNavigation {
    fn of(generator: &str, outcomes: &[&NavigationOutcome]) -> Self {
        let patterns: Vec<PatternCell> = Pattern::ALL.iter().map(|p| PatternCell::of(*p, outcomes)).collect();
        let n = patterns.iter().map(|c| c.n).sum();
        let good = outcomes.iter().filter_map(|o| o.category).filter(|c| c.is_acceptable()).count();
        GeneratorNavigation {
            generator: generator.to_string(),
            n,
            excluded: patterns.iter().map(|c| c.excluded).sum(),
            acceptable: ratio(good, n),
            patterns,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationReport {
    /// Sorted by generator tag.
    pub generators: Vec<GeneratorNavigation>,
    /// Mean of the per-generator acceptable shares.
    pub unweighted_acceptable: Option<f64>,
    pub pooled: GeneratorNavigation,
}

pub fn navigation_outcomes(records: &[PatientResponseRecord], classifier: &dyn Classifier) -> Vec<NavigationOutcome> {
    par_map(records, |r| navigation_outcome(r, classifier))
}

pub fn aggregate_navigation(outcomes: &[NavigationOutcome]) -> NavigationReport {
    let mut by_gen: BTreeMap<&str, Vec<&NavigationOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_gen.entry(o.generator.as_str()).or_default().push(o);
    }
    let generators: Vec<GeneratorNavigation> = by_gen.iter().map(|(g, os)| GeneratorNavigation::of(g, os)).collect();
    let accs: Vec<f64> = generators.iter().filter_map(|g| g.acceptable).collect();
    let all: Vec<&NavigationOutcome> = outcomes.iter().collect();
    NavigationReport {
        unweighted_acceptable: (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64),
        generators,
        pooled: GeneratorNavigation::of(POOLED, &all),
    }
}

pub fn eval_navigation(records: &[PatientResponseRecord], classifier: &dyn Classifier) -> NavigationReport {
    aggregate_navigation(&navigation_outcomes(records, classifier))
}
