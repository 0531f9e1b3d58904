//! Triage flowcharts as typed decision graphs.
//!
//! A flowchart is a DAG of four node kinds, identified by the first character
//! of the node id:
//!
//! | prefix | kind     | out-edges                                   |
//! |--------|----------|---------------------------------------------|
//! | `N`    | Question | exactly one `yes` and one `no`              |
//! | `F`    | Redirect | none; continues in another flowchart        |
//! | `A`    | Action   | none; the recommendation                    |
//! | `I`    | Info     | one `unconditional` edge to a Redirect node |
//!
//! Charts are loaded from JSON documents (see [`document`]), checked with
//! [`validate`](validate::validate) and grouped in a [`FlowchartLibrary`].

pub mod document;
pub mod library;
pub mod paths;
pub mod validate;

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::demographics::{Demographics, Sex};

pub use document::{parse_flowchart, to_document, to_document_value, ParseError};
pub use library::{load_library, FlowchartLibrary, LibraryError};
pub use paths::{enumerate_paths, DecisionPath, PathError};
pub use validate::{validate, validate_structure, Locus, RuleCode, ValidationIssue, ValidationReport};

/// Identifier of a node within one flowchart, e.g. `N1` or `A3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Kind implied by the id's first character, if it is one of `N`, `F`, `A`, `I`.
    pub fn prefix_kind(&self) -> Option<NodeKind> {
        match self.0.chars().next()? {
            'N' => Some(NodeKind::Question),
            'F' => Some(NodeKind::Redirect),
            'A' => Some(NodeKind::Action),
            'I' => Some(NodeKind::Info),
            _ => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl PartialEq<str> for NodeId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Question,
    Redirect,
    Action,
    Info,
}

impl NodeKind {
    pub fn prefix(self) -> char {
        match self {
            NodeKind::Question => 'N',
            NodeKind::Redirect => 'F',
            NodeKind::Action => 'A',
            NodeKind::Info => 'I',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeBody {
    Question { text: String },
    /// `text` is the display label, `target` the id of the flowchart to continue in.
    Redirect { text: String, target: String },
    Action { text: String },
    Info { text: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub body: NodeBody,
}

impl Node {
    pub fn kind(&self) -> NodeKind {
        match self.body {
            NodeBody::Question { .. } => NodeKind::Question,
            NodeBody::Redirect { .. } => NodeKind::Redirect,
            NodeBody::Action { .. } => NodeKind::Action,
            NodeBody::Info { .. } => NodeKind::Info,
        }
    }

    pub fn text(&self) -> &str {
        match &self.body {
            NodeBody::Question { text }
            | NodeBody::Redirect { text, .. }
            | NodeBody::Action { text }
            | NodeBody::Info { text } => text,
        }
    }

    pub fn redirect_target(&self) -> Option<&str> {
        match &self.body {
            NodeBody::Redirect { target, .. } => Some(target),
            _ => None,
        }
    }
}

/// A polar answer to a question node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub const BOTH: [Answer; 2] = [Answer::Yes, Answer::No];

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Yes => "Yes",
            Answer::No => "No",
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Yes,
    No,
    Unconditional,
}

impl From<Answer> for Condition {
    fn from(a: Answer) -> Self {
        match a {
            Answer::Yes => Condition::Yes,
            Answer::No => Condition::No,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub condition: Condition,
}

impl Edge {
    pub fn new(from: &str, to: &str, condition: Condition) -> Self {
        Edge { from: from.into(), to: to.into(), condition }
    }
}

/// Who a flowchart is meant for. Age bounds are inclusive, in months.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applicability {
    pub sexes: BTreeSet<Sex>,
    pub age_min_months: u32,
    pub age_max_months: Option<u32>,
}

impl Applicability {
    pub fn all() -> Self {
        Applicability {
            sexes: Sex::ALL.into_iter().collect(),
            age_min_months: 0,
            age_max_months: None,
        }
    }

    pub fn admits(&self, sex: Sex, age_months: u32) -> bool {
        self.sexes.contains(&sex)
            && self.age_min_months <= age_months
            && self.age_max_months.is_none_or(|max| age_months <= max)
    }

    /// Human-readable form used in retrieval text, e.g. "Female, 12 years and older".
    pub fn phrase(&self) -> String {
        let sexes = if self.sexes.len() == 2 {
            "Male and Female".to_string()
        } else {
            self.sexes.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" and ")
        };
        let ages = match (self.age_min_months, self.age_max_months) {
            (0, None) => "all ages".to_string(),
            (min, None) => format!("{} and older", months_phrase(min)),
            (0, Some(max)) => format!("up to {}", months_phrase(max)),
            (min, Some(max)) => format!("{} to {}", months_phrase(min), months_phrase(max)),
        };
        format!("{sexes}, {ages}")
    }
}

fn months_phrase(months: u32) -> String {
    if months.is_multiple_of(12) {
        let years = months / 12;
        format!("{years} {}", if years == 1 { "year" } else { "years" })
    } else {
        format!("{months} {}", if months == 1 { "month" } else { "months" })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flowchart {
    pub id: String,
    pub name: String,
    pub description: String,
    pub specialty: String,
    pub applicability: Applicability,
    /// Nodes in document order.
    pub nodes: IndexMap<NodeId, Node>,
    pub edges: Vec<Edge>,
    pub entry: NodeId,
    /// Redirect targets this chart may name without the library holding them.
    pub external_targets: Vec<String>,
}

impl Flowchart {
    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn out_edges<'a>(&'a self, id: &'a NodeId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| &e.from == id)
    }

    /// Successor of `id` along the edge with the given condition.
    pub fn successor(&self, id: &NodeId, condition: Condition) -> Option<&NodeId> {
        self.edges.iter().find(|e| &e.from == id && e.condition == condition).map(|e| &e.to)
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.values().filter(|n| n.kind() == kind).count()
    }

    pub fn question_count(&self) -> usize {
        self.count_kind(NodeKind::Question)
    }

    pub fn questions(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| n.kind() == NodeKind::Question)
    }

    /// The text the retrieval index embeds for this chart.
    pub fn retrieval_text(&self) -> String {
        format!("{}. {} Intended for: {}.", self.name, self.description, self.applicability.phrase())
    }
}

/// True iff the chart's applicability admits the patient's sex and age.
pub fn is_applicable(chart: &Flowchart, demographics: &Demographics) -> bool {
    chart.applicability.admits(demographics.sex, demographics.age_months())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart_with(app: Applicability) -> Flowchart {
        let mut nodes = IndexMap::new();
        nodes.insert(NodeId::from("A1"), Node { id: "A1".into(), body: NodeBody::Action { text: "Rest.".into() } });
        Flowchart {
            id: "t".into(),
            name: "T".into(),
            description: "d".into(),
            specialty: "General".into(),
            applicability: app,
            nodes,
            edges: vec![],
            entry: "A1".into(),
            external_targets: vec![],
        }
    }

    #[test]
    fn adult_chart_admits_35_year_old_female() {
        let app = Applicability { sexes: Sex::ALL.into_iter().collect(), age_min_months: 144, age_max_months: None };
        let chart = chart_with(app);
        assert!(is_applicable(&chart, &Demographics::years(Sex::Female, 35).unwrap()));
        assert!(is_applicable(&chart, &Demographics::years(Sex::Male, 35).unwrap()));
    }

    #[test]
    fn infant_chart_rejects_adult() {
        let app = Applicability { sexes: Sex::ALL.into_iter().collect(), age_min_months: 0, age_max_months: Some(24) };
        assert!(!is_applicable(&chart_with(app), &Demographics::years(Sex::Male, 25).unwrap()));
    }

    #[test]
    fn male_only_chart_rejects_female() {
        let app = Applicability { sexes: [Sex::Male].into_iter().collect(), age_min_months: 0, age_max_months: None };
        assert!(!is_applicable(&chart_with(app), &Demographics::years(Sex::Female, 40).unwrap()));
    }

    #[test]
    fn bounds_are_inclusive() {
        let app = Applicability { sexes: Sex::ALL.into_iter().collect(), age_min_months: 144, age_max_months: Some(216) };
        assert!(app.admits(Sex::Male, 144));
        assert!(app.admits(Sex::Male, 216));
        assert!(!app.admits(Sex::Male, 143));
        assert!(!app.admits(Sex::Male, 217));
    }

    #[test]
    fn applicability_phrases() {
        assert_eq!(Applicability::all().phrase(), "Male and Female, all ages");
        let app = Applicability { sexes: [Sex::Female].into_iter().collect(), age_min_months: 144, age_max_months: None };
        assert_eq!(app.phrase(), "Female, 12 years and older");
        let app = Applicability { sexes: Sex::ALL.into_iter().collect(), age_min_months: 0, age_max_months: Some(6) };
        assert_eq!(app.phrase(), "Male and Female, up to 6 months");
    }
}
