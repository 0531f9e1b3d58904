//! JSON flowchart documents.
//!
//! One chart per UTF-8 JSON file:
//!
//! ```json
//! {
//!   "id": "feeling_generally_ill",
//!   "name": "Feeling Generally Ill Flowchart",
//!   "description": "...",
//!   "specialty": "General",
//!   "applicability": {"sexes": ["male", "female"], "age_min_months": 144, "age_max_months": null},
//!   "entry": "N1",
//!   "nodes": [{"id": "N1", "kind": "question", "text": "..."},
//!             {"id": "F1", "kind": "redirect", "text": "Fever Flowchart", "target": "fever"}],
//!   "edges": [{"from": "N1", "to": "F1", "condition": "yes"}],
//!   "external_targets": ["fever"]
//! }
//! ```
//!
//! Unknown keys are rejected. Parsing checks shape only; graph rules live in
//! [`super::validate`].

use std::collections::{BTreeSet, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Applicability, Condition, Edge, Flowchart, Node, NodeBody, NodeId, NodeKind};
use crate::demographics::Sex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("malformed flowchart document at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("node id {0:?} appears more than once")]
    DuplicateNodeId(String),
    #[error("node id {0:?} does not start with one of N, F, A, I")]
    UnknownNodeKindPrefix(String),
    #[error("node {id:?}: {message}")]
    Shape { id: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocApplicability {
    sexes: Vec<DocSex>,
    age_min_months: u32,
    age_max_months: Option<u32>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DocSex {
    #[serde(alias = "Male")]
    Male,
    #[serde(alias = "Female")]
    Female,
}

impl From<DocSex> for Sex {
    fn from(s: DocSex) -> Self {
        match s {
            DocSex::Male => Sex::Male,
            DocSex::Female => Sex::Female,
        }
    }
}

impl From<Sex> for DocSex {
    fn from(s: Sex) -> Self {
        match s {
            Sex::Male => DocSex::Male,
            Sex::Female => DocSex::Female,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocNode {
    id: String,
    kind: NodeKind,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocEdge {
    from: String,
    to: String,
    condition: Condition,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    id: String,
    name: String,
    description: String,
    specialty: String,
    applicability: DocApplicability,
    entry: String,
    nodes: Vec<DocNode>,
    edges: Vec<DocEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    external_targets: Vec<String>,
}

/// Parses one flowchart document.
pub fn parse_flowchart(bytes: &[u8]) -> Result<Flowchart, ParseError> {
    let doc: Document = serde_json::from_slice(bytes).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut nodes = IndexMap::with_capacity(doc.nodes.len());
    for n in doc.nodes {
        let id = NodeId::new(n.id.clone());
        if id.prefix_kind().is_none() {
            return Err(ParseError::UnknownNodeKindPrefix(n.id));
        }
        let body = match (n.kind, n.target) {
            (NodeKind::Redirect, Some(target)) => NodeBody::Redirect { text: n.text, target },
            (NodeKind::Redirect, None) => {
                return Err(ParseError::Shape { id: n.id, message: "redirect node needs a \"target\"".into() })
            }
            (_, Some(_)) => {
                return Err(ParseError::Shape { id: n.id, message: "only redirect nodes carry a \"target\"".into() })
            }
            (NodeKind::Question, None) => NodeBody::Question { text: n.text },
            (NodeKind::Action, None) => NodeBody::Action { text: n.text },
            (NodeKind::Info, None) => NodeBody::Info { text: n.text },
        };
        if nodes.contains_key(&id) {
            return Err(ParseError::DuplicateNodeId(n.id));
        }
        nodes.insert(id.clone(), Node { id, body });
    }

    let edges = doc
        .edges
        .into_iter()
        .map(|e| Edge { from: NodeId::new(e.from), to: NodeId::new(e.to), condition: e.condition })
        .collect();

    Ok(Flowchart {
        id: doc.id,
        name: doc.name,
        description: doc.description,
        specialty: doc.specialty,
        applicability: Applicability {
            sexes: doc.applicability.sexes.into_iter().map(Sex::from).collect::<BTreeSet<_>>(),
            age_min_months: doc.applicability.age_min_months,
            age_max_months: doc.applicability.age_max_months,
        },
        nodes,
        edges,
        entry: NodeId::new(doc.entry),
        external_targets: dedup(doc.external_targets),
    })
}

fn dedup(items: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Serializes a chart back to its document form (pretty-printed JSON).
pub fn to_document(chart: &Flowchart) -> String {
    let doc = Document {
        id: chart.id.clone(),
        name: chart.name.clone(),
        description: chart.description.clone(),
        specialty: chart.specialty.clone(),
        applicability: DocApplicability {
            sexes: chart.applicability.sexes.iter().copied().map(DocSex::from).collect(),
            age_min_months: chart.applicability.age_min_months,
            age_max_months: chart.applicability.age_max_months,
        },
        entry: chart.entry.to_string(),
        nodes: chart
            .nodes
            .values()
            .map(|n| DocNode {
                id: n.id.to_string(),
                kind: n.kind(),
                text: n.text().to_string(),
                target: n.redirect_target().map(str::to_string),
            })
            .collect(),
        edges: chart
            .edges
            .iter()
            .map(|e| DocEdge { from: e.from.to_string(), to: e.to.to_string(), condition: e.condition })
            .collect(),
        external_targets: chart.external_targets.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("document serialization is infallible")
}

/// Serializes a chart to a JSON value, for embedding in API responses.
pub fn to_document_value(chart: &Flowchart) -> serde_json::Value {
    serde_json::from_str(&to_document(chart)).expect("round-trip of own output")
}
