//! Exhaustive root-to-terminal path enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::validate::{validate_structure, ValidationReport};
use super::{Answer, Condition, Flowchart, NodeId, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("flowchart {id:?} fails validation with {} error(s)", report.errors.len())]
    InvalidFlowchart { id: String, report: ValidationReport },
}

/// One way through a chart: the answer given at each question, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionPath {
    pub answers: Vec<(NodeId, Answer)>,
    /// Every node visited, entry first, including info nodes.
    pub nodes: Vec<NodeId>,
    /// An Action or Redirect node.
    pub terminal: NodeId,
}

impl fmt::Display for DecisionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (node, answer) in &self.answers {
            write!(f, "{node}={answer} ")?;
        }
        write!(f, "-> {}", self.terminal)
    }
}

/// Depth-first enumeration of every decision path, Yes branch before No.
///
/// In a DAG each distinct answer sequence corresponds to exactly one path, so
/// branches that merge are counted once per sequence that reaches them.
pub fn enumerate_paths(chart: &Flowchart) -> Result<Vec<DecisionPath>, PathError> {
    let report = validate_structure(chart);
    if !report.is_clean() {
        return Err(PathError::InvalidFlowchart { id: chart.id.clone(), report });
    }

    let mut paths = Vec::new();
    let mut answers = Vec::new();
    let mut nodes = Vec::new();
    walk(chart, &chart.entry, &mut answers, &mut nodes, &mut paths);
    Ok(paths)
}

fn walk(
    chart: &Flowchart,
    at: &NodeId,
    answers: &mut Vec<(NodeId, Answer)>,
    nodes: &mut Vec<NodeId>,
    paths: &mut Vec<DecisionPath>,
) {
    let node = chart.node(at).expect("validated chart");
    nodes.push(at.clone());
    match node.kind() {
        NodeKind::Action | NodeKind::Redirect => {
            paths.push(DecisionPath { answers: answers.clone(), nodes: nodes.clone(), terminal: at.clone() });
        }
        NodeKind::Info => {
            let next = chart.successor(at, Condition::Unconditional).expect("validated chart");
            walk(chart, next, answers, nodes, paths);
        }
        NodeKind::Question => {
            for answer in Answer::BOTH {
                let next = chart.successor(at, answer.into()).expect("validated chart");
                answers.push((at.clone(), answer));
                walk(chart, next, answers, nodes, paths);
                answers.pop();
            }
        }
    }
    nodes.pop();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowchart::parse_flowchart;

    fn doc(nodes: &str, edges: &str, entry: &str) -> Flowchart {
        let s = format!(
            r#"{{"id":"t","name":"T","description":"d","specialty":"General",
            "applicability":{{"sexes":["male","female"],"age_min_months":0,"age_max_months":null}},
            "entry":"{entry}","nodes":[{nodes}],"edges":[{edges}]}}"#
        );
        parse_flowchart(s.as_bytes()).unwrap()
    }

    #[test]
    fn depth_one_tree() {
        let c = doc(
            r#"{"id":"N1","kind":"question","text":"Tired?"},{"id":"A1","kind":"action","text":"Rest."},{"id":"A2","kind":"action","text":"Fine."}"#,
            r#"{"from":"N1","to":"A1","condition":"yes"},{"from":"N1","to":"A2","condition":"no"}"#,
            "N1",
        );
        let paths = enumerate_paths(&c).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].answers, vec![("N1".into(), Answer::Yes)]);
        assert_eq!(paths[0].terminal, "A1");
        assert_eq!(paths[1].answers, vec![("N1".into(), Answer::No)]);
        assert_eq!(paths[1].terminal, "A2");
        assert_eq!(paths[0].to_string(), "N1=Yes -> A1");
    }

    #[test]
    fn single_action_chart_has_one_empty_path() {
        let c = doc(r#"{"id":"A1","kind":"action","text":"Rest."}"#, "", "A1");
        let paths = enumerate_paths(&c).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].answers.is_empty());
    }

    #[test]
    fn info_nodes_visited_without_answers() {
        let c = doc(
            r#"{"id":"N1","kind":"question","text":"Anxious?"},{"id":"I1","kind":"info","text":"You may have anxiety."},
               {"id":"F1","kind":"redirect","text":"Anxiety","target":"anxiety"},{"id":"A1","kind":"action","text":"Fine."}"#,
            r#"{"from":"N1","to":"I1","condition":"yes"},{"from":"I1","to":"F1","condition":"unconditional"},
               {"from":"N1","to":"A1","condition":"no"}"#,
            "N1",
        );
        let paths = enumerate_paths(&c).unwrap();
        assert_eq!(paths[0].answers.len(), 1);
        assert_eq!(paths[0].nodes, vec![NodeId::from("N1"), "I1".into(), "F1".into()]);
        assert_eq!(paths[0].terminal, "F1");
    }

    #[test]
    fn invalid_chart_refused() {
        let c = doc(
            r#"{"id":"N1","kind":"question","text":"Tired?"},{"id":"A1","kind":"action","text":"Rest."}"#,
            r#"{"from":"N1","to":"A1","condition":"yes"}"#,
            "N1",
        );
        assert!(matches!(enumerate_paths(&c), Err(PathError::InvalidFlowchart { .. })));
    }
}
