//! Structural and referential checks over flowcharts.
//!
//! Every issue carries a [`RuleCode`]. Rules overlap in a few places and the
//! more specific code wins:
//!
//! - an edge into the entry node is always either part of a cycle or leaves an
//!   unreachable node, so [`RuleCode::InvalidEntry`] only flags a missing entry;
//! - a second zero-in-degree node is reported as [`RuleCode::Unreachable`];
//! - an unconditional edge out of an Action or Redirect node is reported as
//!   `ActionHasOutEdge` / `RedirectHasOutEdge` only.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Condition, Flowchart, NodeBody, NodeId, NodeKind};
use crate::flowchart::library::FlowchartLibrary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleCode {
    InvalidEntry,
    MissingBranch,
    DuplicateBranch,
    ActionHasOutEdge,
    RedirectHasOutEdge,
    InvalidInfoEdge,
    UnconditionalFromNonInfo,
    CycleDetected,
    Unreachable,
    DanglingEdge,
    KindPrefixMismatch,
    EmptyNodeText,
    NonPolarQuestion,
    UnresolvedRedirect,
    ExternalRedirect,
    DuplicateChartId,
    ParseFailure,
}

impl fmt::Display for RuleCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locus {
    Chart,
    Node(NodeId),
    Edge { from: NodeId, to: NodeId, condition: Condition },
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Chart => f.write_str("chart"),
            Locus::Node(id) => write!(f, "node {id}"),
            Locus::Edge { from, to, condition } => write!(f, "edge {from}->{to} ({condition:?})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub flowchart_id: String,
    pub locus: Locus,
    pub rule: RuleCode,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}: {}", self.flowchart_id, self.rule, self.locus, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    /// Distinct error codes, sorted.
    pub fn error_codes(&self) -> Vec<RuleCode> {
        let mut codes: Vec<_> = self.errors.iter().map(|i| i.rule).collect();
        codes.sort();
        codes.dedup();
        codes
    }

    pub fn has_error(&self, rule: RuleCode, locus: &Locus) -> bool {
        self.errors.iter().any(|i| i.rule == rule && &i.locus == locus)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub(crate) fn error(&mut self, chart: &str, locus: Locus, rule: RuleCode, message: impl Into<String>) {
        self.errors.push(ValidationIssue { flowchart_id: chart.to_string(), locus, rule, message: message.into() });
    }

    pub(crate) fn warning(&mut self, chart: &str, locus: Locus, rule: RuleCode, message: impl Into<String>) {
        self.warnings.push(ValidationIssue { flowchart_id: chart.to_string(), locus, rule, message: message.into() });
    }
}

/// Full validation: structural rules plus redirect resolution against `lib`.
///
/// A redirect target resolves when the library holds it; a target the chart
/// declares in `external_targets` is accepted with an `ExternalRedirect` warning.
pub fn validate(chart: &Flowchart, lib: &FlowchartLibrary) -> ValidationReport {
    validate_against(chart, |id| lib.get(id).is_some())
}

pub(crate) fn validate_against(chart: &Flowchart, resolves: impl Fn(&str) -> bool) -> ValidationReport {
    let mut report = validate_structure(chart);
    for node in chart.nodes.values() {
        let Some(target) = node.redirect_target() else { continue };
        if resolves(target) {
            continue;
        }
        let locus = Locus::Node(node.id.clone());
        if chart.external_targets.iter().any(|t| t == target) {
            report.warning(&chart.id, locus, RuleCode::ExternalRedirect, format!("redirects to external flowchart {target:?}"));
        } else {
            report.error(&chart.id, locus, RuleCode::UnresolvedRedirect, format!("redirect target {target:?} is not in the library"));
        }
    }
    report
}

/// Graph-shape rules only; redirect targets are not resolved.
pub fn validate_structure(chart: &Flowchart) -> ValidationReport {
    let mut report = ValidationReport::default();
    let cid = chart.id.as_str();

    for node in chart.nodes.values() {
        let locus = || Locus::Node(node.id.clone());
        if node.id.prefix_kind() != Some(node.kind()) {
            report.error(
                cid,
                locus(),
                RuleCode::KindPrefixMismatch,
                format!("{:?} node id must start with {:?}", node.kind(), node.kind().prefix()),
            );
        }
        if node.text().trim().is_empty() {
            report.error(cid, locus(), RuleCode::EmptyNodeText, "node text is empty");
        } else if let NodeBody::Question { text } = &node.body {
            if !text.trim_end().ends_with('?') {
                report.warning(cid, locus(), RuleCode::NonPolarQuestion, "question text does not end with '?'");
            }
        }
    }

    // Edges naming unknown nodes are reported and left out of the graph checks.
    let mut edges = Vec::with_capacity(chart.edges.len());
    for e in &chart.edges {
        let missing: Vec<&NodeId> = [&e.from, &e.to].into_iter().filter(|id| !chart.nodes.contains_key(*id)).collect();
        if missing.is_empty() {
            edges.push(e);
        } else {
            let names: Vec<String> = missing.iter().map(|id| id.to_string()).collect();
            report.error(
                cid,
                Locus::Edge { from: e.from.clone(), to: e.to.clone(), condition: e.condition },
                RuleCode::DanglingEdge,
                format!("edge names unknown node(s) {}", names.join(", ")),
            );
        }
    }

    let mut out: HashMap<&NodeId, Vec<&super::Edge>> = HashMap::new();
    for e in &edges {
        out.entry(&e.from).or_default().push(e);
    }

    for node in chart.nodes.values() {
        let outs = out.get(&node.id).map(Vec::as_slice).unwrap_or(&[]);
        let locus = || Locus::Node(node.id.clone());
        match node.kind() {
            NodeKind::Question => {
                let yes = outs.iter().filter(|e| e.condition == Condition::Yes).count();
                let no = outs.iter().filter(|e| e.condition == Condition::No).count();
                let mut missing = Vec::new();
                if yes == 0 {
                    missing.push("yes");
                }
                if no == 0 {
                    missing.push("no");
                }
                if !missing.is_empty() {
                    report.error(cid, locus(), RuleCode::MissingBranch, format!("question lacks a {} edge", missing.join(" and a ")));
                }
                if yes > 1 || no > 1 {
                    report.error(cid, locus(), RuleCode::DuplicateBranch, format!("question has {yes} yes and {no} no edges"));
                }
                for e in outs.iter().filter(|e| e.condition == Condition::Unconditional) {
                    report.error(
                        cid,
                        Locus::Edge { from: e.from.clone(), to: e.to.clone(), condition: e.condition },
                        RuleCode::UnconditionalFromNonInfo,
                        "only info nodes may have unconditional edges",
                    );
                }
            }
            NodeKind::Action if !outs.is_empty() => {
                report.error(cid, locus(), RuleCode::ActionHasOutEdge, format!("action node has {} out-edge(s)", outs.len()));
            }
            NodeKind::Redirect if !outs.is_empty() => {
                report.error(cid, locus(), RuleCode::RedirectHasOutEdge, format!("redirect node has {} out-edge(s)", outs.len()));
            }
            NodeKind::Info => {
                let ok = matches!(outs, [e] if e.condition == Condition::Unconditional
                    && chart.node(&e.to).is_some_and(|t| t.kind() == NodeKind::Redirect));
                if !ok {
                    report.error(
                        cid,
                        locus(),
                        RuleCode::InvalidInfoEdge,
                        "info node needs exactly one unconditional edge to a redirect node",
                    );
                }
            }
            _ => {}
        }
    }

    if let Some(cycle) = find_cycle(chart, &out) {
        let path: Vec<String> = cycle.iter().map(|id| id.to_string()).collect();
        report.error(cid, Locus::Node(cycle[0].clone()), RuleCode::CycleDetected, format!("cycle {}", path.join(" -> ")));
    }

    if chart.nodes.contains_key(&chart.entry) {
        let reachable = reachable_from(&chart.entry, &out);
        for id in chart.nodes.keys().filter(|id| !reachable.contains(id)) {
            report.error(cid, Locus::Node(id.clone()), RuleCode::Unreachable, "node is not reachable from the entry");
        }
    } else {
        report.error(cid, Locus::Chart, RuleCode::InvalidEntry, format!("entry {:?} is not a node of this chart", chart.entry.as_str()));
    }

    report
}

fn reachable_from<'a>(start: &'a NodeId, out: &HashMap<&'a NodeId, Vec<&'a super::Edge>>) -> HashSet<&'a NodeId> {
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(id) = stack.pop() {
        for e in out.get(id).into_iter().flatten() {
            if seen.insert(&e.to) {
                stack.push(&e.to);
            }
        }
    }
    seen
}

/// Returns one cycle (first node repeated at the end) if the graph has any.
fn find_cycle<'a>(chart: &'a Flowchart, out: &HashMap<&'a NodeId, Vec<&'a super::Edge>>) -> Option<Vec<NodeId>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Fresh,
        OnStack,
        Done,
    }
    let mut mark: HashMap<&NodeId, Mark> = chart.nodes.keys().map(|id| (id, Mark::Fresh)).collect();

    for root in chart.nodes.keys() {
        if mark[root] != Mark::Fresh {
            continue;
        }
        // (node, index of next out-edge to explore)
        let mut stack: Vec<(&NodeId, usize)> = vec![(root, 0)];
        mark.insert(root, Mark::OnStack);
        while let Some(top) = stack.last_mut() {
            let id = top.0;
            let succ = out.get(id).and_then(|es| es.get(top.1)).map(|e| &e.to);
            top.1 += 1;
            match succ {
                Some(to) => match mark[to] {
                    Mark::Fresh => {
                        mark.insert(to, Mark::OnStack);
                        stack.push((to, 0));
                    }
                    Mark::OnStack => {
                        let start = stack.iter().position(|(n, _)| *n == to).expect("on-stack node is on the stack");
                        let mut cycle: Vec<NodeId> = stack[start..].iter().map(|(n, _)| (*n).clone()).collect();
                        cycle.push(to.clone());
                        return Some(cycle);
                    }
                    Mark::Done => {}
                },
                None => {
                    mark.insert(id, Mark::Done);
                    stack.pop();
                }
            }
        }
    }
    None
}
