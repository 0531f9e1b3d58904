use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;
use triage_core::demographics::{Demographics, Sex, MAX_AGE_MONTHS};
use triage_core::flowchart::*;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/flowcharts")
}

fn fgi() -> Flowchart {
    let bytes = std::fs::read(fixtures().join("feeling_generally_ill.json")).unwrap();
    parse_flowchart(&bytes).unwrap()
}

fn library() -> FlowchartLibrary {
    load_library(&fixtures()).unwrap().0
}

/// Independent oracle: try every Yes/No sequence up to the question count and
/// keep those that end exactly on a terminal.
fn brute_force_paths(chart: &Flowchart) -> BTreeSet<(Vec<(String, Answer)>, String)> {
    let max_len = chart.question_count();
    let mut found = BTreeSet::new();
    for len in 0..=max_len {
        for bits in 0u64..(1 << len) {
            let seq: Vec<Answer> = (0..len).map(|i| if bits >> (len - 1 - i) & 1 == 0 { Answer::Yes } else { Answer::No }).collect();
            let mut at = chart.entry.clone();
            let mut used = Vec::new();
            let mut remaining = seq.iter();
            let terminal = loop {
                let node = chart.node(&at).unwrap();
                match node.kind() {
                    NodeKind::Action | NodeKind::Redirect => break Some(at.clone()),
                    NodeKind::Info => {
                        at = chart.edges.iter().find(|e| e.from == at).unwrap().to.clone();
                    }
                    NodeKind::Question => match remaining.next() {
                        None => break None,
                        Some(&a) => {
                            used.push((at.to_string(), a));
                            let want = if a == Answer::Yes { Condition::Yes } else { Condition::No };
                            at = chart.edges.iter().find(|e| e.from == at && e.condition == want).unwrap().to.clone();
                        }
                    },
                }
            };
            if let Some(t) = terminal {
                if remaining.next().is_none() {
                    found.insert((used, t.to_string()));
                }
            }
        }
    }
    found
}

fn as_set(paths: &[DecisionPath]) -> BTreeSet<(Vec<(String, Answer)>, String)> {
    paths
        .iter()
        .map(|p| (p.answers.iter().map(|(n, a)| (n.to_string(), *a)).collect(), p.terminal.to_string()))
        .collect()
}

#[test]
fn transcribed_chart_shape() {
    let c = fgi();
    assert_eq!(c.nodes.len(), 23);
    assert_eq!(c.count_kind(NodeKind::Question), 11);
    assert_eq!(c.count_kind(NodeKind::Redirect), 3);
    assert_eq!(c.count_kind(NodeKind::Action), 8);
    assert_eq!(c.count_kind(NodeKind::Info), 1);
    assert_eq!(c.edges.len(), 23);
    assert_eq!(c.entry, "N1");
}

#[test]
fn transcribed_chart_valid_with_external_targets() {
    let report = validate(&fgi(), &FlowchartLibrary::empty());
    assert!(report.is_clean(), "{:?}", report.errors);
    assert_eq!(report.warnings.iter().filter(|w| w.rule == RuleCode::ExternalRedirect).count(), 3);
}

#[test]
fn deleting_first_yes_edge_is_missing_branch() {
    let mut c = fgi();
    c.edges.retain(|e| !(e.from == "N1" && e.to == "F1"));
    let report = validate(&c, &FlowchartLibrary::empty());
    assert!(report.has_error(RuleCode::MissingBranch, &Locus::Node("N1".into())));
    // F1 loses its only incoming edge as well.
    assert!(report.has_error(RuleCode::Unreachable, &Locus::Node("F1".into())));
}

#[test]
fn edge_from_action_back_to_entry() {
    let mut c = fgi();
    c.edges.push(Edge::new("A8", "N1", Condition::Unconditional));
    let report = validate(&c, &FlowchartLibrary::empty());
    assert_eq!(report.error_codes(), vec![RuleCode::ActionHasOutEdge, RuleCode::CycleDetected]);
}

fn set_condition(c: &mut Flowchart, from: &str, to: &str, cond: Condition) {
    c.edges.iter_mut().find(|e| e.from == from && e.to == to).unwrap().condition = cond;
}

/// One targeted mutation per structural rule.
type Mutation = (RuleCode, Box<dyn Fn(&mut Flowchart)>);

pub fn mutations() -> Vec<Mutation> {
    vec![
        (RuleCode::InvalidEntry, Box::new(|c: &mut Flowchart| c.entry = "N99".into())),
        (RuleCode::MissingBranch, Box::new(|c: &mut Flowchart| c.edges.retain(|e| !(e.from == "N9" && e.to == "N10")))),
        (RuleCode::ActionHasOutEdge, Box::new(|c: &mut Flowchart| c.edges.push(Edge::new("A6", "A7", Condition::Yes)))),
        (RuleCode::RedirectHasOutEdge, Box::new(|c: &mut Flowchart| c.edges.push(Edge::new("F1", "A7", Condition::Yes)))),
        (RuleCode::InvalidInfoEdge, Box::new(|c: &mut Flowchart| set_condition(c, "I1", "F2", Condition::Yes))),
        (
            RuleCode::UnconditionalFromNonInfo,
            Box::new(|c: &mut Flowchart| c.edges.push(Edge::new("N11", "A7", Condition::Unconditional))),
        ),
        (
            RuleCode::CycleDetected,
            Box::new(|c: &mut Flowchart| {
                let e = c.edges.iter_mut().find(|e| e.from == "N9" && e.to == "N10").unwrap();
                e.to = "N4".into();
            }),
        ),
        (
            RuleCode::Unreachable,
            Box::new(|c: &mut Flowchart| {
                c.nodes.insert("A9".into(), Node { id: "A9".into(), body: NodeBody::Action { text: "Orphan.".into() } });
            }),
        ),
    ]
}

#[test]
fn each_mutation_yields_exactly_its_rule() {
    let muts = mutations();
    assert_eq!(muts.len(), 8);
    for (code, mutate) in muts {
        let mut c = fgi();
        mutate(&mut c);
        let report = validate(&c, &FlowchartLibrary::empty());
        assert_eq!(report.error_codes(), vec![code], "mutation for {code}: {:?}", report.errors);
    }
}

#[test]
fn transcribed_chart_has_fourteen_paths() {
    // Hand-traced from the printed graph: N1/Yes, N2/Yes, N3/Yes are single
    // paths; N4 spans 8 (via N5) + 3 (via N10) = 11.
    let paths = enumerate_paths(&fgi()).unwrap();
    assert_eq!(paths.len(), 14);
    assert_eq!(paths[0].to_string(), "N1=Yes -> F1");
    assert_eq!(paths[13].to_string(), "N1=No N2=No N3=No N4=No N10=No N11=No -> A8");
}

#[test]
fn enumeration_matches_brute_force_on_every_fixture() {
    for chart in library().iter() {
        let paths = enumerate_paths(chart).unwrap();
        let oracle = brute_force_paths(chart);
        assert_eq!(paths.len(), oracle.len(), "{}", chart.id);
        assert_eq!(as_set(&paths), oracle, "{}", chart.id);
    }
}

#[test]
fn merging_branches_counted_per_answer_sequence() {
    // N1 yes/no both reach N2, which then splits: four sequences, two terminals.
    let doc = r#"{"id":"m","name":"M","description":"d","specialty":"General",
        "applicability":{"sexes":["male","female"],"age_min_months":0,"age_max_months":null},
        "entry":"N1",
        "nodes":[{"id":"N1","kind":"question","text":"A?"},{"id":"N2","kind":"question","text":"B?"},
                 {"id":"A1","kind":"action","text":"x"},{"id":"A2","kind":"action","text":"y"}],
        "edges":[{"from":"N1","to":"N2","condition":"yes"},{"from":"N1","to":"N2","condition":"no"},
                 {"from":"N2","to":"A1","condition":"yes"},{"from":"N2","to":"A2","condition":"no"}]}"#;
    let c = parse_flowchart(doc.as_bytes()).unwrap();
    let paths = enumerate_paths(&c).unwrap();
    assert_eq!(paths.len(), 4);
    assert_eq!(as_set(&paths), brute_force_paths(&c));
}

#[test]
fn fixture_corpus_loads_clean() {
    let (lib, report) = load_library(&fixtures()).unwrap();
    assert_eq!(lib.len(), 12);
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    let total: usize = lib.iter().map(|c| enumerate_paths(c).unwrap().len()).sum();
    assert!(total >= 80, "only {total} paths");
}

#[test]
fn fixture_terminals_have_no_out_edges_and_branch_counts_balance() {
    for chart in library().iter() {
        for p in enumerate_paths(chart).unwrap() {
            assert_eq!(chart.edges.iter().filter(|e| e.from == p.terminal).count(), 0);
        }
        let yes = chart.edges.iter().filter(|e| e.condition == Condition::Yes).count();
        let no = chart.edges.iter().filter(|e| e.condition == Condition::No).count();
        assert_eq!(yes, chart.question_count());
        assert_eq!(no, chart.question_count());
    }
}

#[test]
fn applicability_matches_grid_membership() {
    for chart in library().iter() {
        let app = &chart.applicability;
        for sex in Sex::ALL {
            for months in 1..=MAX_AGE_MONTHS {
                let d = Demographics::months(sex, months).unwrap();
                let expected =
                    app.sexes.iter().any(|s| *s == sex) && months >= app.age_min_months && app.age_max_months.is_none_or(|m| months <= m);
                assert_eq!(is_applicable(chart, &d), expected, "{} {sex} {months}", chart.id);
            }
        }
    }
}

#[test]
fn redirect_to_missing_chart_is_excluded_on_load() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(fixtures()).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, dir.path().join(p.file_name().unwrap())).unwrap();
    }
    std::fs::remove_file(dir.path().join("fever.json")).unwrap();
    let (lib, report) = load_library(dir.path()).unwrap();
    // headache and chest_pain redirect to fever; feeling_generally_ill declares it external.
    assert!(!lib.contains("headache"));
    assert!(!lib.contains("chest_pain"));
    assert!(lib.contains("feeling_generally_ill"));
    assert!(report.errors.iter().all(|e| e.rule == RuleCode::UnresolvedRedirect));
    assert!(report.warnings.iter().any(|w| w.rule == RuleCode::ExternalRedirect && w.flowchart_id == "feeling_generally_ill"));
}

proptest! {
    #[test]
    fn document_round_trip_preserves_validation(mutation in 0usize..9, chart_idx in 0usize..12) {
        let lib = library();
        let mut chart = lib.iter().nth(chart_idx).unwrap().clone();
        if chart.id == "feeling_generally_ill" && mutation < 8 {
            (mutations()[mutation].1)(&mut chart);
        }
        let again = parse_flowchart(to_document(&chart).as_bytes()).unwrap();
        prop_assert_eq!(&again, &chart);
        prop_assert_eq!(validate(&again, &lib), validate(&chart, &lib));
    }
}
