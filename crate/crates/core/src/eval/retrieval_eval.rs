//! Replaying opening statements through retrieval and scoring the picks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::flowchart::FlowchartLibrary;
use crate::gateway::Embedder;
use crate::retrieval::{select_flowchart, select_unscored, ApplicabilityFilter, Index, Query, Selector, DEFAULT_TOP_N};

use super::records::OpeningStatementRecord;
use super::{par_map, population_std, ratio, EvalError, POOLED};

/// Which retrieval settings to score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalModes {
    /// Selector over every chart, unscored.
    pub llm_only: bool,
    /// Similarity ranking alone.
    pub similarity: bool,
    /// Similarity top-n followed by the selector.
    pub agent: bool,
    pub top_n: usize,
    pub filter: ApplicabilityFilter,
}

impl Default for RetrievalModes {
    fn default() -> Self {
        RetrievalModes { llm_only: true, similarity: true, agent: true, top_n: DEFAULT_TOP_N, filter: ApplicabilityFilter::On }
    }
}

/// What happened to one record. `None` fields were not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub record_id: String,
    pub generator: String,
    pub label_flowchart_id: String,
    pub specialty: String,
    /// 1-based rank of the label among similarity results, if within the top five.
    pub sim_rank: Option<usize>,
    pub similarity_evaluated: bool,
    pub agent_hit: Option<bool>,
    pub llm_only_hit: Option<bool>,
}

/// Accuracies in [0, 1]; `None` when nothing was evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub llm_only_acc: Option<f64>,
    pub sim_top1_acc: Option<f64>,
    pub sim_top3_acc: Option<f64>,
    pub sim_top5_acc: Option<f64>,
    pub agent_acc: Option<f64>,
}

impl RetrievalScores {
    pub const METRICS: [&'static str; 5] = ["llm_only_acc", "sim_top1_acc", "sim_top3_acc", "sim_top5_acc", "agent_acc"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.llm_only_acc, self.sim_top1_acc, self.sim_top3_acc, self.sim_top5_acc, self.agent_acc]
    }

    fn from_values(v: [Option<f64>; 5]) -> Self {
        RetrievalScores { llm_only_acc: v[0], sim_top1_acc: v[1], sim_top3_acc: v[2], sim_top5_acc: v[3], agent_acc: v[4] }
    }

    fn of(outcomes: &[&RetrievalOutcome]) -> Self {
        let sim: Vec<_> = outcomes.iter().filter(|o| o.similarity_evaluated).collect();
        let sim_at = |k: usize| ratio(sim.iter().filter(|o| o.sim_rank.is_some_and(|r| r <= k)).count(), sim.len());
        let hits = |f: fn(&RetrievalOutcome) -> Option<bool>| {
            let seen: Vec<bool> = outcomes.iter().filter_map(|o| f(o)).collect();
            ratio(seen.iter().filter(|h| **h).count(), seen.len())
        };
        RetrievalScores {
            llm_only_acc: hits(|o| o.llm_only_hit),
            sim_top1_acc: sim_at(1),
            sim_top3_acc: sim_at(3),
            sim_top5_acc: sim_at(5),
            agent_acc: hits(|o| o.agent_hit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRetrieval {
    pub generator: String,
    pub n: usize,
    pub accuracy: RetrievalScores,
    /// Population standard deviation of per-specialty accuracies.
    pub specialty_std: RetrievalScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    /// Sorted by generator tag.
    pub generators: Vec<GeneratorRetrieval>,
    /// Mean of the per-generator accuracies.
    pub unweighted_mean: RetrievalScores,
    /// Accuracy over all records together.
    pub pooled: GeneratorRetrieval,
}

/// Evaluates one record. Fails if its label is not a chart in `lib`.
pub fn retrieval_outcome(
    record: &OpeningStatementRecord,
    lib: &FlowchartLibrary,
    index: &Index,
    embedder: &dyn Embedder,
    selector: &dyn Selector,
    modes: &RetrievalModes,
) -> Result<RetrievalOutcome, EvalError> {
    let chart = lib.get(&record.label_flowchart_id).ok_or_else(|| EvalError::LabelNotInLibrary(record.label_flowchart_id.clone()))?;
    let query = Query::new(record.demographics()?, record.text.clone())?;
    let label = &record.label_flowchart_id;
    let mut out = RetrievalOutcome {
        record_id: record.id.clone(),
        generator: record.generator.clone(),
        label_flowchart_id: label.clone(),
        specialty: chart.specialty.clone(),
        sim_rank: None,
        similarity_evaluated: false,
        agent_hit: None,
        llm_only_hit: None,
    };
    let ranked = if modes.similarity || modes.agent {
        index.search(embedder, &query, modes.top_n.max(5), modes.filter)?
    } else {
        Vec::new()
    };
    if modes.similarity {
        out.similarity_evaluated = true;
        out.sim_rank = ranked.iter().take(5).position(|c| &c.flowchart_id == label).map(|p| p + 1);
    }
    if modes.agent {
        let candidates = &ranked[..ranked.len().min(modes.top_n)];
        let sel = select_flowchart(index, candidates, &query, selector)?;
        out.agent_hit = Some(sel.outcome.flowchart_id() == Some(label.as_str()));
    }
    if modes.llm_only {
        let sel = select_unscored(index, &query, selector)?;
        out.llm_only_hit = Some(sel.outcome.flowchart_id() == Some(label.as_str()));
    }
    Ok(out)
}

/// Outcomes for every record, in input order. Records are evaluated in parallel.
pub fn retrieval_outcomes(
    records: &[OpeningStatementRecord],
    lib: &FlowchartLibrary,
    index: &Index,
    embedder: &dyn Embedder,
    selector: &dyn Selector,
    modes: &RetrievalModes,
) -> Result<Vec<RetrievalOutcome>, EvalError> {
    par_map(records, |r| retrieval_outcome(r, lib, index, embedder, selector, modes)).into_iter().collect()
}

fn summarize(generator: &str, outcomes: &[&RetrievalOutcome]) -> GeneratorRetrieval {
    let mut by_specialty: BTreeMap<&str, Vec<&RetrievalOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_specialty.entry(o.specialty.as_str()).or_default().push(o);
    }
    let per_specialty: Vec<[Option<f64>; 5]> = by_specialty.values().map(|os| RetrievalScores::of(os).values()).collect();
    let std = std::array::from_fn(|m| population_std(per_specialty.iter().filter_map(|v| v[m])));
    GeneratorRetrieval {
        generator: generator.to_string(),
        n: outcomes.len(),
        accuracy: RetrievalScores::of(outcomes),
        specialty_std: RetrievalScores::from_values(std),
    }
}

pub fn aggregate_retrieval(outcomes: &[RetrievalOutcome]) -> RetrievalMetrics {
    let mut by_gen: BTreeMap<&str, Vec<&RetrievalOutcome>> = BTreeMap::new();
    for o in outcomes {
        by_gen.entry(o.generator.as_str()).or_default().push(o);
    }
    let generators: Vec<GeneratorRetrieval> = by_gen.iter().map(|(g, os)| summarize(g, os)).collect();
    let unweighted = std::array::from_fn(|m| {
        let vals: Vec<f64> = generators.iter().filter_map(|g| g.accuracy.values()[m]).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    });
    let all: Vec<&RetrievalOutcome> = outcomes.iter().collect();
    RetrievalMetrics { generators, unweighted_mean: RetrievalScores::from_values(unweighted), pooled: summarize(POOLED, &all) }
}

pub fn eval_retrieval(
    records: &[OpeningStatementRecord],
    lib: &FlowchartLibrary,
    index: &Index,
    embedder: &dyn Embedder,
    selector: &dyn Selector,
    modes: &RetrievalModes,
) -> Result<RetrievalMetrics, EvalError> {
    Ok(aggregate_retrieval(&retrieval_outcomes(records, lib, index, embedder, selector, modes)?))
}
