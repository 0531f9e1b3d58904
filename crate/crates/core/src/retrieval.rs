//! Flowchart retrieval: exact cosine search over chart descriptions, then a
//! selector that picks one candidate or declines.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demographics::Demographics;
use crate::flowchart::{Applicability, FlowchartLibrary};
use crate::gateway::prompts::{render_with, TemplateId};
use crate::gateway::{Embedder, EmbeddingVector, GatewayError, GenerationRequest, TextGenerator, AGENT_TEMPERATURE};

/// Candidates handed to the selector.
pub const DEFAULT_TOP_N: usize = 10;
/// Candidates shown to the patient alongside the pick.
pub const SHOWN_CANDIDATES: usize = 3;
/// The selector's reply when nothing fits.
pub const NO_FLOWCHART_SENTINEL: &str = "no flowchart available";

const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot build an index from an empty library")]
    EmptyLibrary,
    #[error("opening statement is empty")]
    EmptyStatement,
    #[error("n must be at least 1")]
    ZeroCandidates,
    #[error("embedder failed{}: {source}", .flowchart_id.as_ref().map(|id| format!(" on chart {id}")).unwrap_or_default())]
    EmbedderFailure { flowchart_id: Option<String>, source: GatewayError },
    #[error("selector failed: {0}")]
    SelectorFailure(GatewayError),
    #[error("index was built with embedder {found}, expected {expected}")]
    EmbedderMismatch { expected: String, found: String },
    #[error("index file: {0}")]
    IndexFormat(String),
    #[error("index file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub demographics: Demographics,
    pub statement: String,
}

impl Query {
    pub fn new(demographics: Demographics, statement: impl Into<String>) -> Result<Self, RetrievalError> {
        let statement = statement.into();
        if statement.trim().is_empty() {
            return Err(RetrievalError::EmptyStatement);
        }
        Ok(Query { demographics, statement })
    }

    pub fn text(&self) -> String {
        compose_query_text(&self.demographics, &self.statement)
    }
}

pub fn compose_query_text(d: &Demographics, statement: &str) -> String {
    format!("Sex: {}. Age: {}. Concern: {}", d.sex, d.age_phrase(), statement)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub flowchart_id: String,
    pub name: String,
    pub description_text: String,
    pub applicability: Applicability,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    version: u32,
    embedder_id: String,
    dimension: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplicabilityFilter {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub flowchart_id: String,
    pub score: f64,
}

/// Orders by score descending, then id ascending.
pub fn rank_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.flowchart_id.cmp(&b.flowchart_id))
}

pub fn build_index(lib: &FlowchartLibrary, embedder: &dyn Embedder) -> Result<Index, RetrievalError> {
    if lib.is_empty() {
        return Err(RetrievalError::EmptyLibrary);
    }
    let mut entries = Vec::with_capacity(lib.len());
    for chart in lib.iter() {
        let text = chart.retrieval_text();
        let embedding = embed_one(embedder, &text)
            .map_err(|source| RetrievalError::EmbedderFailure { flowchart_id: Some(chart.id.clone()), source })?;
        entries.push(IndexEntry {
            flowchart_id: chart.id.clone(),
            name: chart.name.clone(),
            description_text: text,
            applicability: chart.applicability.clone(),
            embedding,
        });
    }
    Ok(Index { version: INDEX_FORMAT_VERSION, embedder_id: embedder.id().to_string(), dimension: embedder.dimension(), entries })
}

fn embed_one(embedder: &dyn Embedder, text: &str) -> Result<EmbeddingVector, GatewayError> {
    let mut out = embedder.embed(&[text.to_string()])?;
    match (out.pop(), out.is_empty()) {
        (Some(v), true) if v.dimension() == embedder.dimension() => Ok(v),
        _ => Err(GatewayError::MalformedProviderResponse("embedder returned the wrong shape".into())),
    }
}

impl Index {
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entry(&self, flowchart_id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.flowchart_id == flowchart_id)
    }

    /// Ranks entries against an already-embedded query.
    pub fn rank(&self, query: &EmbeddingVector, n: usize, filter: Option<&Demographics>) -> Vec<RankedCandidate> {
        let mut out: Vec<RankedCandidate> = self
            .entries
            .iter()
            .filter(|e| filter.is_none_or(|d| e.applicability.admits(d.sex, d.age_months())))
            .map(|e| RankedCandidate { flowchart_id: e.flowchart_id.clone(), score: e.embedding.cosine(query) })
            .collect();
        out.sort_by(rank_order);
        out.truncate(n);
        out
    }

    /// Ranks entries against free text, optionally restricted to charts admitting `filter`.
    pub fn search_text(
        &self,
        embedder: &dyn Embedder,
        text: &str,
        n: usize,
        filter: Option<&Demographics>,
    ) -> Result<Vec<RankedCandidate>, RetrievalError> {
        if n == 0 {
            return Err(RetrievalError::ZeroCandidates);
        }
        self.check_embedder(embedder)?;
        let q = embed_one(embedder, text).map_err(|source| RetrievalError::EmbedderFailure { flowchart_id: None, source })?;
        Ok(self.rank(&q, n, filter))
    }

    pub fn search(&self, embedder: &dyn Embedder, q: &Query, n: usize, filter: ApplicabilityFilter) -> Result<Vec<RankedCandidate>, RetrievalError> {
        let demographics = (filter == ApplicabilityFilter::On).then_some(&q.demographics);
        self.search_text(embedder, &q.text(), n, demographics)
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
        if embedder.id() != self.embedder_id {
            return Err(RetrievalError::EmbedderMismatch { expected: self.embedder_id.clone(), found: embedder.id().to_string() });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("index serializes")
    }

    /// Parses a sidecar, rejecting one built by a different embedder.
    pub fn from_json(text: &str, embedder_id: &str) -> Result<Self, RetrievalError> {
        let index: Index = serde_json::from_str(text).map_err(|e| RetrievalError::IndexFormat(e.to_string()))?;
        if index.version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::IndexFormat(format!("unsupported version {}", index.version)));
        }
        if index.embedder_id != embedder_id {
            return Err(RetrievalError::EmbedderMismatch { expected: embedder_id.to_string(), found: index.embedder_id });
        }
        if index.entries.iter().any(|e| e.embedding.dimension() != index.dimension) {
            return Err(RetrievalError::IndexFormat("entry dimension differs from header".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        std::fs::write(path, self.to_json()).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path, embedder_id: &str) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text, embedder_id)
    }
}

/// What a selector sees of one candidate. `score` is absent in unscored mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateInfo<'a> {
    pub flowchart_id: &'a str,
    pub name: &'a str,
    pub description: &'a str,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectorReply {
    Chart(String),
    NoFlowchartAvailable,
    /// The reply named nothing among the candidates.
    Unrecognized(String),
}

/// Picks one flowchart from ranked candidates. Must tolerate concurrent calls.
pub trait Selector: Send + Sync {
    fn name(&self) -> &str;
    fn select(&self, query_text: &str, candidates: &[CandidateInfo<'_>]) -> Result<SelectorReply, GatewayError>;
}

/// Takes the first candidate.
#[derive(Debug, Default, Clone, Copy)]
pub struct ArgmaxSelector;

impl Selector for ArgmaxSelector {
    fn name(&self) -> &str {
        "argmax-score"
    }

    fn select(&self, _: &str, candidates: &[CandidateInfo<'_>]) -> Result<SelectorReply, GatewayError> {
        Ok(candidates.first().map_or(SelectorReply::NoFlowchartAvailable, |c| SelectorReply::Chart(c.flowchart_id.to_string())))
    }
}

/// Asks a text generator with the retrieval-agent prompt.
pub struct LlmSelector<G> {
    generator: G,
}

impl<G: TextGenerator> LlmSelector<G> {
    pub fn new(generator: G) -> Self {
        LlmSelector { generator }
    }

    pub fn prompt(query_text: &str, candidates: &[CandidateInfo<'_>]) -> Result<String, GatewayError> {
        let listing = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| match c.score {
                Some(s) => format!("{}. {} [similarity {:.3}]: {}", i + 1, c.name, s, c.description),
                None => format!("{}. {}: {}", i + 1, c.name, c.description),
            })
            .collect::<Vec<_>>()
            .join("\n");
        Ok(render_with(TemplateId::RetrievalAgent, &[("patient", query_text.to_string()), ("candidates", listing)])?)
    }
}

impl<G: TextGenerator> Selector for LlmSelector<G> {
    fn name(&self) -> &str {
        self.generator.name()
    }

    fn select(&self, query_text: &str, candidates: &[CandidateInfo<'_>]) -> Result<SelectorReply, GatewayError> {
        let prompt = Self::prompt(query_text, candidates)?;
        let reply = self.generator.generate(&GenerationRequest::new(prompt).with_temperature(AGENT_TEMPERATURE))?;
        Ok(interpret_selector_reply(&reply, candidates))
    }
}

fn normalize(text: &str) -> String {
    let spaced: String = text.chars().map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' }).collect();
    let words: Vec<&str> = spaced.split_whitespace().collect();
    let words = match words.split_last() {
        Some((&"flowchart", rest)) => rest,
        _ => &words[..],
    };
    words.join(" ")
}

/// Maps free-text selector output onto a candidate by id or name.
///
/// An exact (normalized) match wins; otherwise the longest candidate name
/// contained in the reply.
pub fn interpret_selector_reply(reply: &str, candidates: &[CandidateInfo<'_>]) -> SelectorReply {
    let norm = normalize(reply);
    if norm.contains(NO_FLOWCHART_SENTINEL) {
        return SelectorReply::NoFlowchartAvailable;
    }
    let keys = |c: &CandidateInfo<'_>| [normalize(c.name), normalize(c.flowchart_id)];
    if let Some(c) = candidates.iter().find(|c| keys(c).contains(&norm)) {
        return SelectorReply::Chart(c.flowchart_id.to_string());
    }
    let padded = format!(" {norm} ");
    let best = candidates
        .iter()
        .filter_map(|c| {
            keys(c).into_iter().filter(|k| !k.is_empty() && padded.contains(&format!(" {k} "))).map(|k| k.len()).max().map(|len| (len, c))
        })
        .max_by(|(la, a), (lb, b)| la.cmp(lb).then_with(|| b.flowchart_id.cmp(a.flowchart_id)));
    match best {
        Some((_, c)) => SelectorReply::Chart(c.flowchart_id.to_string()),
        None => SelectorReply::Unrecognized(reply.trim().to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionOutcome {
    Chart { flowchart_id: String },
    NoFlowchartAvailable,
}

impl SelectionOutcome {
    pub fn flowchart_id(&self) -> Option<&str> {
        match self {
            SelectionOutcome::Chart { flowchart_id } => Some(flowchart_id),
            SelectionOutcome::NoFlowchartAvailable => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub outcome: SelectionOutcome,
    pub candidates_shown: Vec<RankedCandidate>,
}

fn info<'a>(index: &'a Index, id: &'a str, score: Option<f64>) -> Option<CandidateInfo<'a>> {
    index.entry(id).map(|e| CandidateInfo { flowchart_id: &e.flowchart_id, name: &e.name, description: &e.description_text, score })
}

fn resolve(reply: SelectorReply, allowed: &[CandidateInfo<'_>], selector: &str) -> SelectionOutcome {
    match reply {
        SelectorReply::Chart(id) if allowed.iter().any(|c| c.flowchart_id == id) => SelectionOutcome::Chart { flowchart_id: id },
        SelectorReply::Chart(id) => {
            log::warn!("selector {selector} chose {id:?}, which was not a candidate; treating as no flowchart available");
            SelectionOutcome::NoFlowchartAvailable
        }
        SelectorReply::Unrecognized(text) => {
            log::warn!("selector {selector} reply {text:?} names no candidate; treating as no flowchart available");
            SelectionOutcome::NoFlowchartAvailable
        }
        SelectorReply::NoFlowchartAvailable => SelectionOutcome::NoFlowchartAvailable,
    }
}

/// Lets `selector` choose among ranked `candidates`.
pub fn select_flowchart(index: &Index, candidates: &[RankedCandidate], q: &Query, selector: &dyn Selector) -> Result<Selection, RetrievalError> {
    let candidates_shown = candidates.iter().take(SHOWN_CANDIDATES).cloned().collect();
    let infos: Vec<CandidateInfo<'_>> = candidates.iter().filter_map(|c| info(index, &c.flowchart_id, Some(c.score))).collect();
    let outcome = if infos.is_empty() {
        SelectionOutcome::NoFlowchartAvailable
    } else {
        let reply = selector.select(&q.text(), &infos).map_err(RetrievalError::SelectorFailure)?;
        resolve(reply, &infos, selector.name())
    };
    Ok(Selection { outcome, candidates_shown })
}

/// Lets `selector` choose among every indexed chart, with no similarity scores.
pub fn select_unscored(index: &Index, q: &Query, selector: &dyn Selector) -> Result<Selection, RetrievalError> {
    let infos: Vec<CandidateInfo<'_>> = index.entries.iter().filter_map(|e| info(index, &e.flowchart_id, None)).collect();
    let reply = selector.select(&q.text(), &infos).map_err(RetrievalError::SelectorFailure)?;
    Ok(Selection { outcome: resolve(reply, &infos, selector.name()), candidates_shown: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_n: usize,
    pub filter: ApplicabilityFilter,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { top_n: DEFAULT_TOP_N, filter: ApplicabilityFilter::On }
    }
}

/// The two-stage pipeline: search, then select.
pub struct Retriever {
    pub index: Index,
    pub embedder: Box<dyn Embedder>,
    pub selector: Box<dyn Selector>,
    pub config: RetrievalConfig,
}

impl Retriever {
    pub fn retrieve(&self, q: &Query) -> Result<Selection, RetrievalError> {
        let candidates = self.index.search(self.embedder.as_ref(), q, self.config.top_n, self.config.filter)?;
        select_flowchart(&self.index, &candidates, q, self.selector.as_ref())
    }
}
