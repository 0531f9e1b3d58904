//! Triage sessions: intake, flowchart selection, question-by-question
//! navigation and the decision trail.

pub mod compose;
pub mod intake;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::demographics::{AgeUnit, Demographics, DemographicsError, Sex};
use crate::flowchart::{Condition, Flowchart, FlowchartLibrary, NodeBody, NodeId};
use crate::gateway::{HashEmbedder, GatewayError};
use crate::interpretation::{classify_response, derive_action, AxisVerdict, Classifier, InterpretationError, NavigationAction, RuleBasedClassifier};
use crate::retrieval::{build_index, ArgmaxSelector, Query, RankedCandidate, RetrievalConfig, RetrievalError, Retriever, Selection, SelectionOutcome};

pub use compose::{compose_reply, template_reply, ComposeContext, ComposeMode, LlmComposer, ReplyComposer, TemplateComposer};
pub use intake::{read_intake, IntakeFields};

pub const DEFAULT_STALL_LIMIT: u32 = 3;
pub const DEFAULT_REDIRECT_LIMIT: u32 = 5;

pub const GREETING_ASK_DEMOGRAPHICS: &str =
    "Hello, I'm here to help you decide what to do about your symptoms. First, is the patient male or female, and how old are they? (for example: female, 35 years or male, 8 months)";
pub const GREETING_ASK_CONCERN: &str = "Hello, I'm here to help you decide what to do about your symptoms. What is the main concern today?";
pub const ASK_SEX: &str = "Is the patient male or female?";
pub const ASK_AGE: &str = "How old is the patient? Please give a number of years or months (for example: 35 years or 8 months).";
pub const ASK_CONCERN: &str = "Thank you. Please describe the main concern in a sentence or two.";
pub const NO_FLOWCHART_ADVICE: &str = "I'm sorry, I can't offer guidance for this concern. Please seek medical attention directly by contacting your doctor or, if it feels urgent, going to the nearest emergency department.";
pub const STALLED_ADVICE: &str = "I'm having trouble getting a clear answer to this question. Please contact a clinician directly so they can help you.";

#[derive(Debug, thiserror::Error)]
pub enum ConversationError {
    #[error("session is closed ({phase})")]
    SessionClosed { phase: &'static str },
    #[error(transparent)]
    InvalidDemographics(#[from] DemographicsError),
    #[error("chart {flowchart_id} node {node_id} redirects to {target}, which is not in the library")]
    UnresolvableRedirect { flowchart_id: String, node_id: String, target: String },
    #[error("redirect from {flowchart_id} would visit more than {limit} flowcharts")]
    RedirectDepthExceeded { flowchart_id: String, limit: u32 },
    #[error("classifier failed: {0}")]
    ClassifierFailure(#[from] InterpretationError),
    #[error("retrieval failed: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("cannot switch flowcharts: {0}")]
    SwitchNotAllowed(String),
    #[error("corrupt session: {0}")]
    CorruptSession(String),
}

impl ConversationError {
    /// True when the failure came from an unreachable or rate-limited provider.
    pub fn is_provider_unavailable(&self) -> bool {
        let gw = match self {
            ConversationError::ClassifierFailure(InterpretationError::Classifier(e)) => e,
            ConversationError::Retrieval(RetrievalError::SelectorFailure(e)) => e,
            ConversationError::Retrieval(RetrievalError::EmbedderFailure { source, .. }) => source,
            _ => return false,
        };
        gw.is_transient() || matches!(gw, GatewayError::Auth { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum SessionPhase {
    CollectingDemographics,
    CollectingConcern,
    Navigating { flowchart_id: String, node_id: NodeId, consecutive_non_advances: u32, redirect_depth: u32 },
    Completed { flowchart_id: String, recommendation: String, terminal_node_id: NodeId },
    NoFlowchartEscalation,
    StalledEscalation { flowchart_id: String, node_id: NodeId },
}

impl SessionPhase {
    pub fn name(&self) -> &'static str {
        match self {
            SessionPhase::CollectingDemographics => "collecting_demographics",
            SessionPhase::CollectingConcern => "collecting_concern",
            SessionPhase::Navigating { .. } => "navigating",
            SessionPhase::Completed { .. } => "completed",
            SessionPhase::NoFlowchartEscalation => "no_flowchart_escalation",
            SessionPhase::StalledEscalation { .. } => "stalled_escalation",
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, SessionPhase::Completed { .. } | SessionPhase::NoFlowchartEscalation | SessionPhase::StalledEscalation { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

/// One classified patient turn at a question node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub turn: u32,
    pub flowchart_id: String,
    pub node_id: NodeId,
    pub question: String,
    pub utterance: String,
    pub verdict: AxisVerdict,
    pub action: NavigationAction,
    pub timestamp: String,
}

/// A flowchart the session has navigated, and how it got there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum ChartVisit {
    Selected { flowchart_id: String },
    Switched { flowchart_id: String, from: String },
    Redirect { flowchart_id: String, from: String, node_id: NodeId },
}

impl ChartVisit {
    pub fn flowchart_id(&self) -> &str {
        match self {
            ChartVisit::Selected { flowchart_id } | ChartVisit::Switched { flowchart_id, .. } | ChartVisit::Redirect { flowchart_id, .. } => flowchart_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub demographics: Option<Demographics>,
    pub phase: SessionPhase,
    pub transcript: Vec<Message>,
    pub trail: Vec<TrailEntry>,
    pub selection: Option<Selection>,
    pub visits: Vec<ChartVisit>,
    /// Sex given before the age during intake.
    pending_sex: Option<Sex>,
    /// Age given before the sex during intake.
    pending_age: Option<(u32, AgeUnit)>,
    turns: u32,
}

impl Session {
    pub fn trail(&self) -> &[TrailEntry] {
        &self.trail
    }

    /// The question currently awaiting an answer.
    pub fn current_node(&self) -> Option<(&str, &NodeId)> {
        match &self.phase {
            SessionPhase::Navigating { flowchart_id, node_id, .. } => Some((flowchart_id, node_id)),
            _ => None,
        }
    }

    fn say(&mut self, speaker: Speaker, text: impl Into<String>) {
        self.transcript.push(Message { speaker, text: text.into() });
    }
}

pub fn get_trail(s: &Session) -> &[TrailEntry] {
    &s.trail
}

/// One JSON object per line, newline-terminated.
pub fn trail_jsonl(trail: &[TrailEntry]) -> String {
    trail.iter().map(|e| serde_json::to_string(e).expect("trail entry serializes") + "\n").collect()
}

/// Source of trail timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

/// Always reports the same instant.
#[derive(Debug, Clone)]
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

/// 128 random bits as lowercase hex.
pub fn new_session_id() -> String {
    let bytes: [u8; 16] = rand::random();
    hex::encode(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub stall_limit: u32,
    /// Most flowcharts one session may visit, counting the first.
    pub redirect_limit: u32,
    pub retrieval: RetrievalConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { stall_limit: DEFAULT_STALL_LIMIT, redirect_limit: DEFAULT_REDIRECT_LIMIT, retrieval: RetrievalConfig::default() }
    }
}

/// Everything a turn needs besides the session itself. Shareable across threads.
pub struct Engine {
    pub library: Arc<FlowchartLibrary>,
    pub retriever: Retriever,
    pub classifier: Box<dyn Classifier>,
    pub composer: Box<dyn ReplyComposer>,
    pub clock: Box<dyn Clock>,
    pub config: EngineConfig,
}

/// Where processing stopped after entering a node.
enum Settled {
    Question { flowchart_id: String, node_id: NodeId, text: String },
    Action { flowchart_id: String, node_id: NodeId, text: String },
}

impl Engine {
    /// Hash embedder, argmax selector, rule-based classifier, template composer.
    pub fn offline(library: Arc<FlowchartLibrary>, config: EngineConfig) -> Result<Self, ConversationError> {
        let index = build_index(&library, &HashEmbedder)?;
        let retriever = Retriever { index, embedder: Box::new(HashEmbedder), selector: Box::new(ArgmaxSelector), config: config.retrieval };
        Ok(Engine {
            library,
            retriever,
            classifier: Box::new(RuleBasedClassifier::default()),
            composer: Box::new(TemplateComposer),
            clock: Box::new(SystemClock),
            config,
        })
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn start_session(&self, demographics: Option<Demographics>) -> Session {
        self.start_session_with_id(new_session_id(), demographics)
    }

    pub fn start_session_with_id(&self, id: String, demographics: Option<Demographics>) -> Session {
        let (phase, greeting) = match demographics {
            Some(_) => (SessionPhase::CollectingConcern, GREETING_ASK_CONCERN),
            None => (SessionPhase::CollectingDemographics, GREETING_ASK_DEMOGRAPHICS),
        };
        let mut s = Session {
            id,
            demographics,
            phase,
            transcript: Vec::new(),
            trail: Vec::new(),
            selection: None,
            visits: Vec::new(),
            pending_sex: None,
            pending_age: None,
            turns: 0,
        };
        s.say(Speaker::Agent, greeting);
        s
    }

    /// Starts from whatever intake fields are known; a complete pair must be valid.
    pub fn start_session_from(&self, sex: Option<Sex>, age: Option<(u32, AgeUnit)>) -> Result<Session, ConversationError> {
        match (sex, age) {
            (Some(sex), Some((value, unit))) => Ok(self.start_session(Some(Demographics::new(sex, value, unit)?))),
            (sex, age) => {
                let mut s = self.start_session(None);
                s.pending_sex = sex;
                s.pending_age = age;
                Ok(s)
            }
        }
    }

    /// Skips retrieval and begins navigating `flowchart_id` at its entry.
    pub fn start_navigation(&self, demographics: Demographics, flowchart_id: &str) -> Result<(Session, String), ConversationError> {
        let chart = self.chart(flowchart_id)?;
        let mut s = self.start_session(Some(demographics));
        s.visits = vec![ChartVisit::Selected { flowchart_id: flowchart_id.to_string() }];
        let mut notes = Vec::new();
        let mut visits = s.visits.clone();
        let settled = self.settle(flowchart_id, chart.entry.clone(), "", &mut notes, &mut visits)?;
        s.visits = visits;
        let reply = self.finish(&mut s, settled, notes, "");
        s.say(Speaker::Agent, reply.clone());
        Ok((s, reply))
    }

    /// Handles one patient message. On error the session is left unchanged.
    pub fn submit_message(&self, session: &mut Session, text: &str) -> Result<String, ConversationError> {
        if session.phase.is_closed() {
            return Err(ConversationError::SessionClosed { phase: session.phase.name() });
        }
        let mut next = session.clone();
        next.turns += 1;
        next.say(Speaker::Patient, text);
        let reply = match next.phase.clone() {
            SessionPhase::CollectingDemographics => self.intake(&mut next, text),
            SessionPhase::CollectingConcern => self.select(&mut next, text)?,
            SessionPhase::Navigating { flowchart_id, node_id, consecutive_non_advances, redirect_depth } => {
                self.navigate(&mut next, text, &flowchart_id, &node_id, consecutive_non_advances, redirect_depth)?
            }
            closed => return Err(ConversationError::SessionClosed { phase: closed.name() }),
        };
        next.say(Speaker::Agent, reply.clone());
        *session = next;
        Ok(reply)
    }

    /// Moves to another shown candidate before the first answer.
    pub fn switch_flowchart(&self, session: &mut Session, flowchart_id: &str) -> Result<String, ConversationError> {
        let current = match &session.phase {
            SessionPhase::Navigating { flowchart_id, .. } if session.trail.is_empty() && session.visits.len() == 1 => flowchart_id.clone(),
            SessionPhase::Navigating { .. } => return Err(ConversationError::SwitchNotAllowed("the first question has already been answered".into())),
            other => return Err(ConversationError::SwitchNotAllowed(format!("session is {}", other.name()))),
        };
        let shown = session.selection.as_ref().is_some_and(|s| s.candidates_shown.iter().any(|c| c.flowchart_id == flowchart_id));
        if !shown {
            return Err(ConversationError::SwitchNotAllowed(format!("{flowchart_id} was not among the suggested flowcharts")));
        }
        let chart = self.chart(flowchart_id)?;
        let mut next = session.clone();
        next.visits = vec![ChartVisit::Switched { flowchart_id: flowchart_id.to_string(), from: current }];
        let mut notes = vec![format!("Switching to the {}.", chart.name)];
        let mut visits = next.visits.clone();
        let settled = self.settle(flowchart_id, chart.entry.clone(), "", &mut notes, &mut visits)?;
        next.visits = visits;
        let reply = self.finish(&mut next, settled, notes, "");
        next.say(Speaker::Agent, reply.clone());
        *session = next;
        Ok(reply)
    }

    fn intake(&self, s: &mut Session, text: &str) -> String {
        let fields = match read_intake(text) {
            Ok(f) => f,
            Err(e) => return format!("Sorry, I couldn't use that ({e}). {}", ASK_AGE),
        };
        let sex = fields.sex.or(s.pending_sex);
        let age = fields.age.or(s.pending_age);
        match (sex, age) {
            (Some(sex), Some((value, unit))) => match Demographics::new(sex, value, unit) {
                Ok(d) => {
                    s.demographics = Some(d);
                    s.pending_sex = None;
                    s.pending_age = None;
                    s.phase = SessionPhase::CollectingConcern;
                    ASK_CONCERN.to_string()
                }
                Err(e) => {
                    s.pending_sex = Some(sex);
                    s.pending_age = None;
                    format!("Sorry, {e}. {ASK_AGE}")
                }
            },
            (Some(sex), None) => {
                s.pending_sex = Some(sex);
                ASK_AGE.to_string()
            }
            (None, Some(age)) => {
                s.pending_age = Some(age);
                ASK_SEX.to_string()
            }
            (None, None) => format!("{ASK_SEX} {ASK_AGE}"),
        }
    }

    fn select(&self, s: &mut Session, text: &str) -> Result<String, ConversationError> {
        let demographics = s.demographics.ok_or_else(|| ConversationError::CorruptSession("no demographics while collecting concern".into()))?;
        if text.trim().is_empty() {
            return Ok(ASK_CONCERN.to_string());
        }
        let query = Query::new(demographics, text)?;
        let selection = self.retriever.retrieve(&query)?;
        let outcome = selection.outcome.clone();
        let shown = selection.candidates_shown.clone();
        s.selection = Some(selection);
        let flowchart_id = match outcome {
            SelectionOutcome::NoFlowchartAvailable => {
                s.phase = SessionPhase::NoFlowchartEscalation;
                return Ok(NO_FLOWCHART_ADVICE.to_string());
            }
            SelectionOutcome::Chart { flowchart_id } => flowchart_id,
        };
        let chart = self.chart(&flowchart_id)?;
        s.visits = vec![ChartVisit::Selected { flowchart_id: flowchart_id.clone() }];
        let mut notes = vec![self.selection_preamble(chart, &shown)];
        let mut visits = s.visits.clone();
        let settled = self.settle(&flowchart_id, chart.entry.clone(), text, &mut notes, &mut visits)?;
        s.visits = visits;
        Ok(self.finish(s, settled, notes, text))
    }

    fn selection_preamble(&self, chart: &Flowchart, shown: &[RankedCandidate]) -> String {
        let names: Vec<&str> = shown.iter().filter_map(|c| self.library.get(&c.flowchart_id)).map(|c| c.name.as_str()).collect();
        let mut out = format!("I'll guide you using the {}.", chart.name);
        if !names.is_empty() {
            out.push_str(&format!(" Other potentially relevant flowcharts: {}.", names.join(", ")));
        }
        out
    }

    fn navigate(
        &self,
        s: &mut Session,
        text: &str,
        flowchart_id: &str,
        node_id: &NodeId,
        non_advances: u32,
        redirect_depth: u32,
    ) -> Result<String, ConversationError> {
        let chart = self.chart(flowchart_id)?;
        let question = chart
            .node(node_id)
            .filter(|n| matches!(n.body, NodeBody::Question { .. }))
            .ok_or_else(|| ConversationError::CorruptSession(format!("{flowchart_id}/{node_id} is not a question")))?
            .text()
            .to_string();
        let verdict = classify_response(&question, text, self.classifier.as_ref())?;
        let action = derive_action(&verdict);
        let entry = TrailEntry {
            turn: s.turns,
            flowchart_id: flowchart_id.to_string(),
            node_id: node_id.clone(),
            question: question.clone(),
            utterance: text.to_string(),
            verdict,
            action,
            timestamp: self.clock.now(),
        };
        let ctx = ComposeContext { patient_message: text, is_action: false };
        match action {
            NavigationAction::Advance { answer } => {
                let to = chart
                    .successor(node_id, Condition::from(answer))
                    .ok_or_else(|| ConversationError::CorruptSession(format!("{flowchart_id}/{node_id} has no {answer:?} branch")))?
                    .clone();
                let mut notes = Vec::new();
                let mut visits = s.visits.clone();
                let settled = self.settle(flowchart_id, to, text, &mut notes, &mut visits)?;
                s.trail.push(entry);
                s.visits = visits;
                Ok(self.finish(s, settled, notes, text))
            }
            NavigationAction::ConfirmUncertain | NavigationAction::Clarify | NavigationAction::RestateOffTopic => {
                s.trail.push(entry);
                let count = non_advances + 1;
                if count >= self.config.stall_limit {
                    s.phase = SessionPhase::StalledEscalation { flowchart_id: flowchart_id.to_string(), node_id: node_id.clone() };
                    return Ok(STALLED_ADVICE.to_string());
                }
                s.phase = SessionPhase::Navigating {
                    flowchart_id: flowchart_id.to_string(),
                    node_id: node_id.clone(),
                    consecutive_non_advances: count,
                    redirect_depth,
                };
                let mode = if action == NavigationAction::ConfirmUncertain { ComposeMode::Confirm } else { ComposeMode::ReAsk };
                Ok(compose_reply(mode, &question, &ctx, self.composer.as_ref()))
            }
        }
    }

    /// Follows Info and Redirect nodes from `node_id` until a Question or Action.
    fn settle(
        &self,
        flowchart_id: &str,
        mut node_id: NodeId,
        patient_message: &str,
        notes: &mut Vec<String>,
        visits: &mut Vec<ChartVisit>,
    ) -> Result<Settled, ConversationError> {
        let mut chart_id = flowchart_id.to_string();
        let ctx = ComposeContext { patient_message, is_action: true };
        loop {
            let chart = self.chart(&chart_id)?;
            let node = chart
                .node(&node_id)
                .ok_or_else(|| ConversationError::CorruptSession(format!("{chart_id} has no node {node_id}")))?;
            match &node.body {
                NodeBody::Question { text } => return Ok(Settled::Question { flowchart_id: chart_id, node_id, text: text.clone() }),
                NodeBody::Action { text } => return Ok(Settled::Action { flowchart_id: chart_id, node_id, text: text.clone() }),
                NodeBody::Info { text } => {
                    notes.push(compose_reply(ComposeMode::Convey, text, &ctx, self.composer.as_ref()));
                    node_id = chart
                        .successor(&node_id, Condition::Unconditional)
                        .ok_or_else(|| ConversationError::CorruptSession(format!("{chart_id}/{node_id} has no onward edge")))?
                        .clone();
                }
                NodeBody::Redirect { target, .. } => {
                    let Some(next) = self.library.get(target) else {
                        return Err(ConversationError::UnresolvableRedirect {
                            flowchart_id: chart_id,
                            node_id: node_id.to_string(),
                            target: target.clone(),
                        });
                    };
                    if visits.len() as u32 >= self.config.redirect_limit {
                        return Err(ConversationError::RedirectDepthExceeded { flowchart_id: chart_id, limit: self.config.redirect_limit });
                    }
                    visits.push(ChartVisit::Redirect { flowchart_id: next.id.clone(), from: chart_id.clone(), node_id: node_id.clone() });
                    notes.push(format!("Let's continue with the {}.", next.name));
                    chart_id = next.id.clone();
                    node_id = next.entry.clone();
                }
            }
        }
    }

    fn finish(&self, s: &mut Session, settled: Settled, mut notes: Vec<String>, patient_message: &str) -> String {
        let redirect_depth = s.visits.iter().filter(|v| matches!(v, ChartVisit::Redirect { .. })).count() as u32;
        match settled {
            Settled::Question { flowchart_id, node_id, text } => {
                let ctx = ComposeContext { patient_message, is_action: false };
                notes.push(compose_reply(ComposeMode::Convey, &text, &ctx, self.composer.as_ref()));
                s.phase = SessionPhase::Navigating { flowchart_id, node_id, consecutive_non_advances: 0, redirect_depth };
            }
            Settled::Action { flowchart_id, node_id, text } => {
                let ctx = ComposeContext { patient_message, is_action: true };
                notes.push(compose_reply(ComposeMode::Convey, &text, &ctx, self.composer.as_ref()));
                s.phase = SessionPhase::Completed { flowchart_id, recommendation: text, terminal_node_id: node_id };
            }
        }
        notes.join("\n\n")
    }

    fn chart(&self, id: &str) -> Result<&Flowchart, ConversationError> {
        self.library.get(id).ok_or_else(|| ConversationError::CorruptSession(format!("flowchart {id} is not loaded")))
    }

    pub fn view(&self, s: &Session) -> SessionView {
        SessionView::project(s, &self.library)
    }
}

/// A named flowchart reference for clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRef {
    pub id: String,
    pub name: String,
    pub specialty: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// The client-facing projection of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub phase: String,
    pub demographics: Option<Demographics>,
    pub node_id: Option<NodeId>,
    pub current_question: Option<String>,
    pub selected_flowchart: Option<ChartRef>,
    pub current_flowchart: Option<ChartRef>,
    pub alternatives: Vec<ChartRef>,
    pub recommendation: Option<String>,
    pub can_switch: bool,
    pub transcript: Vec<Message>,
}

impl SessionView {
    pub fn project(s: &Session, lib: &FlowchartLibrary) -> Self {
        let chart_ref = |id: &str, score: Option<f64>| {
            lib.get(id).map(|c| ChartRef { id: c.id.clone(), name: c.name.clone(), specialty: c.specialty.clone(), score })
        };
        let (node_id, current_question, current_chart) = match &s.phase {
            SessionPhase::Navigating { flowchart_id, node_id, .. } => (
                Some(node_id.clone()),
                lib.get(flowchart_id).and_then(|c| c.node(node_id)).map(|n| n.text().to_string()),
                Some(flowchart_id.as_str()),
            ),
            SessionPhase::Completed { flowchart_id, terminal_node_id, .. } => (Some(terminal_node_id.clone()), None, Some(flowchart_id.as_str())),
            SessionPhase::StalledEscalation { flowchart_id, node_id } => (Some(node_id.clone()), None, Some(flowchart_id.as_str())),
            _ => (None, None, None),
        };
        let recommendation = match &s.phase {
            SessionPhase::Completed { recommendation, .. } => Some(recommendation.clone()),
            SessionPhase::NoFlowchartEscalation => Some(NO_FLOWCHART_ADVICE.to_string()),
            SessionPhase::StalledEscalation { .. } => Some(STALLED_ADVICE.to_string()),
            _ => None,
        };
        let selected = s.selection.as_ref().and_then(|sel| sel.outcome.flowchart_id()).and_then(|id| chart_ref(id, None));
        let alternatives = s
            .selection
            .as_ref()
            .map(|sel| sel.candidates_shown.iter().filter_map(|c| chart_ref(&c.flowchart_id, Some(c.score))).collect())
            .unwrap_or_default();
        SessionView {
            id: s.id.clone(),
            phase: s.phase.name().to_string(),
            demographics: s.demographics,
            node_id,
            current_question,
            selected_flowchart: selected,
            current_flowchart: current_chart.and_then(|id| chart_ref(id, None)),
            alternatives,
            recommendation,
            can_switch: matches!(s.phase, SessionPhase::Navigating { .. }) && s.trail.is_empty() && s.visits.len() == 1,
            transcript: s.transcript.clone(),
        }
    }
}
