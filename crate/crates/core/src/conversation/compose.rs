//! Patient-facing phrasing of node content.

use serde::{Deserialize, Serialize};

use crate::gateway::prompts::{render_with, TemplateId};
use crate::gateway::{GatewayError, GenerationRequest, TextGenerator, AGENT_TEMPERATURE};

pub const REASK_PREFIX: &str = "Let's get back to the question: ";
pub const CONFIRM_PREFIX: &str = "Just to confirm \u{2014} ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeMode {
    Convey,
    ReAsk,
    Confirm,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ComposeContext<'a> {
    /// The patient's most recent message, if any.
    pub patient_message: &'a str,
    /// True when `node_text` is a recommendation rather than a question.
    pub is_action: bool,
}

pub trait ReplyComposer: Send + Sync {
    fn name(&self) -> &str;
    fn compose(&self, mode: ComposeMode, node_text: &str, ctx: &ComposeContext<'_>) -> Result<String, GatewayError>;
}

/// Fixed sentences around the node text.
#[derive(Debug, Default, Clone, Copy)]
pub struct TemplateComposer;

pub fn template_reply(mode: ComposeMode, node_text: &str) -> String {
    match mode {
        ComposeMode::Convey => node_text.to_string(),
        ComposeMode::ReAsk => format!("{REASK_PREFIX}{node_text}"),
        ComposeMode::Confirm => format!("{CONFIRM_PREFIX}{node_text}"),
    }
}

impl ReplyComposer for TemplateComposer {
    fn name(&self) -> &str {
        "template"
    }

    fn compose(&self, mode: ComposeMode, node_text: &str, _: &ComposeContext<'_>) -> Result<String, GatewayError> {
        if node_text.trim().is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        Ok(template_reply(mode, node_text))
    }
}

/// Phrases replies with a text generator and the chat-agent prompts.
///
/// Output that drops the question text verbatim is rejected, so callers fall
/// back to the template.
pub struct LlmComposer<G> {
    generator: G,
}

impl<G: TextGenerator> LlmComposer<G> {
    pub fn new(generator: G) -> Self {
        LlmComposer { generator }
    }

    pub fn prompt(mode: ComposeMode, node_text: &str, ctx: &ComposeContext<'_>) -> Result<String, GatewayError> {
        let id = match mode {
            ComposeMode::Convey => TemplateId::ChatConvey,
            ComposeMode::ReAsk => TemplateId::ChatReask,
            ComposeMode::Confirm => TemplateId::ChatConfirm,
        };
        Ok(render_with(id, &[("node_text", node_text.to_string()), ("patient_message", ctx.patient_message.to_string())])?)
    }
}

impl<G: TextGenerator> ReplyComposer for LlmComposer<G> {
    fn name(&self) -> &str {
        self.generator.name()
    }

    fn compose(&self, mode: ComposeMode, node_text: &str, ctx: &ComposeContext<'_>) -> Result<String, GatewayError> {
        if node_text.trim().is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        let prompt = Self::prompt(mode, node_text, ctx)?;
        let text = self.generator.generate(&GenerationRequest::new(prompt).with_temperature(AGENT_TEMPERATURE))?;
        let keeps_question = ctx.is_action && mode == ComposeMode::Convey || text.contains(node_text);
        if text.trim().is_empty() || !keeps_question {
            return Err(GatewayError::MalformedProviderResponse("reply does not restate the node text".into()));
        }
        Ok(text.trim().to_string())
    }
}

/// Composes with `composer`, degrading to the template on any failure.
pub fn compose_reply(mode: ComposeMode, node_text: &str, ctx: &ComposeContext<'_>, composer: &dyn ReplyComposer) -> String {
    composer.compose(mode, node_text, ctx).unwrap_or_else(|e| {
        log::warn!("composer {} failed ({e}); using template", composer.name());
        template_reply(mode, node_text)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::StubGenerator;

    #[test]
    fn templates() {
        let q = "Is the pain severe?";
        let ctx = ComposeContext::default();
        assert_eq!(TemplateComposer.compose(ComposeMode::Convey, "See your doctor today.", &ctx).unwrap(), "See your doctor today.");
        assert_eq!(TemplateComposer.compose(ComposeMode::ReAsk, q, &ctx).unwrap(), "Let's get back to the question: Is the pain severe?");
        assert_eq!(TemplateComposer.compose(ComposeMode::Confirm, q, &ctx).unwrap(), "Just to confirm \u{2014} Is the pain severe?");
        assert!(TemplateComposer.compose(ComposeMode::Convey, " ", &ctx).is_err());
    }

    #[test]
    fn provider_output_kept_only_with_question_text() {
        let q = "Is the pain severe?";
        let ctx = ComposeContext { patient_message: "what?", is_action: false };
        let good = StubGenerator::new("g").with_fallback(|_| Ok("I understand. Is the pain severe?".into()));
        assert_eq!(compose_reply(ComposeMode::ReAsk, q, &ctx, &LlmComposer::new(good)), "I understand. Is the pain severe?");
        let drifting = StubGenerator::new("d").with_fallback(|_| Ok("How bad does it hurt?".into()));
        assert_eq!(compose_reply(ComposeMode::ReAsk, q, &ctx, &LlmComposer::new(drifting)), template_reply(ComposeMode::ReAsk, q));
        let down = StubGenerator::new("x").with_fallback(|_| Err(GatewayError::Timeout { attempts: 4 }));
        assert_eq!(compose_reply(ComposeMode::Confirm, q, &ctx, &LlmComposer::new(down)), template_reply(ComposeMode::Confirm, q));
    }

    #[test]
    fn prompt_carries_node_text() {
        let p = LlmComposer::<StubGenerator>::prompt(ComposeMode::Confirm, "Is it red?", &ComposeContext { patient_message: "maybe", is_action: false }).unwrap();
        assert!(p.contains("try confirming this:\nIs it red?"));
        assert!(p.contains("Patient's last message: maybe"));
    }
}
