//! Query construction, retrieval, prompt composition, and generation.
//!
//! The offline path (local embedder, exact search, echo or fixed stub) is
//! byte-deterministic end to end: equal inputs produce identical prompt bytes
//! and answers on every platform.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::scene::SceneText;
use crate::store::{Collection, SearchHit, SearchMode};

/// Identifier of the built-in prompt template.
pub const TEMPLATE_WIRELESS_V1: &str = "wireless-v1";

const WIRELESS_V1_SYSTEM: &str = include_str!("../assets/templates/wireless-v1.txt");

/// Sentinel used in place of an empty retrieved section.
pub const NO_CONTEXT_SENTINEL: &str = "no retrieved context";

/// Resolves a template id to its system instruction.
pub fn template_system(template_id: &str) -> Result<&'static str> {
    match template_id {
        TEMPLATE_WIRELESS_V1 => Ok(WIRELESS_V1_SYSTEM.trim_end()),
        other => Err(Error::UnknownTemplate(other.to_string())),
    }
}

/// One retrieved chunk as it appears in the prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedChunk {
    pub rank: usize,
    pub score: f32,
    pub text: String,
    pub source: BTreeMap<String, String>,
}

/// The four prompt sections, ready for serialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuredPrompt {
    pub system: String,
    pub scene_context: String,
    pub retrieved: Vec<RetrievedChunk>,
    pub question: String,
}

impl StructuredPrompt {
    /// Canonical serialization; `GenerationResult::prompt_bytes` is exactly
    /// these bytes.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[system]\n");
        out.push_str(&self.system);
        out.push_str("\n\n");
        out.push_str(&self.user_message());
        out
    }

    /// The sections sent as the user message of a chat request.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        out.push_str("[scene]\n");
        if self.scene_context.is_empty() {
            out.push_str("no scene context");
        } else {
            out.push_str(self.scene_context.trim_end());
        }
        out.push_str("\n\n[retrieved]\n");
        if self.retrieved.is_empty() {
            out.push_str(NO_CONTEXT_SENTINEL);
            out.push('\n');
        } else {
            for chunk in &self.retrieved {
                let source = chunk
                    .source
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(
                    out,
                    "[{}] ({:.4}) {} — {}",
                    chunk.rank, chunk.score, chunk.text, source
                );
            }
        }
        out.push_str("\n[question]\n");
        out.push_str(&self.question);
        out.push('\n');
        out
    }
}

/// Concatenates scene body and question into the text that gets embedded for
/// retrieval. Scene first, one blank line, then the question.
pub fn build_query_text(scene: Option<&SceneText>, question: &str) -> Result<String> {
    if question.trim().is_empty() {
        return Err(Error::EmptyQuestion);
    }
    Ok(match scene {
        Some(scene) => format!("{}\n\n{}", scene.body.trim_end(), question),
        None => question.to_string(),
    })
}

/// Embeds `query_text` and runs the requested search. The embedder's
/// provider tag must match the one recorded in the collection manifest.
pub fn retrieve_context(
    collection: &Collection,
    embedder: &dyn TextEmbedder,
    query_text: &str,
    k: usize,
    mode: SearchMode,
) -> Result<Vec<SearchHit>> {
    let manifest_provider = &collection.manifest().provider;
    let configured = embedder.provider_tag();
    if manifest_provider != &configured {
        return Err(Error::ProviderMismatch {
            manifest: manifest_provider.clone(),
            configured,
        });
    }
    let query = embedder.embed(query_text)?;
    match mode {
        SearchMode::Exact => collection.search_exact(&query, k),
        SearchMode::Ann => collection.search_ann(&query, k),
    }
}

/// Fills the four prompt sections from a scene, ranked hits, and question.
pub fn compose_prompt(
    scene: Option<&SceneText>,
    hits: &[SearchHit],
    question: &str,
    template_id: &str,
) -> Result<StructuredPrompt> {
    if question.trim().is_empty() {
        return Err(Error::EmptyQuestion);
    }
    let system = template_system(template_id)?.to_string();
    Ok(StructuredPrompt {
        system,
        scene_context: scene.map(|s| s.body.clone()).unwrap_or_default(),
        retrieved: hits
            .iter()
            .enumerate()
            .map(|(i, hit)| RetrievedChunk {
                rank: i + 1,
                score: hit.score,
                text: hit.text.clone(),
                source: hit.metadata.clone(),
            })
            .collect(),
        question: question.to_string(),
    })
}

/// Token accounting reported by a remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_tokens: Option<u64>,
}

/// Remote chat-completions endpoint configuration.
#[derive(Debug, Clone)]
pub struct ChatEndpoint {
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Default 0 for reproducibility.
    pub temperature: f64,
    pub policy: RetryPolicy,
}

impl ChatEndpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            model: model.into(),
            api_key: None,
            temperature: 0.0,
            policy: RetryPolicy::default(),
        }
    }
}

/// Generation backend: a remote chat endpoint or one of two offline stubs.
///
/// `Echo` answers with the rank-1 retrieved chunk verbatim (retrieval
/// sensitive); `Fixed` always answers the configured constant (retrieval
/// blind). The pair reproduces the RAG-vs-vanilla contrast without any
/// external model.
pub enum Backend {
    Remote(ChatEndpoint),
    Echo,
    Fixed(String),
}

/// Outcome of one generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub answer: String,
    pub prompt_bytes: Vec<u8>,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Produces an answer for the prompt using the configured backend.
pub fn generate(prompt: &StructuredPrompt, backend: &Backend) -> Result<GenerationResult> {
    let started = Instant::now();
    let prompt_bytes = prompt.render().into_bytes();
    let (answer, usage) = match backend {
        Backend::Echo => (
            prompt.retrieved.first().map(|c| c.text.clone()).unwrap_or_default(),
            None,
        ),
        Backend::Fixed(text) => (text.clone(), None),
        Backend::Remote(endpoint) => {
            let client = JsonClient::new(endpoint.policy)?;
            let user = prompt.user_message();
            let request = ChatRequest {
                model: &endpoint.model,
                messages: vec![
                    ChatMessage { role: "system", content: &prompt.system },
                    ChatMessage { role: "user", content: &user },
                ],
                temperature: endpoint.temperature,
            };
            let value = client.post_json(&endpoint.url, endpoint.api_key.as_deref(), &request)?;
            let response: ChatResponse = serde_json::from_value(value)
                .map_err(|e| Error::Protocol(format!("chat response: {e}")))?;
            let choice = response
                .choices
                .into_iter()
                .next()
                .ok_or_else(|| Error::Protocol("chat response carried no choices".into()))?;
            (choice.message.content, response.usage)
        }
    };
    Ok(GenerationResult {
        answer,
        prompt_bytes,
        usage,
        latency_ms: started.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_text(body: &str) -> SceneText {
        SceneText {
            scene_id: "s1".into(),
            body: body.to_string(),
            distance_km: 0.5,
            bearing_deg: 90.0,
            vehicle_count: 2,
            best_beam: None,
        }
    }

    fn hit(score: f32, text: &str) -> SearchHit {
        SearchHit {
            id: format!("id-{text}"),
            score,
            text: text.to_string(),
            metadata: BTreeMap::from([("source".to_string(), "scene".to_string())]),
        }
    }

    #[test]
    fn query_text_without_scene_is_question() {
        assert_eq!(build_query_text(None, "where is the truck?").unwrap(), "where is the truck?");
    }

    #[test]
    fn query_text_scene_precedes_question() {
        let scene = scene_text("a busy street\n");
        let text = build_query_text(Some(&scene), "where is the truck?").unwrap();
        assert_eq!(text, "a busy street\n\nwhere is the truck?");
    }

    #[test]
    fn query_text_rejects_empty_question() {
        assert!(matches!(build_query_text(None, "  "), Err(Error::EmptyQuestion)));
    }

    #[test]
    fn compose_orders_hits_by_rank() {
        let hits = vec![hit(0.9, "first"), hit(0.7, "second")];
        let prompt = compose_prompt(None, &hits, "q?", TEMPLATE_WIRELESS_V1).unwrap();
        assert_eq!(prompt.retrieved[0].rank, 1);
        assert_eq!(prompt.retrieved[1].rank, 2);
        let rendered = prompt.render();
        let first = rendered.find("[1] (0.9000) first").expect("rank 1 line");
        let second = rendered.find("[2] (0.7000) second").expect("rank 2 line");
        assert!(first < second);
    }

    #[test]
    fn compose_zero_hits_uses_sentinel() {
        let prompt = compose_prompt(None, &[], "q?", TEMPLATE_WIRELESS_V1).unwrap();
        assert!(prompt.render().contains(NO_CONTEXT_SENTINEL));
    }

    #[test]
    fn compose_rejects_unknown_template() {
        assert!(matches!(
            compose_prompt(None, &[], "q?", "nonexistent-v9"),
            Err(Error::UnknownTemplate(_))
        ));
    }

    #[test]
    fn render_is_deterministic() {
        let scene = scene_text("body line\n");
        let hits = vec![hit(0.5, "chunk")];
        let a = compose_prompt(Some(&scene), &hits, "q?", TEMPLATE_WIRELESS_V1).unwrap();
        let b = compose_prompt(Some(&scene), &hits, "q?", TEMPLATE_WIRELESS_V1).unwrap();
        assert_eq!(a.render().into_bytes(), b.render().into_bytes());
    }

    #[test]
    fn echo_stub_returns_rank_one_chunk() {
        let hits = vec![hit(0.9, "scene A text"), hit(0.2, "scene B text")];
        let prompt = compose_prompt(None, &hits, "q?", TEMPLATE_WIRELESS_V1).unwrap();
        let result = generate(&prompt, &Backend::Echo).unwrap();
        assert_eq!(result.answer, "scene A text");
        assert_eq!(result.prompt_bytes, prompt.render().into_bytes());
    }

    #[test]
    fn echo_stub_empty_without_hits() {
        let prompt = compose_prompt(None, &[], "q?", TEMPLATE_WIRELESS_V1).unwrap();
        assert_eq!(generate(&prompt, &Backend::Echo).unwrap().answer, "");
    }

    #[test]
    fn fixed_stub_ignores_prompt() {
        let with_hits =
            compose_prompt(None, &[hit(0.9, "chunk")], "q?", TEMPLATE_WIRELESS_V1).unwrap();
        let without =
            compose_prompt(None, &[], "other?", TEMPLATE_WIRELESS_V1).unwrap();
        let backend = Backend::Fixed("generic description".into());
        assert_eq!(generate(&with_hits, &backend).unwrap().answer, "generic description");
        assert_eq!(generate(&without, &backend).unwrap().answer, "generic description");
    }
}
