//! Text normalization, tokenization, stop-word removal, and chunking.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters, lowercased.
//! Digits are kept: scene text is number-heavy and the numbers matter for
//! retrieval. Chunk text is always a slice of the original (pre-lowercase)
//! input so stored documents stay human-readable.

use std::collections::BTreeSet;
use std::ops::Range;

use crate::error::{Error, Result};

/// Identifier of the built-in English stop list shipped with the crate.
pub const STOP_LIST_EN_V1: &str = "en-v1";

const EN_V1_WORDS: &str = include_str!("../assets/stopwords/en-v1.txt");

/// Ordered lowercase tokens extracted from one piece of text.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl From<Vec<String>> for TokenStream {
    fn from(tokens: Vec<String>) -> Self {
        Self { tokens }
    }
}

/// Byte ranges of the tokens inside the original text, in order.
fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            spans.push(s..i);
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Splits on every maximal run of non-alphanumeric characters and lowercases.
pub fn tokenize(text: &str) -> TokenStream {
    TokenStream {
        tokens: token_spans(text)
            .into_iter()
            .map(|r| text[r].to_lowercase())
            .collect(),
    }
}

/// A frozen, versioned stop-word list.
#[derive(Debug, Clone)]
pub struct StopList {
    id: String,
    words: BTreeSet<String>,
}

impl StopList {
    /// Looks up a built-in list by id. Only `en-v1` ships today.
    pub fn builtin(id: &str) -> Result<Self> {
        match id {
            STOP_LIST_EN_V1 => Ok(Self {
                id: id.to_string(),
                words: EN_V1_WORDS
                    .lines()
                    .map(str::trim)
                    .filter(|w| !w.is_empty())
                    .map(str::to_string)
                    .collect(),
            }),
            other => Err(Error::UnknownStopList(other.to_string())),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Order-preserving filter dropping tokens that appear in the list.
pub fn remove_stopwords(stream: TokenStream, list: &StopList) -> TokenStream {
    TokenStream {
        tokens: stream
            .tokens
            .into_iter()
            .filter(|t| !list.contains(t))
            .collect(),
    }
}

/// A window of knowledge-base text, addressed by parent document and index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub token_count: usize,
}

/// Sliding-window chunking with stride `chunk_size - overlap`.
///
/// Each chunk's `text` is the original substring spanning its tokens; the
/// final partial window is kept. Empty text yields no chunks.
pub fn chunk_text(
    doc_id: &str,
    text: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    if overlap >= chunk_size {
        return Err(Error::Config(format!(
            "overlap ({overlap}) must be smaller than chunk_size ({chunk_size})"
        )));
    }
    let spans = token_spans(text);
    if spans.is_empty() {
        return Ok(Vec::new());
    }
    let stride = chunk_size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0usize;
    loop {
        let end = (start + chunk_size).min(spans.len());
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            chunk_index: chunks.len(),
            text: text[spans[start].start..spans[end - 1].end].to_string(),
            token_count: end - start,
        });
        if end == spans.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}
