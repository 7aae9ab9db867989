//! Text-to-vector providers and the cosine kernel.
//!
//! Three providers share one trait: a deterministic signed-feature-hashing
//! embedder for offline use, a bag-of-words term-frequency vectorizer over a
//! fixed vocabulary, and a client for remote embedding endpoints speaking the
//! common `{"model", "input"}` / `{"data":[{"index","embedding"}]}` shape.

use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::scalar::Scalar;
use crate::text::{remove_stopwords, tokenize, StopList};

/// Default embedding dimension; matches the small sentence-transformer family
/// so local and remote vectors are interchangeable in one collection.
pub const DEFAULT_DIM: usize = 384;

/// Norm convention a vector was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// L2 norm is 1 (or the vector is all-zero, the empty-text case).
    UnitL2,
    /// No normalization applied (term-frequency counts).
    Raw,
}

/// Fixed-dimension real vector with a declared norm convention.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S = f32> {
    values: Vec<S>,
    norm: NormKind,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>, norm: NormKind) -> Result<Self> {
        let v = Self { values, norm };
        v.validate()?;
        Ok(v)
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Validation {
                field: "values".into(),
                message: "embedding dimension must be at least 1".into(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation {
                field: "values".into(),
                message: "embedding contains a non-finite value".into(),
            });
        }
        if self.norm == NormKind::UnitL2 {
            let norm_sq: S = self.values.iter().map(|&v| v * v).sum();
            let norm = norm_sq.sqrt();
            let tol = S::from_f64(1e-6).unwrap();
            if norm != S::zero() && (norm - S::one()).abs() > tol {
                return Err(Error::Validation {
                    field: "values".into(),
                    message: format!("L2 norm {norm} is neither 0 nor 1"),
                });
            }
        }
        Ok(())
    }
}

/// Cosine similarity over raw slices; callers guarantee equal lengths.
///
/// Zero-norm operands yield 0.0 so empty-text vectors never poison a report.
/// The denominator is `sqrt(|a|² · |b|²)`, which makes `cosine(v, v)` exactly
/// 1.0 for any nonzero v.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == S::zero() || nb == S::zero() {
        return S::zero();
    }
    (dot / (na * nb).sqrt()).max(-S::one()).min(S::one())
}

/// Cosine similarity between two embedding vectors of equal dimension.
pub fn cosine_similarity<S: Scalar>(a: &EmbeddingVector<S>, b: &EmbeddingVector<S>) -> Result<S> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), actual: b.dim() });
    }
    Ok(cosine(a.values(), b.values()))
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const BUCKET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const SIGN_BASIS: u64 = 0x9e37_79b9_7f4a_7c15;

/// FNV-1a with a selectable basis; fixed so vectors are identical across
/// platforms and Rust versions (std's `DefaultHasher` gives no such promise).
fn fnv1a(bytes: &[u8], basis: u64) -> u64 {
    bytes
        .iter()
        .fold(basis, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing over a pre-tokenized stream.
///
/// One hash picks the bucket, an independent hash bit picks the sign, counts
/// accumulate, and the result is L2-normalized. An empty stream maps to the
/// all-zero vector.
pub fn embed_tokens<S: Scalar>(tokens: &[String], dim: usize) -> EmbeddingVector<S> {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut values = vec![S::zero(); dim];
    for tok in tokens {
        let bucket = (fnv1a(tok.as_bytes(), BUCKET_BASIS) % dim as u64) as usize;
        if fnv1a(tok.as_bytes(), SIGN_BASIS) & 1 == 0 {
            values[bucket] += S::one();
        } else {
            values[bucket] -= S::one();
        }
    }
    let norm_sq: S = values.iter().map(|&v| v * v).sum();
    if norm_sq > S::zero() {
        let norm = norm_sq.sqrt();
        for v in &mut values {
            *v /= norm;
        }
    }
    EmbeddingVector { values, norm: NormKind::UnitL2 }
}

/// Deterministic local embedding: tokenize then hash into `dim` buckets.
pub fn embed_local<S: Scalar>(text: &str, dim: usize) -> EmbeddingVector<S> {
    embed_tokens(tokenize(text).tokens(), dim)
}

/// Term-frequency vector over an ordered vocabulary.
///
/// Single-token text reproduces a one-hot vector; out-of-vocabulary tokens
/// are ignored. The result carries raw (unnormalized) counts.
pub fn embed_onehot<S: Scalar>(text: &str, vocabulary: &[String]) -> Result<EmbeddingVector<S>> {
    if vocabulary.is_empty() {
        return Err(Error::Config("one-hot vocabulary must be non-empty".into()));
    }
    let mut position = std::collections::HashMap::with_capacity(vocabulary.len());
    for (i, word) in vocabulary.iter().enumerate() {
        if position.insert(word.as_str(), i).is_some() {
            return Err(Error::Config(format!(
                "one-hot vocabulary contains duplicate entry `{word}`"
            )));
        }
    }
    let mut values = vec![S::zero(); vocabulary.len()];
    for tok in tokenize(text).tokens() {
        if let Some(&i) = position.get(tok.as_str()) {
            values[i] += S::one();
        }
    }
    Ok(EmbeddingVector { values, norm: NormKind::Raw })
}

/// Embedding provider selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    LocalHash,
    BowOnehot,
    Remote,
}

/// Provider configuration; remote fields are set only for `Remote`.
#[derive(Debug, Clone)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    pub dim: usize,
    pub endpoint_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key: Option<String>,
    /// Built-in stop list applied before hashing (local provider only).
    pub stop_list: Option<String>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::LocalHash,
            dim: DEFAULT_DIM,
            endpoint_url: None,
            model_name: None,
            api_key: None,
            stop_list: None,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be at least 1".into()));
        }
        let remote = self.provider == ProviderKind::Remote;
        if remote && (self.endpoint_url.is_none() || self.model_name.is_none()) {
            return Err(Error::Config(
                "remote provider requires endpoint_url and model_name".into(),
            ));
        }
        if !remote && (self.endpoint_url.is_some() || self.model_name.is_some() || self.api_key.is_some()) {
            return Err(Error::Config(
                "endpoint_url/model_name/auth are only valid for the remote provider".into(),
            ));
        }
        Ok(())
    }
}

/// Common interface over the providers. Collections record the provider tag
/// in their manifest so retrieval can reject a mismatched embedder.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Provenance tag stored in collection manifests.
    fn provider_tag(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f32>>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<f32>>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Offline provider backed by signed feature hashing.
pub struct LocalHashEmbedder {
    dim: usize,
    stop_list: Option<StopList>,
}

impl LocalHashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim, stop_list: None }
    }

    pub fn with_stop_list(mut self, list: StopList) -> Self {
        self.stop_list = Some(list);
        self
    }
}

impl TextEmbedder for LocalHashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provider_tag(&self) -> String {
        match &self.stop_list {
            Some(list) => format!("local-hash+{}", list.id()),
            None => "local-hash".to_string(),
        }
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f32>> {
        let stream = tokenize(text);
        let stream = match &self.stop_list {
            Some(list) => remove_stopwords(stream, list),
            None => stream,
        };
        Ok(embed_tokens(stream.tokens(), self.dim))
    }
}

/// Bag-of-words provider over a fixed vocabulary (the one-hot baseline).
pub struct OneHotEmbedder {
    vocabulary: Vec<String>,
}

impl OneHotEmbedder {
    pub fn new(vocabulary: Vec<String>) -> Result<Self> {
        if vocabulary.is_empty() {
            return Err(Error::Config("one-hot vocabulary must be non-empty".into()));
        }
        Ok(Self { vocabulary })
    }
}

impl TextEmbedder for OneHotEmbedder {
    fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    fn provider_tag(&self) -> String {
        "bow-onehot".to_string()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f32>> {
        embed_onehot(text, &self.vocabulary)
    }
}

/// Client for a remote embeddings endpoint.
pub struct RemoteEmbedder {
    endpoint_url: String,
    model_name: String,
    api_key: Option<String>,
    dim: usize,
    client: JsonClient,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self> {
        Self::with_policy(cfg, RetryPolicy::default())
    }

    pub fn with_policy(cfg: &EmbedderConfig, policy: RetryPolicy) -> Result<Self> {
        cfg.validate()?;
        if cfg.provider != ProviderKind::Remote {
            return Err(Error::Config("RemoteEmbedder requires the remote provider".into()));
        }
        Ok(Self {
            endpoint_url: cfg.endpoint_url.clone().unwrap(),
            model_name: cfg.model_name.clone().unwrap(),
            api_key: cfg.api_key.clone(),
            dim: cfg.dim,
            client: JsonClient::new(policy)?,
        })
    }
}

#[derive(serde::Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(serde::Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingItem>,
}

#[derive(serde::Deserialize)]
struct EmbeddingItem {
    index: usize,
    embedding: Vec<f32>,
}

impl TextEmbedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn provider_tag(&self) -> String {
        format!("remote:{}", self.model_name)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector<f32>> {
        let mut vectors = self.embed_batch(std::slice::from_ref(&text.to_string()))?;
        Ok(vectors.remove(0))
    }

    /// One request per batch; vectors are reassembled by the endpoint's
    /// `index` field so shuffled responses still come back in input order.
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<f32>>> {
        if texts.is_empty() {
            return Err(Error::Config("embedding batch must be non-empty".into()));
        }
        let request = EmbeddingRequest { model: &self.model_name, input: texts };
        let value = self
            .client
            .post_json(&self.endpoint_url, self.api_key.as_deref(), &request)?;
        let response: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("embedding response: {e}")))?;
        if response.data.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "expected {} embeddings, endpoint returned {}",
                texts.len(),
                response.data.len()
            )));
        }
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for item in response.data {
            if item.index >= texts.len() {
                return Err(Error::Protocol(format!(
                    "embedding index {} out of range for batch of {}",
                    item.index,
                    texts.len()
                )));
            }
            if item.embedding.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: item.embedding.len(),
                });
            }
            if slots[item.index].replace(item.embedding).is_some() {
                return Err(Error::Protocol(format!("duplicate embedding index {}", item.index)));
            }
        }
        slots
            .into_iter()
            .map(|slot| {
                let values = slot.ok_or_else(|| Error::Protocol("missing embedding index".into()))?;
                EmbeddingVector::new(values, NormKind::Raw)
            })
            .collect()
    }
}

/// Builds the configured provider. Remote construction validates the config;
/// the one-hot provider needs a vocabulary and is built directly instead.
pub fn build_embedder(cfg: &EmbedderConfig) -> Result<Box<dyn TextEmbedder>> {
    cfg.validate()?;
    match cfg.provider {
        ProviderKind::LocalHash => {
            let mut embedder = LocalHashEmbedder::new(cfg.dim);
            if let Some(id) = &cfg.stop_list {
                embedder = embedder.with_stop_list(StopList::builtin(id)?);
            }
            Ok(Box::new(embedder))
        }
        ProviderKind::BowOnehot => Err(Error::Config(
            "bow-onehot requires an explicit vocabulary; construct OneHotEmbedder directly".into(),
        )),
        ProviderKind::Remote => Ok(Box::new(RemoteEmbedder::new(cfg)?)),
    }
}
