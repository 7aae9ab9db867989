//! Retrieval-augmented generation engine for wireless sensor-scene corpora.
//!
//! The pipeline fuses multimodal scene records (GPS, camera/lidar captions,
//! detections, beam power) into deterministic text, stores chunked knowledge
//! as embedding vectors in a persistent collection with exact and HNSW
//! cosine search, composes structured prompts against a chat-completion
//! endpoint (or deterministic stubs), and scores generated answers with a
//! correctness/faithfulness/similarity metric suite.
//!
//! Numeric kernels are generic over [`Scalar`] (`f32`/`f64`); the concrete
//! types used by the pipeline are fixed by the aliases below — geodesy runs
//! in `f64`, stored vectors are `f32` to match the on-disk format.

pub mod embed;
pub mod error;
pub mod eval;
pub mod geo;
pub mod hnsw;
mod http;
pub mod rag;
pub mod scene;
pub mod store;
pub mod text;

mod scalar;

pub use error::{Error, Result};
pub use http::RetryPolicy;
pub use scalar::Scalar;

/// GPS coordinate in double precision, as used by the scene pipeline.
pub type Point = geo::GeoPoint<f64>;

/// Embedding vector as stored in collections (`vectors.bin` is f32 rows).
pub type Vector = embed::EmbeddingVector<f32>;

/// ANN index over stored vectors.
pub type Index = hnsw::Hnsw<f32>;
