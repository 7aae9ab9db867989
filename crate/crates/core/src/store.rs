//! Persistent collections: documents, metadata, vectors, and cosine search.
//!
//! On disk a collection is a directory holding three files:
//!
//! - `manifest` — JSON: name, dim, metric, provider tag, count, format
//!   version, and HNSW parameters.
//! - `documents` — one JSON record per line: `id`, `text`, `metadata`.
//! - `vectors.bin` — magic `SRVC`, u32 version, u32 dim, u64 count, then
//!   little-endian f32 rows in document order.
//!
//! The ANN graph is not serialized; it is rebuilt deterministically from the
//! vectors on first use (fixed seed, insertion order = document order).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbeddingVector, NormKind};
use crate::error::{Error, Result};
use crate::hnsw::{Hnsw, HnswParams};

/// On-disk format version this build reads and writes.
pub const FORMAT_VERSION: u32 = 1;

const MAGIC: [u8; 4] = *b"SRVC";
const ANN_SEED: u64 = 0x5343_454e_4552_4147;

/// One stored chunk: unique id, original text, flat metadata, vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDocument {
    pub id: String,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub vector: EmbeddingVector<f32>,
}

#[derive(Serialize, Deserialize)]
struct DocumentLine<'a> {
    id: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
    metadata: BTreeMap<String, String>,
}

/// Collection-level metadata, serialized as the `manifest` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionManifest {
    pub name: String,
    pub dim: usize,
    pub metric: String,
    pub provider: String,
    pub count: usize,
    pub format_version: u32,
    pub index_params: HnswParams,
}

/// One search result; `score` is cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f32,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

/// Search strategy selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exact,
    Ann,
}

/// An in-memory collection; all mutation goes through [`add_documents`].
///
/// [`add_documents`]: Collection::add_documents
pub struct Collection {
    manifest: CollectionManifest,
    docs: Vec<StoredDocument>,
    by_id: HashMap<String, usize>,
    index: OnceLock<Hnsw<f32>>,
}

impl Collection {
    /// Creates an in-memory collection without touching disk.
    pub fn new(name: &str, dim: usize, provider: &str, params: HnswParams) -> Result<Self> {
        if name.is_empty() {
            return Err(Error::Config("collection name must be non-empty".into()));
        }
        if dim == 0 {
            return Err(Error::Config("collection dim must be at least 1".into()));
        }
        Ok(Self {
            manifest: CollectionManifest {
                name: name.to_string(),
                dim,
                metric: "cosine".to_string(),
                provider: provider.to_string(),
                count: 0,
                format_version: FORMAT_VERSION,
                index_params: params,
            },
            docs: Vec::new(),
            by_id: HashMap::new(),
            index: OnceLock::new(),
        })
    }

    /// Creates `db_root/name` on disk; errors if that directory already exists.
    pub fn create(
        db_root: &Path,
        name: &str,
        dim: usize,
        provider: &str,
        params: HnswParams,
    ) -> Result<Self> {
        let collection = Self::new(name, dim, provider, params)?;
        let dir = db_root.join(name);
        if dir.exists() {
            return Err(Error::CollectionExists(name.to_string()));
        }
        collection.persist(&dir)?;
        Ok(collection)
    }

    pub fn manifest(&self) -> &CollectionManifest {
        &self.manifest
    }

    pub fn count(&self) -> usize {
        self.docs.len()
    }

    pub fn get(&self, id: &str) -> Option<&StoredDocument> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn documents(&self) -> &[StoredDocument] {
        &self.docs
    }

    /// Adds a batch atomically: every document is validated against the
    /// collection (dimension, id uniqueness) before anything is appended.
    pub fn add_documents(&mut self, docs: Vec<StoredDocument>) -> Result<usize> {
        let mut batch_ids = std::collections::HashSet::with_capacity(docs.len());
        for doc in &docs {
            if doc.id.is_empty() {
                return Err(Error::Validation {
                    field: "id".into(),
                    message: "document id must be non-empty".into(),
                });
            }
            if doc.vector.dim() != self.manifest.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.manifest.dim,
                    actual: doc.vector.dim(),
                });
            }
            doc.vector.validate()?;
            if self.by_id.contains_key(&doc.id) || !batch_ids.insert(doc.id.clone()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        let added = docs.len();
        for doc in docs {
            self.by_id.insert(doc.id.clone(), self.docs.len());
            self.docs.push(doc);
        }
        self.manifest.count = self.docs.len();
        self.index = OnceLock::new();
        Ok(added)
    }

    fn check_query(&self, query: &EmbeddingVector<f32>, k: usize) -> Result<()> {
        if query.dim() != self.manifest.dim {
            return Err(Error::DimensionMismatch {
                expected: self.manifest.dim,
                actual: query.dim(),
            });
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }

    fn hit(&self, doc_index: usize, score: f32) -> SearchHit {
        let doc = &self.docs[doc_index];
        SearchHit {
            id: doc.id.clone(),
            score,
            text: doc.text.clone(),
            metadata: doc.metadata.clone(),
        }
    }

    /// Exact top-k by cosine similarity via bounded-heap selection. Ties
    /// break toward earlier insertion; hits come back sorted non-increasing.
    pub fn search_exact(&self, query: &EmbeddingVector<f32>, k: usize) -> Result<Vec<SearchHit>> {
        self.check_query(query, k)?;

        #[derive(PartialEq)]
        struct Key {
            score: f32,
            index: usize,
        }
        impl Eq for Key {}
        impl Ord for Key {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                // higher score wins; equal scores favor the earlier index
                self.score
                    .partial_cmp(&other.score)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(other.index.cmp(&self.index))
            }
        }
        impl PartialOrd for Key {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        // min-heap of the current best k (worst on top)
        let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<Key>> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        for (index, doc) in self.docs.iter().enumerate() {
            let score = cosine(query.values(), doc.vector.values());
            heap.push(std::cmp::Reverse(Key { score, index }));
            if heap.len() > k {
                heap.pop();
            }
        }
        let mut keys: Vec<Key> = heap.into_iter().map(|r| r.0).collect();
        keys.sort_unstable_by(|a, b| b.cmp(a));
        Ok(keys.into_iter().map(|key| self.hit(key.index, key.score)).collect())
    }

    /// Approximate top-k via the HNSW graph, built lazily on first use.
    /// Reported scores are recomputed with the exact cosine kernel so they
    /// match `search_exact` for the same document.
    pub fn search_ann(&self, query: &EmbeddingVector<f32>, k: usize) -> Result<Vec<SearchHit>> {
        self.check_query(query, k)?;
        if self.docs.is_empty() {
            return Ok(Vec::new());
        }
        let index = self.index.get_or_init(|| {
            Hnsw::build(
                self.docs.iter().map(|d| d.vector.values()),
                self.manifest.index_params,
                ANN_SEED,
            )
        });
        let ids = index.search(query.values(), k, self.manifest.index_params.ef_search);
        let mut scored: Vec<(f32, usize)> = ids
            .into_iter()
            .map(|id| {
                let index = id as usize;
                (cosine(query.values(), self.docs[index].vector.values()), index)
            })
            .collect();
        scored.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(score, index)| self.hit(index, score)).collect())
    }

    /// Writes manifest, documents, and vectors into `dir` (created if absent).
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;

        let manifest = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(dir.join("manifest"), manifest + "\n")?;

        let mut documents = BufWriter::new(std::fs::File::create(dir.join("documents"))?);
        for doc in &self.docs {
            let line = serde_json::to_string(&DocumentLine {
                id: std::borrow::Cow::Borrowed(&doc.id),
                text: std::borrow::Cow::Borrowed(&doc.text),
                metadata: doc.metadata.clone(),
            })
            .map_err(|e| Error::Format(e.to_string()))?;
            documents.write_all(line.as_bytes())?;
            documents.write_all(b"\n")?;
        }
        documents.flush()?;

        let mut vectors = BufWriter::new(std::fs::File::create(dir.join("vectors.bin"))?);
        vectors.write_all(&MAGIC)?;
        vectors.write_all(&FORMAT_VERSION.to_le_bytes())?;
        vectors.write_all(&(self.manifest.dim as u32).to_le_bytes())?;
        vectors.write_all(&(self.docs.len() as u64).to_le_bytes())?;
        for doc in &self.docs {
            for &value in doc.vector.values() {
                vectors.write_all(&value.to_le_bytes())?;
            }
        }
        vectors.flush()?;
        Ok(())
    }

    /// Reads just the manifest of a persisted collection.
    pub fn load_manifest(dir: &Path) -> Result<CollectionManifest> {
        let raw = std::fs::read_to_string(dir.join("manifest"))?;
        let manifest: CollectionManifest =
            serde_json::from_str(&raw).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: manifest.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(manifest)
    }

    /// Loads a persisted collection, verifying magic, version, and that the
    /// vector payload length matches the manifest count exactly.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::load_manifest(dir)?;

        let mut reader = BufReader::new(std::fs::File::open(dir.join("vectors.bin"))?);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic).map_err(|_| {
            Error::Format("vectors.bin: file too short for header".into())
        })?;
        if magic != MAGIC {
            return Err(Error::Format(format!(
                "vectors.bin: bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut u32_buf = [0u8; 4];
        reader.read_exact(&mut u32_buf)?;
        let version = u32::from_le_bytes(u32_buf);
        if version != FORMAT_VERSION {
            return Err(Error::FormatVersion { found: version, expected: FORMAT_VERSION });
        }
        reader.read_exact(&mut u32_buf)?;
        let dim = u32::from_le_bytes(u32_buf) as usize;
        let mut u64_buf = [0u8; 8];
        reader.read_exact(&mut u64_buf)?;
        let count = u64::from_le_bytes(u64_buf) as usize;
        if dim != manifest.dim || count != manifest.count {
            return Err(Error::Integrity(format!(
                "vectors.bin header (dim {dim}, count {count}) disagrees with manifest (dim {}, count {})",
                manifest.dim, manifest.count
            )));
        }

        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let expected_len = count * dim * std::mem::size_of::<f32>();
        if payload.len() != expected_len {
            return Err(Error::Integrity(format!(
                "vectors.bin payload is {} bytes, manifest implies {expected_len}",
                payload.len()
            )));
        }

        let norm = if manifest.provider.starts_with("local-hash") {
            NormKind::UnitL2
        } else {
            NormKind::Raw
        };
        let mut vectors = Vec::with_capacity(count);
        for row in payload.chunks_exact(dim * 4) {
            let values = row
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<f32>>();
            vectors.push(EmbeddingVector::new(values, norm)?);
        }

        let documents_file = BufReader::new(std::fs::File::open(dir.join("documents"))?);
        let mut docs = Vec::with_capacity(count);
        let mut by_id = HashMap::with_capacity(count);
        for (idx, line) in documents_file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DocumentLine = serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("documents line {}: {e}", idx + 1)))?;
            let doc_index = docs.len();
            if doc_index >= vectors.len() {
                return Err(Error::Integrity(format!(
                    "documents file has more than the {count} records the manifest declares"
                )));
            }
            let doc = StoredDocument {
                id: parsed.id.into_owned(),
                text: parsed.text.into_owned(),
                metadata: parsed.metadata,
                vector: vectors[doc_index].clone(),
            };
            if by_id.insert(doc.id.clone(), doc_index).is_some() {
                return Err(Error::DuplicateId(doc.id));
            }
            docs.push(doc);
        }
        if docs.len() != count {
            return Err(Error::Integrity(format!(
                "documents file has {} records, manifest declares {count}",
                docs.len()
            )));
        }

        Ok(Self { manifest, docs, by_id, index: OnceLock::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_local;

    fn doc(id: &str, values: Vec<f32>) -> StoredDocument {
        StoredDocument {
            id: id.to_string(),
            text: format!("text of {id}"),
            metadata: BTreeMap::from([("source".to_string(), "test".to_string())]),
            vector: EmbeddingVector::new(values, NormKind::Raw).unwrap(),
        }
    }

    #[test]
    fn collection_supports_shared_readers() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Collection>();
    }

    #[test]
    fn create_empty_collection() {
        let coll = Collection::new("kb", 4, "local-hash", HnswParams::default()).unwrap();
        assert_eq!(coll.count(), 0);
        assert_eq!(coll.manifest().metric, "cosine");
        assert_eq!(coll.manifest().format_version, FORMAT_VERSION);
    }

    #[test]
    fn create_rejects_bad_inputs() {
        assert!(Collection::new("", 4, "local-hash", HnswParams::default()).is_err());
        assert!(Collection::new("kb", 0, "local-hash", HnswParams::default()).is_err());
    }

    #[test]
    fn create_on_disk_rejects_name_collision() {
        let dir = tempfile::tempdir().unwrap();
        Collection::create(dir.path(), "kb", 4, "local-hash", HnswParams::default()).unwrap();
        assert!(matches!(
            Collection::create(dir.path(), "kb", 4, "local-hash", HnswParams::default()),
            Err(Error::CollectionExists(_))
        ));
    }

    #[test]
    fn add_updates_count_and_lookup() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        let added = coll
            .add_documents(vec![doc("a", vec![1.0, 0.0]), doc("b", vec![0.0, 1.0]), doc("c", vec![1.0, 1.0])])
            .unwrap();
        assert_eq!(added, 3);
        assert_eq!(coll.manifest().count, 3);
        assert_eq!(coll.get("b").unwrap().text, "text of b");
    }

    #[test]
    fn add_is_atomic_on_duplicate_id() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![doc("a", vec![1.0, 0.0])]).unwrap();
        let err = coll
            .add_documents(vec![doc("b", vec![0.0, 1.0]), doc("a", vec![1.0, 1.0])])
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
        assert_eq!(coll.count(), 1);
        assert!(coll.get("b").is_none());
    }

    #[test]
    fn add_rejects_dimension_mismatch() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        let err = coll.add_documents(vec![doc("a", vec![1.0, 0.0, 0.0])]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 3 }));
        assert_eq!(coll.count(), 0);
    }

    #[test]
    fn exact_search_finds_identical_vector() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![doc("a", vec![3.0, 0.0]), doc("b", vec![0.0, 5.0])]).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0], NormKind::Raw).unwrap();
        let hits = coll.search_exact(&query, 1).unwrap();
        assert_eq!(hits[0].id, "a");
        assert_eq!(hits[0].score, 1.0);
    }

    #[test]
    fn exact_search_k_larger_than_count() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![doc("a", vec![1.0, 0.0]), doc("b", vec![0.0, 1.0])]).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 1.0], NormKind::Raw).unwrap();
        let hits = coll.search_exact(&query, 10).unwrap();
        assert_eq!(hits.len(), 2);
    }

    #[test]
    fn exact_search_breaks_ties_by_insertion_order() {
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![
            doc("first", vec![1.0, 0.0]),
            doc("second", vec![1.0, 0.0]),
            doc("third", vec![1.0, 0.0]),
        ])
        .unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0], NormKind::Raw).unwrap();
        let hits = coll.search_exact(&query, 3).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.id.as_str()).collect();
        assert_eq!(ids, ["first", "second", "third"]);
    }

    #[test]
    fn empty_collection_searches_return_empty() {
        let coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        let query = EmbeddingVector::new(vec![1.0, 0.0], NormKind::Raw).unwrap();
        assert!(coll.search_exact(&query, 5).unwrap().is_empty());
        assert!(coll.search_ann(&query, 5).unwrap().is_empty());
    }

    #[test]
    fn ann_single_document_matches_exact() {
        let mut coll = Collection::new("kb", 8, "local-hash", HnswParams::default()).unwrap();
        coll.add_documents(vec![StoredDocument {
            id: "only".into(),
            text: "the only chunk".into(),
            metadata: BTreeMap::new(),
            vector: embed_local("the only chunk", 8),
        }])
        .unwrap();
        let query = embed_local::<f32>("the only chunk", 8);
        let exact = coll.search_exact(&query, 1).unwrap();
        let ann = coll.search_ann(&query, 1).unwrap();
        assert_eq!(exact, ann);
        assert_eq!(ann[0].score, 1.0);
    }

    #[test]
    fn ann_is_deterministic_within_process() {
        let mut coll = Collection::new("kb", 16, "test", HnswParams::default()).unwrap();
        let docs: Vec<StoredDocument> = (0..64)
            .map(|i| {
                let mut values = vec![0.0f32; 16];
                values[i % 16] = 1.0;
                values[(i * 3 + 1) % 16] = 0.5;
                doc(&format!("d{i}"), values)
            })
            .collect();
        coll.add_documents(docs).unwrap();
        let query = EmbeddingVector::new(vec![0.3; 16], NormKind::Raw).unwrap();
        let a = coll.search_ann(&query, 5).unwrap();
        let b = coll.search_ann(&query, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn persist_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb");
        let mut coll = Collection::new("kb", 3, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![
            doc("a", vec![1.0, 0.0, 0.25]),
            doc("b", vec![0.0, 1.0, -0.5]),
            doc("c", vec![0.5, 0.5, 0.125]),
        ])
        .unwrap();
        coll.persist(&path).unwrap();

        let loaded = Collection::load(&path).unwrap();
        assert_eq!(loaded.manifest(), coll.manifest());
        assert_eq!(loaded.documents(), coll.documents());

        let query = EmbeddingVector::new(vec![0.7, 0.1, 0.2], NormKind::Raw).unwrap();
        assert_eq!(coll.search_exact(&query, 3).unwrap(), loaded.search_exact(&query, 3).unwrap());
    }

    #[test]
    fn load_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb");
        let coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.persist(&path).unwrap();
        let file = path.join("vectors.bin");
        let mut bytes = std::fs::read(&file).unwrap();
        bytes[..4].copy_from_slice(b"NOPE");
        std::fs::write(&file, bytes).unwrap();
        assert!(matches!(Collection::load(&path), Err(Error::Format(_))));
    }

    #[test]
    fn load_rejects_version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb");
        let coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.persist(&path).unwrap();
        let file = path.join("vectors.bin");
        let mut bytes = std::fs::read(&file).unwrap();
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&file, bytes).unwrap();
        assert!(matches!(
            Collection::load(&path),
            Err(Error::FormatVersion { found: 9, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn load_rejects_truncated_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb");
        let mut coll = Collection::new("kb", 2, "test", HnswParams::default()).unwrap();
        coll.add_documents(vec![doc("a", vec![1.0, 0.0]), doc("b", vec![0.0, 1.0])]).unwrap();
        coll.persist(&path).unwrap();
        let file = path.join("vectors.bin");
        let bytes = std::fs::read(&file).unwrap();
        std::fs::write(&file, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Collection::load(&path), Err(Error::Integrity(_))));
    }
}
