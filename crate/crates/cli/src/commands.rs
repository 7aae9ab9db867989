//! Command implementations behind the clap surface.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use scene_rag::embed::{build_embedder, EmbedderConfig, ProviderKind, TextEmbedder};
use scene_rag::error::{Error, Result};
use scene_rag::eval::{evaluate_corpus, parse_eval_pairs, EvalConfig};
use scene_rag::geo::{haversine_distance, initial_bearing, GeoPoint};
use scene_rag::hnsw::HnswParams;
use scene_rag::rag::{
    build_query_text, compose_prompt, generate, retrieve_context, Backend, ChatEndpoint, Usage,
};
use scene_rag::scene::{
    annotate_scene, parse_scene_records, scene_to_text, AnnotationClient, SceneRecord,
    SceneTextConfig,
};
use scene_rag::store::{Collection, SearchHit, SearchMode, StoredDocument};
use scene_rag::text::{chunk_text, StopList};

use crate::{
    BackendArg, ChunkArgs, EmbedArgs, EmbedProvider, EvalArgs, GeoArgs, GeoOp, IngestDocsArgs,
    IngestScenesArgs, InspectArgs, ModeArg, QueryArgs, StoreArgs,
};

const API_KEY_ENV: &str = "SCENE_RAG_API_KEY";

fn api_key(flag: &Option<String>) -> Option<String> {
    flag.clone().or_else(|| std::env::var(API_KEY_ENV).ok())
}

impl ChunkArgs {
    /// Surfaces bad windowing flags before any input is read; `chunk_text`
    /// enforces the same bounds.
    fn validate(&self) -> Result<()> {
        chunk_text("", "", self.chunk_size, self.overlap).map(|_| ())
    }
}

impl EmbedArgs {
    fn build(&self) -> Result<Box<dyn TextEmbedder>> {
        let provider = match self.provider {
            EmbedProvider::Local => ProviderKind::LocalHash,
            EmbedProvider::Remote => ProviderKind::Remote,
        };
        let remote = provider == ProviderKind::Remote;
        let config = EmbedderConfig {
            provider,
            dim: self.dim,
            endpoint_url: if remote { self.embed_endpoint.clone() } else { None },
            model_name: if remote { self.embed_model.clone() } else { None },
            api_key: if remote { api_key(&self.api_key) } else { None },
            stop_list: self.stop_list.clone(),
        };
        if remote && (self.embed_endpoint.is_none() || self.embed_model.is_none()) {
            return Err(Error::Config(
                "--embed remote requires --embed-endpoint and --embed-model".into(),
            ));
        }
        build_embedder(&config)
    }
}

fn collection_dir(store: &StoreArgs) -> PathBuf {
    store.db.join(&store.collection)
}

/// Loads the collection when it exists (checking it matches the configured
/// embedder) or creates it fresh with default index parameters.
fn open_or_create(store: &StoreArgs, embedder: &dyn TextEmbedder) -> Result<Collection> {
    let dir = collection_dir(store);
    if dir.exists() {
        let collection = Collection::load(&dir)?;
        check_compatible(&collection, embedder)?;
        Ok(collection)
    } else {
        Collection::create(
            &store.db,
            &store.collection,
            embedder.dim(),
            &embedder.provider_tag(),
            HnswParams::default(),
        )
    }
}

fn check_compatible(collection: &Collection, embedder: &dyn TextEmbedder) -> Result<()> {
    let manifest = collection.manifest();
    if manifest.provider != embedder.provider_tag() {
        return Err(Error::ProviderMismatch {
            manifest: manifest.provider.clone(),
            configured: embedder.provider_tag(),
        });
    }
    if manifest.dim != embedder.dim() {
        return Err(Error::DimensionMismatch { expected: manifest.dim, actual: embedder.dim() });
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn embed_chunks(
    embedder: &dyn TextEmbedder,
    chunks: Vec<(String, String, BTreeMap<String, String>)>,
) -> Result<Vec<StoredDocument>> {
    let texts: Vec<String> = chunks.iter().map(|(_, text, _)| text.clone()).collect();
    let vectors = embedder.embed_batch(&texts)?;
    Ok(chunks
        .into_iter()
        .zip(vectors)
        .map(|((id, text, metadata), vector)| StoredDocument { id, text, metadata, vector })
        .collect())
}

#[derive(Serialize)]
struct SceneIngestSummary {
    records: usize,
    chunks: usize,
    vectors: usize,
}

pub fn ingest_scenes(args: IngestScenesArgs) -> Result<()> {
    args.chunking.validate()?;
    let embedder = args.embed.build()?;
    let file = std::fs::File::open(&args.scenes_file)?;
    let records = parse_scene_records(std::io::BufReader::new(file))?;

    let annotator = match &args.annotate_endpoint {
        Some(url) => Some(AnnotationClient::new(url, api_key(&args.embed.api_key))?),
        None => None,
    };

    let scene_config = SceneTextConfig::default();
    let mut pending = Vec::new();
    for record in &records {
        let record = annotate_scene(record, annotator.as_ref())?;
        let text = scene_to_text(&record, &scene_config)?;
        for chunk in
            chunk_text(&record.scene_id, &text.body, args.chunking.chunk_size, args.chunking.overlap)?
        {
            let metadata = BTreeMap::from([
                ("source".to_string(), "scene".to_string()),
                ("scene_id".to_string(), record.scene_id.clone()),
                ("chunk_index".to_string(), chunk.chunk_index.to_string()),
            ]);
            pending.push((format!("{}#{}", record.scene_id, chunk.chunk_index), chunk.text, metadata));
        }
    }
    let docs = embed_chunks(embedder.as_ref(), pending)?;

    // everything validated and embedded; only now touch the collection
    let mut collection = open_or_create(&args.store, embedder.as_ref())?;
    let added = collection.add_documents(docs)?;
    collection.persist(&collection_dir(&args.store))?;

    let summary =
        SceneIngestSummary { records: records.len(), chunks: added, vectors: added };
    emit(&None, &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;
    eprintln!(
        "ingested {} records as {} chunks into `{}`",
        summary.records, summary.chunks, args.store.collection
    );
    Ok(())
}

#[derive(Serialize)]
struct DocsIngestSummary {
    files: usize,
    skipped: usize,
    chunks: usize,
    vectors: usize,
}

pub fn ingest_docs(args: IngestDocsArgs) -> Result<()> {
    args.chunking.validate()?;
    let embedder = args.embed.build()?;

    let mut entries: Vec<PathBuf> = std::fs::read_dir(&args.docs_dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();

    let mut pending = Vec::new();
    let mut files = 0usize;
    let mut skipped = 0usize;
    for path in &entries {
        let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(err) => {
                eprintln!("warning: skipping `{file_name}`: {err}");
                skipped += 1;
                continue;
            }
        };
        files += 1;
        for chunk in chunk_text(&file_name, &text, args.chunking.chunk_size, args.chunking.overlap)? {
            let metadata = BTreeMap::from([
                ("source".to_string(), "doc".to_string()),
                ("file_name".to_string(), file_name.clone()),
                ("chunk_index".to_string(), chunk.chunk_index.to_string()),
            ]);
            pending.push((format!("{file_name}#{}", chunk.chunk_index), chunk.text, metadata));
        }
    }

    let docs = if pending.is_empty() { Vec::new() } else { embed_chunks(embedder.as_ref(), pending)? };
    let mut collection = open_or_create(&args.store, embedder.as_ref())?;
    let added = if docs.is_empty() { 0 } else { collection.add_documents(docs)? };
    collection.persist(&collection_dir(&args.store))?;

    let summary = DocsIngestSummary { files, skipped, chunks: added, vectors: added };
    emit(&None, &(serde_json::to_string_pretty(&summary).unwrap() + "\n"))?;
    eprintln!(
        "ingested {} files ({} skipped) as {} chunks into `{}`",
        files, skipped, added, args.store.collection
    );
    Ok(())
}

#[derive(Serialize)]
struct RankedHit<'a> {
    rank: usize,
    #[serde(flatten)]
    hit: &'a SearchHit,
}

#[derive(Serialize)]
struct QueryReport<'a> {
    question: &'a str,
    prompt: &'a str,
    hits: Vec<RankedHit<'a>>,
    answer: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    usage: &'a Option<Usage>,
}

pub fn query(args: QueryArgs) -> Result<()> {
    let embedder = args.embed.build()?;
    let collection = Collection::load(&collection_dir(&args.store))?;
    check_compatible(&collection, embedder.as_ref())?;

    let scene_text = match &args.scene {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            let records = parse_scene_records(std::io::BufReader::new(file))?;
            let record: &SceneRecord = match records.as_slice() {
                [one] => one,
                other => {
                    return Err(Error::Config(format!(
                        "--scene file must hold exactly one record, found {}",
                        other.len()
                    )))
                }
            };
            Some(scene_to_text(record, &SceneTextConfig::default())?)
        }
        None => None,
    };

    let backend = match args.backend {
        BackendArg::Echo => Backend::Echo,
        BackendArg::Fixed => Backend::Fixed(args.fixed_text.clone()),
        BackendArg::Remote => {
            let (Some(url), Some(model)) = (&args.llm_endpoint, &args.llm_model) else {
                return Err(Error::Config(
                    "--backend remote requires --llm-endpoint and --llm-model".into(),
                ));
            };
            let mut endpoint = ChatEndpoint::new(url, model);
            endpoint.api_key = api_key(&args.embed.api_key);
            Backend::Remote(endpoint)
        }
    };

    let mode = match args.mode {
        ModeArg::Exact => SearchMode::Exact,
        ModeArg::Ann => SearchMode::Ann,
    };
    let query_text = build_query_text(scene_text.as_ref(), &args.question)?;
    let hits = retrieve_context(&collection, embedder.as_ref(), &query_text, args.top_k, mode)?;
    let prompt = compose_prompt(scene_text.as_ref(), &hits, &args.question, &args.template)?;
    let result = generate(&prompt, &backend)?;

    let rendered = String::from_utf8_lossy(&result.prompt_bytes).into_owned();
    let report = QueryReport {
        question: &args.question,
        prompt: &rendered,
        hits: hits.iter().enumerate().map(|(i, hit)| RankedHit { rank: i + 1, hit }).collect(),
        answer: &result.answer,
        usage: &result.usage,
    };
    emit(&args.out, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
    eprintln!("answered with {} retrieved chunks in {} ms", hits.len(), result.latency_ms);
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let embedder = args.embed.build()?;
    let file = std::fs::File::open(&args.pairs)?;
    let pairs = parse_eval_pairs(std::io::BufReader::new(file))?;
    let stop_list = match &args.filter_stopwords {
        Some(id) => Some(StopList::builtin(id)?),
        None => None,
    };
    let config = EvalConfig { omega: args.omega, multiset: args.multiset, stop_list };
    let report = evaluate_corpus(&pairs, embedder.as_ref(), &config)?;
    emit(&args.out, &(serde_json::to_string_pretty(&report).unwrap() + "\n"))?;
    for (metric, aggregate) in &report.aggregates {
        eprintln!(
            "{metric}: mean {:.4}, median {:.4}, min {:.4}, max {:.4}",
            aggregate.mean, aggregate.median, aggregate.min, aggregate.max
        );
    }
    Ok(())
}

fn parse_coord(raw: &str) -> Result<GeoPoint> {
    let (lat, lon) = raw
        .split_once(',')
        .ok_or_else(|| Error::InvalidCoordinate(format!("`{raw}` is not LAT,LON")))?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| Error::InvalidCoordinate(format!("latitude `{lat}` is not a number")))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| Error::InvalidCoordinate(format!("longitude `{lon}` is not a number")))?;
    GeoPoint::new(lat, lon)
}

pub fn geo(args: GeoArgs) -> Result<()> {
    let value = match &args.op {
        GeoOp::Dist(pair) => {
            haversine_distance(&parse_coord(&pair.from)?, &parse_coord(&pair.to)?)?
        }
        GeoOp::Bearing(pair) => {
            initial_bearing(&parse_coord(&pair.from)?, &parse_coord(&pair.to)?)?
        }
    };
    println!("{value:.6}");
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let manifest = Collection::load_manifest(&collection_dir(&args.store))?;
    emit(&None, &(serde_json::to_string_pretty(&manifest).unwrap() + "\n"))?;
    Ok(())
}
