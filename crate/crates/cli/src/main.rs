//! Operator surface: ingest scene captures and text corpora into a
//! collection, query it through a generation backend, evaluate answers, and
//! inspect what is stored.
//!
//! Machine-readable reports go to stdout (or `--out`); human summaries go to
//! stderr. Exit status: 0 success, 2 configuration error, 3 runtime error.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use scene_rag::Error;

#[derive(Parser)]
#[command(name = "scene-rag", version, about = "RAG engine for wireless sensor-scene corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest line-delimited scene records into a collection
    IngestScenes(IngestScenesArgs),
    /// Ingest a directory of plain-text documents into a collection
    IngestDocs(IngestDocsArgs),
    /// Retrieve context for a question and generate an answer
    Query(QueryArgs),
    /// Score response/ground-truth pairs with the metric suite
    Eval(EvalArgs),
    /// Great-circle calculations between two GPS coordinates
    Geo(GeoArgs),
    /// Print a collection's manifest
    Inspect(InspectArgs),
}

#[derive(Args)]
struct StoreArgs {
    /// Database directory holding collections
    #[arg(long)]
    db: PathBuf,
    /// Collection name inside the database directory
    #[arg(long)]
    collection: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedProvider {
    Local,
    Remote,
}

#[derive(Args)]
struct EmbedArgs {
    /// Embedding provider
    #[arg(long = "embed", value_enum, default_value = "local")]
    provider: EmbedProvider,
    /// Remote embeddings endpoint URL (remote provider only)
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// Remote embedding model name (remote provider only)
    #[arg(long)]
    embed_model: Option<String>,
    /// Embedding dimension
    #[arg(long, default_value_t = 384)]
    dim: usize,
    /// Built-in stop list applied before local embedding (e.g. en-v1)
    #[arg(long)]
    stop_list: Option<String>,
    /// Bearer token for remote endpoints; overrides SCENE_RAG_API_KEY
    #[arg(long)]
    api_key: Option<String>,
}

#[derive(Args)]
struct ChunkArgs {
    /// Window size in tokens
    #[arg(long, default_value_t = 256)]
    chunk_size: usize,
    /// Tokens shared between consecutive windows
    #[arg(long, default_value_t = 32)]
    overlap: usize,
}

#[derive(Args)]
struct IngestScenesArgs {
    /// Line-delimited scene record file
    scenes_file: PathBuf,
    #[command(flatten)]
    store: StoreArgs,
    #[command(flatten)]
    chunking: ChunkArgs,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Caption endpoint for records missing a camera_caption
    #[arg(long)]
    annotate_endpoint: Option<String>,
}

#[derive(Args)]
struct IngestDocsArgs {
    /// Directory of UTF-8 text files
    docs_dir: PathBuf,
    #[command(flatten)]
    store: StoreArgs,
    #[command(flatten)]
    chunking: ChunkArgs,
    #[command(flatten)]
    embed: EmbedArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Ann,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Echo,
    Fixed,
    Remote,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    store: StoreArgs,
    /// Question to answer
    #[arg(long)]
    question: String,
    /// File holding exactly one scene record used as scene context
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Number of chunks to retrieve
    #[arg(long, default_value_t = 4)]
    top_k: usize,
    /// Search strategy
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    /// Generation backend
    #[arg(long, value_enum, default_value = "echo")]
    backend: BackendArg,
    /// Constant answer for the fixed backend
    #[arg(long, default_value = "no situational description available")]
    fixed_text: String,
    /// Chat-completions endpoint URL (remote backend only)
    #[arg(long)]
    llm_endpoint: Option<String>,
    /// Chat model name (remote backend only)
    #[arg(long)]
    llm_model: Option<String>,
    /// Prompt template id
    #[arg(long, default_value = "wireless-v1")]
    template: String,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Line-delimited pair file: pair_id, response, ground_truth, question?
    #[arg(long)]
    pairs: PathBuf,
    /// Weight of the cosine term inside correctness
    #[arg(long, default_value_t = 0.25)]
    omega: f64,
    /// Token multiset semantics instead of sets for the overlap metrics
    #[arg(long)]
    multiset: bool,
    /// Remove this built-in stop list from metric tokenization (e.g. en-v1)
    #[arg(long)]
    filter_stopwords: Option<String>,
    #[command(flatten)]
    embed: EmbedArgs,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GeoArgs {
    #[command(subcommand)]
    op: GeoOp,
}

#[derive(Subcommand)]
enum GeoOp {
    /// Great-circle distance in kilometers
    Dist(GeoPair),
    /// Initial bearing in degrees, 0–360
    Bearing(GeoPair),
}

#[derive(Args)]
struct GeoPair {
    /// Origin as LAT,LON in degrees
    #[arg(long)]
    from: String,
    /// Destination as LAT,LON in degrees
    #[arg(long)]
    to: String,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    store: StoreArgs,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::UnknownStopList(_)
        | Error::UnknownTemplate(_)
        | Error::EmptyQuestion
        | Error::InvalidCoordinate(_)
        | Error::ProviderMismatch { .. } => 2,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::IngestScenes(args) => commands::ingest_scenes(args),
        Command::IngestDocs(args) => commands::ingest_docs(args),
        Command::Query(args) => commands::query(args),
        Command::Eval(args) => commands::eval(args),
        Command::Geo(args) => commands::geo(args),
        Command::Inspect(args) => commands::inspect(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
