use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgctx::{SelectionMode, TemplateName, TripleFormat};

#[derive(Debug, Parser)]
#[command(name = "kgctx", version, about = "Knowledge-graph context retrieval for knowledge-based VQA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a triple file and print graph statistics.
    Ingest(IngestArgs),
    /// Retrieve a context bundle for every query.
    Retrieve(RetrieveArgs),
    /// Sweep retrieval configs and report context statistics.
    Bench(BenchArgs),
    /// Score predicted answers by exact match.
    Eval(EvalArgs),
    /// Render LLM prompts or assembled model inputs.
    Prompt(PromptArgs),
    /// Train the triple-side projection with the contrastive loss.
    TrainAlign(TrainAlignArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

impl From<FormatArg> for TripleFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => TripleFormat::Tsv,
            FormatArg::Jsonl => TripleFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderArg {
    Hash,
    Precomputed,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Dynamic,
    Fixed,
}

impl From<ModeArg> for SelectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Dynamic => SelectionMode::Dynamic,
            ModeArg::Fixed => SelectionMode::Fixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TemplateArg {
    ZeroShotPlain,
    ZeroShotKnowledge,
    SpatialNormalized,
}

impl From<TemplateArg> for TemplateName {
    fn from(t: TemplateArg) -> Self {
        match t {
            TemplateArg::ZeroShotPlain => TemplateName::ZeroShotPlain,
            TemplateArg::ZeroShotKnowledge => TemplateName::ZeroShotKnowledge,
            TemplateArg::SpatialNormalized => TemplateName::SpatialNormalized,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Triple file (TSV `head<TAB>relation<TAB>tail` or JSONL).
    #[arg(long)]
    pub triples: PathBuf,
    /// Defaults to jsonl for `.jsonl` files, tsv otherwise.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderArg>,
    /// Precomputed vectors, JSONL `{"key": text, "vector": [..]}`.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Base URL of a remote embedding service.
    #[arg(long, env = "KGCTX_EMBED_URL")]
    pub endpoint: Option<String>,
    /// Vector dimension for the hash and remote providers.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Hash provider seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Flat JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub hops: Option<u32>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub mask_token: Option<String>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Write the deduplicated graph as TSV.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Queries, JSONL `{"id","question","entities":[..],"answer","class","image"}`.
    #[arg(long)]
    pub queries: PathBuf,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Region embeddings for unlabeled images, JSONL keyed by `image_id`.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Region match threshold; defaults to the selection lambda.
    #[arg(long)]
    pub image_lambda: Option<f64>,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = kgctx::DEFAULT_SEP)]
    pub sep: String,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Knowledge graph; required unless --planted is given.
    #[arg(long, required_unless_present = "planted")]
    pub triples: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, required_unless_present = "planted")]
    pub queries: Option<PathBuf>,
    /// Relevant triples per query, JSONL `{"id","triples":["(h, r, t)",..]}`.
    #[arg(long)]
    pub relevance: Option<PathBuf>,
    /// Use a synthetic planted-relevance benchmark with this many queries.
    #[arg(long, conflicts_with_all = ["triples", "queries", "relevance"])]
    pub planted: Option<usize>,
    /// JSON array of retrieval configs; defaults to dynamic(0.8) and top-k 1,3,5,7,9.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    /// Report zero wall time so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// One row per config, CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Full report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Per-class rows, CSV.
    #[arg(long)]
    pub per_class: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub queries: PathBuf,
    /// JSONL `{"id","predicted"}`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-class CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    #[arg(long, value_enum, default_value = "zero-shot-knowledge")]
    pub template: TemplateArg,
    /// Single question; use --queries for a batch.
    #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
    pub question: Option<String>,
    /// Named entity (repeatable).
    #[arg(long = "entity")]
    pub entities: Vec<String>,
    /// Serialized triples string for a single question.
    #[arg(long)]
    pub context: Option<String>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Output of `retrieve`, supplying each query's context.
    #[arg(long, requires = "queries")]
    pub bundles: Option<PathBuf>,
    /// Question classes that get the spatial-normalized template.
    #[arg(long, value_delimiter = ',')]
    pub spatial_classes: Vec<String>,
    /// Emit `image <SEP> question <SEP> [entities] <SEP> context` inputs instead of prompts.
    #[arg(long)]
    pub assemble: bool,
    #[arg(long, default_value = kgctx::DEFAULT_SEP)]
    pub sep: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainAlignArgs {
    /// JSONL `{"anchor":[..],"positive":[..],"negatives":[[..],..]}`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Logit scale is `e^tau`.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Start from a scaled random matrix with this seed instead of identity.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from a saved head.
    #[arg(long, conflicts_with = "seed")]
    pub init: Option<PathBuf>,
    /// Trained head, JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace, CSV `step,loss`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// ln(1 / 0.07), the usual starting temperature for CLIP-style training.
pub const DEFAULT_TAU: f64 = 2.659_260_036_932_778;
