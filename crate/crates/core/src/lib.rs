//! Knowledge-graph context retrieval for knowledge-based visual question
//! answering.
//!
//! The pipeline takes the named entities attached to an image, expands them
//! through the triple graph for a configurable number of hops, masks those
//! entities in the question, scores each candidate triple against the masked
//! question and keeps either every triple at or above a similarity threshold
//! (dynamic selection) or a fixed top-k. The selected triples are serialized
//! into the `<SEP>`-separated input sequence or into LLM prompts.
//!
//! ```
//! use kgctx::{retrieve, HashEmbedder, KnowledgeGraph, Query, RetrievalConfig, Triple};
//!
//! let kg = KnowledgeGraph::from_triples([
//!     Triple::new("R.Madhavan", "spouse", "Sarita Birje").unwrap(),
//! ])
//! .unwrap();
//! let query = Query::new("q1", "Who is the spouse of R. Madhavan?", &["R. Madhavan"]);
//! let bundle = retrieve(&kg, &query, &RetrievalConfig::fixed(5), &HashEmbedder::default()).unwrap();
//! assert_eq!(bundle.candidate_count, 1);
//! ```

pub mod align;
pub mod assembly;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod filter;
pub mod kg;
pub mod label;
pub mod manifest;
pub mod patch;
pub mod synth;

pub use align::{contrastive_loss, loss_gradient, train_head, ContrastiveBatch, ProjectionHead, TrainOutcome};
pub use assembly::{
    assemble_input, parse_context, render_prompt, serialize_context, serialize_triples, AssembledInput, PromptTemplate,
    TemplateName, DEFAULT_SEP,
};
pub use embedding::{
    cosine, Embedding, EmbeddingProvider, HashEmbedder, Memoized, PrecomputedEmbedder, ProviderKind, RemoteEmbedder,
};
pub use error::{Error, Result};
pub use eval::{bench_sweep, evaluate, exact_match, BenchReport, EvalReport, Prediction, Relevance};
pub use filter::{
    mask_entities, retrieve, retrieve_with, score_candidates, select_context, ContextBundle, Query, RetrievalConfig,
    ScoredTriple, SelectionMode,
};
pub use kg::{HopHit, KnowledgeGraph, Triple, TripleFormat};
pub use label::{normalize, EntityLabel};
pub use manifest::RunManifest;
pub use patch::{region_candidates, retrieve_for_image, split_quadrants, ImageDescriptor, Region, RegionSource};
