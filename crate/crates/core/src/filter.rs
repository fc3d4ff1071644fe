//! Question-side triple filtering.
//!
//! Named entities in the question are replaced by a mask token, every
//! candidate triple is scored by cosine similarity between the masked
//! question and the triple text, and the context is picked either
//! dynamically (all triples at or above a threshold) or as a fixed top-k.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::label::{EntityLabel, NormalizedView};

pub const DEFAULT_LAMBDA: f64 = 0.8;
pub const DEFAULT_HOPS: u32 = 2;
pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MASK_TOKEN: &str = "<MASK>";

/// A question with its named entities and optional gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub entities: Vec<EntityLabel>,
    #[serde(default, rename = "answer", skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, rename = "class", skip_serializing_if = "Option::is_none")]
    pub question_class: Option<String>,
    /// Image reference, used for assembled inputs and image-side retrieval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, question: impl Into<String>, entities: &[&str]) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            entities: entities.iter().map(|e| EntityLabel::new(*e)).collect(),
            gold_answer: None,
            question_class: None,
            image: None,
        }
    }

    pub fn with_answer(mut self, answer: impl Into<String>) -> Self {
        self.gold_answer = Some(answer.into());
        self
    }

    pub fn with_class(mut self, class: impl Into<String>) -> Self {
        self.question_class = Some(class.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::InvalidArgument(format!("query {:?} has an empty question", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Every candidate scoring at or above `lambda`.
    #[default]
    Dynamic,
    /// The `top_k` highest-scoring candidates.
    Fixed,
}

impl FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Self::Dynamic),
            "fixed" => Ok(Self::Fixed),
            other => Err(Error::InvalidArgument(format!("unknown selection mode {other:?}"))),
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dynamic => "dynamic",
            Self::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub lambda: f64,
    pub hops: u32,
    pub mode: SelectionMode,
    pub top_k: usize,
    pub mask_token: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            hops: DEFAULT_HOPS,
            mode: SelectionMode::Dynamic,
            top_k: DEFAULT_TOP_K,
            mask_token: DEFAULT_MASK_TOKEN.to_owned(),
        }
    }
}

impl RetrievalConfig {
    pub fn dynamic(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn fixed(top_k: usize) -> Self {
        Self {
            mode: SelectionMode::Fixed,
            top_k,
            ..Self::default()
        }
    }

    pub fn with_hops(mut self, hops: u32) -> Self {
        self.hops = hops;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!("lambda {} outside [-1, 1]", self.lambda)));
        }
        if self.hops == 0 {
            return Err(Error::InvalidArgument("hops must be >= 1".into()));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be >= 1".into()));
        }
        if self.mask_token.is_empty() {
            return Err(Error::InvalidArgument("mask token must be non-empty".into()));
        }
        Ok(())
    }

    /// Short label such as `dynamic(lambda=0.8,hops=2)`.
    pub fn label(&self) -> String {
        match self.mode {
            SelectionMode::Dynamic => format!("dynamic(lambda={},hops={})", self.lambda, self.hops),
            SelectionMode::Fixed => format!("fixed(top_k={},hops={})", self.top_k, self.hops),
        }
    }
}

/// A candidate triple with its relevance score and the hop that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriple {
    #[serde(flatten)]
    pub triple: Triple,
    pub score: f64,
    pub hop: u32,
}

/// Selected context for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    #[serde(rename = "id")]
    pub query_id: String,
    pub candidate_count: usize,
    pub config: RetrievalConfig,
    /// Descending score; equal scores ordered by triple text ascending.
    pub selected: Vec<ScoredTriple>,
}

impl ContextBundle {
    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.selected.iter().map(|s| &s.triple)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Replaces every occurrence of each entity with `mask_token`.
///
/// Matching uses label normalization, so `"R. Madhavan"` masks
/// `"R.Madhavan"`. Longer entities are matched first, matches must not be
/// flanked by alphanumerics, and existing `mask_token` occurrences are left
/// alone.
pub fn mask_entities(question: &str, entities: &[EntityLabel], mask_token: &str) -> String {
    let mut claimed: Vec<(Range<usize>, bool)> = Vec::new();
    if !mask_token.is_empty() {
        claimed.extend(question.match_indices(mask_token).map(|(i, m)| (i..i + m.len(), false)));
    }

    let mut keys: Vec<&str> = entities
        .iter()
        .map(EntityLabel::normalized)
        .filter(|k| !k.is_empty())
        .collect();
    keys.sort_unstable_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
    keys.dedup();

    if !keys.is_empty() {
        let view = NormalizedView::new(question);
        let offsets = view.char_offsets();
        let char_at = |byte: usize| offsets.binary_search(&byte).expect("match on char boundary");
        for key in keys {
            let mut from = 0;
            while let Some(pos) = view.text[from..].find(key) {
                let start = from + pos;
                let end = start + key.len();
                let (cs, ce) = (char_at(start), char_at(end));
                let range = view.spans[cs].start..view.spans[ce - 1].end;
                let free = claimed.iter().all(|(r, _)| r.end <= range.start || range.end <= r.start);
                if free && on_word_boundary(question, &range) {
                    claimed.push((range, true));
                    from = end;
                } else {
                    from = start + view.text[start..].chars().next().map_or(1, char::len_utf8);
                }
            }
        }
    }

    claimed.sort_by_key(|(r, _)| r.start);
    let mut out = String::with_capacity(question.len());
    let mut cursor = 0;
    for (range, is_entity) in claimed {
        if !is_entity {
            continue;
        }
        out.push_str(&question[cursor..range.start]);
        out.push_str(mask_token);
        cursor = range.end;
    }
    out.push_str(&question[cursor..]);
    out
}

fn on_word_boundary(text: &str, range: &Range<usize>) -> bool {
    let before = text[..range.start].chars().next_back();
    let after = text[range.end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

/// Scores candidates against the masked question. Output is aligned with
/// `candidates`.
pub fn score_candidates(
    masked_question: &str,
    candidates: &[(&Triple, u32)],
    question_provider: &dyn EmbeddingProvider,
    triple_provider: &dyn EmbeddingProvider,
) -> Result<Vec<ScoredTriple>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let question_vec = question_provider.embed(masked_question)?;
    let texts: Vec<String> = candidates.iter().map(|(t, _)| t.to_string()).collect();
    let vectors = embed_annotated(triple_provider, &texts)?;
    candidates
        .iter()
        .zip(&vectors)
        .zip(&texts)
        .map(|(((triple, hop), vector), text)| {
            let score = cosine(&question_vec, vector).map_err(|e| Error::Scoring {
                triple: text.clone(),
                source: Box::new(e),
            })?;
            Ok(ScoredTriple {
                triple: (*triple).clone(),
                score,
                hop: *hop,
            })
        })
        .collect()
}

/// Batch-embeds triple texts; on failure, pins the error to the first
/// triple that fails on its own.
pub(crate) fn embed_annotated(provider: &dyn EmbeddingProvider, texts: &[String]) -> Result<Vec<Embedding>> {
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    provider.embed_batch(&refs).map_err(|batch_err| {
        for text in texts {
            if let Err(e) = provider.embed(text) {
                return Error::Scoring {
                    triple: text.clone(),
                    source: Box::new(e),
                };
            }
        }
        Error::Scoring {
            triple: format!("batch of {} triples", texts.len()),
            source: Box::new(batch_err),
        }
    })
}

/// Total order used for context ranking.
pub(crate) fn rank_order(a: &(String, ScoredTriple), b: &(String, ScoredTriple)) -> Ordering {
    b.1.score
        .total_cmp(&a.1.score)
        .then_with(|| a.0.cmp(&b.0))
        .then_with(|| a.1.hop.cmp(&b.1.hop))
}

/// Picks the context from scored candidates according to `config.mode`.
pub fn select_context(query_id: &str, scored: Vec<ScoredTriple>, config: &RetrievalConfig) -> ContextBundle {
    let candidate_count = scored.len();
    let mut keyed: Vec<(String, ScoredTriple)> = scored
        .into_iter()
        .filter(|s| config.mode == SelectionMode::Fixed || s.score >= config.lambda)
        .map(|s| (s.triple.to_string(), s))
        .collect();
    keyed.sort_by(rank_order);
    if config.mode == SelectionMode::Fixed {
        keyed.truncate(config.top_k);
    }
    ContextBundle {
        query_id: query_id.to_owned(),
        candidate_count,
        config: config.clone(),
        selected: keyed.into_iter().map(|(_, s)| s).collect(),
    }
}

/// Entity expansion, masking, scoring and selection for one query, with a
/// single provider for both question and triples.
pub fn retrieve(
    kg: &KnowledgeGraph,
    query: &Query,
    config: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<ContextBundle> {
    retrieve_with(kg, query, config, provider, provider)
}

/// As [`retrieve`], with separate question and triple encoders.
pub fn retrieve_with(
    kg: &KnowledgeGraph,
    query: &Query,
    config: &RetrievalConfig,
    question_provider: &dyn EmbeddingProvider,
    triple_provider: &dyn EmbeddingProvider,
) -> Result<ContextBundle> {
    config.validate()?;
    query.validate()?;
    let hits = kg.expand_hops(&query.entities, config.hops);
    let candidates: Vec<(&Triple, u32)> = hits.iter().map(|h| (kg.triple(h.ordinal), h.hop)).collect();
    let masked = mask_entities(&query.question, &query.entities, &config.mask_token);
    let scored = score_candidates(&masked, &candidates, question_provider, triple_provider)?;
    Ok(select_context(&query.id, scored, config))
}
