//! Embedding vectors, cosine similarity and the provider abstraction.
//!
//! Three providers ship with the crate:
//!
//! - [`HashEmbedder`]: feature-hashed word and character-trigram counts,
//!   L2-normalized. Needs no model and no files, so the whole pipeline runs
//!   offline.
//! - [`PrecomputedEmbedder`]: exact-text lookup into a JSONL table of
//!   `{"key": "<text>", "vector": [..]}` rows.
//! - [`RemoteEmbedder`]: `POST {endpoint}/embed` with `{"texts": [..]}`,
//!   expecting `{"vectors": [[..]]}` in input order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding must have dim >= 1".into()));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        Embedding::new(values).map_err(serde::de::Error::custom)
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine_slices(a.values(), b.values())
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    DeterministicHash,
    PrecomputedFile,
    RemoteService,
    /// Memoizing wrapper; reports the wrapped provider's kind elsewhere.
    Memoized,
}

/// Source of text embeddings. Implementations must return vectors of
/// [`dim`](EmbeddingProvider::dim) entries and the same vector for the same
/// text.
pub trait EmbeddingProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding>;

    /// Embeds several texts; output is aligned with input.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Embedding> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn kind(&self) -> ProviderKind {
        (**self).kind()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Embedding> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        (**self).embed_batch(texts)
    }
}

fn check_text(text: &str) -> Result<()> {
    if text.trim().is_empty() {
        Err(Error::EmptyText)
    } else {
        Ok(())
    }
}

/// Feature-hashing embedder over lowercased word tokens and their
/// character trigrams.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

pub const DEFAULT_HASH_DIM: usize = 256;
const TRIGRAM_WEIGHT: f64 = 0.5;

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("hash embedder dim must be >= 1".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn add_feature(&self, acc: &mut [f64], feature: &[u8], weight: f64) {
        let h = fnv1a(self.seed, feature);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign * weight;
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_HASH_DIM,
            seed: 0,
        }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::DeterministicHash
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        check_text(text)?;
        let mut acc = vec![0.0; self.dim];
        let lowered = text.to_lowercase();
        // Tokens are maximal runs of alphanumerics; `<mask>`-style markers
        // keep their brackets so they stay distinct from the bare word.
        let tokens = lowered
            .split(|c: char| !(c.is_alphanumeric() || c == '<' || c == '>' || c == '_'))
            .filter(|t| !t.is_empty());
        let mut any = false;
        for token in tokens {
            any = true;
            self.add_feature(&mut acc, token.as_bytes(), 1.0);
            let padded: Vec<char> = std::iter::once('^').chain(token.chars()).chain(std::iter::once('$')).collect();
            for window in padded.windows(3) {
                let gram: String = window.iter().collect();
                let mut key = Vec::with_capacity(gram.len() + 1);
                key.push(b'#');
                key.extend_from_slice(gram.as_bytes());
                self.add_feature(&mut acc, &key, TRIGRAM_WEIGHT);
            }
        }
        if !any {
            // Punctuation-only text still gets a deterministic vector.
            self.add_feature(&mut acc, lowered.trim().as_bytes(), 1.0);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Every feature cancelled out; fall back to the whole-text bucket.
            acc.iter_mut().for_each(|v| *v = 0.0);
            self.add_feature(&mut acc, lowered.as_bytes(), 1.0);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc.iter_mut().for_each(|v| *v /= norm);
        Embedding::new(acc)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET ^ seed.wrapping_mul(PRIME);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    // Final avalanche so low buckets and the sign bit are well mixed.
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Row of a precomputed-vector file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorRecord {
    pub key: String,
    pub vector: Embedding,
}

/// Exact-text lookup table of stored vectors.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    dim: usize,
    table: HashMap<String, Embedding>,
}

impl PrecomputedEmbedder {
    /// Builds a table from records. Later duplicates of a key overwrite
    /// earlier ones.
    pub fn from_records<I: IntoIterator<Item = VectorRecord>>(records: I) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for r in records {
            let expected = *dim.get_or_insert(r.vector.dim());
            if r.vector.dim() != expected {
                return Err(Error::DimMismatch {
                    expected,
                    actual: r.vector.dim(),
                });
            }
            table.insert(r.key, r.vector);
        }
        let dim = dim.ok_or_else(|| Error::InvalidArgument("precomputed vector table is empty".into()))?;
        Ok(Self { dim, table })
    }

    /// Loads `{"key", "vector"}` JSONL rows.
    pub fn from_jsonl<R: Read>(source: R) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: VectorRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::PrecomputedFile
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        check_text(text)?;
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| Error::UnknownKey(text.to_owned()))
    }
}

pub const DEFAULT_REMOTE_BATCH: usize = 64;

/// HTTP client for an embedding service.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl RemoteEmbedder {
    /// `endpoint` is the service base URL; requests go to `{endpoint}/embed`.
    pub fn new(endpoint: impl Into<String>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("remote embedder dim must be >= 1".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(Self {
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            dim,
            batch_size: DEFAULT_REMOTE_BATCH,
            agent,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn post(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let url = format!("{}/embed", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        if status != 200 {
            return Err(Error::Transport(format!("{url} returned status {status}")));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("bad response body: {e}")))?;
        if body.vectors.len() != texts.len() {
            return Err(Error::Transport(format!(
                "expected {} vectors, service returned {}",
                texts.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                let e = Embedding::new(v)?;
                if e.dim() != self.dim {
                    return Err(Error::DimMismatch {
                        expected: self.dim,
                        actual: e.dim(),
                    });
                }
                Ok(e)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn kind(&self) -> ProviderKind {
        ProviderKind::RemoteService
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        check_text(text)?;
        Ok(self.post(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        for t in texts {
            check_text(t)?;
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.post(chunk)?);
        }
        Ok(out)
    }
}

/// Caches vectors per text in front of another provider.
pub struct Memoized<P> {
    inner: P,
    cache: Mutex<HashMap<String, Embedding>>,
}

impl<P: EmbeddingProvider> Memoized<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("embedding cache poisoned").len()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for Memoized<P> {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Memoized
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>> {
        let missing: Vec<&str> = {
            let cache = self.cache.lock().expect("embedding cache poisoned");
            let mut missing: Vec<&str> = texts.iter().copied().filter(|t| !cache.contains_key(*t)).collect();
            missing.sort_unstable();
            missing.dedup();
            missing
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut cache = self.cache.lock().expect("embedding cache poisoned");
            for (text, vector) in missing.into_iter().zip(fresh) {
                cache.insert(text.to_owned(), vector);
            }
        }
        let cache = self.cache.lock().expect("embedding cache poisoned");
        Ok(texts.iter().map(|t| cache[*t].clone()).collect())
    }
}
