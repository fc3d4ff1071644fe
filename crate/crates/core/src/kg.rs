//! Triple store: ingestion, entity index and multi-hop candidate extraction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::label::{normalize, EntityLabel};

/// One `(head, relation, tail)` fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triple {
    /// Builds a triple from trimmed fields, rejecting empty ones.
    pub fn new(head: &str, relation: &str, tail: &str) -> Result<Self> {
        let fields = [head.trim(), relation.trim(), tail.trim()];
        for (name, value) in ["head", "relation", "tail"].iter().zip(fields) {
            if value.is_empty() {
                return Err(Error::InvalidTriple(format!("empty {name}")));
            }
        }
        Ok(Self {
            head: fields[0].to_owned(),
            relation: fields[1].to_owned(),
            tail: fields[2].to_owned(),
        })
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.head, &self.relation, &self.tail]
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

impl FromStr for Triple {
    type Err = Error;

    /// Parses `"(head, relation, tail)"`. Fields containing `", "` cannot be
    /// told apart from separators and are rejected as ambiguous.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .strip_prefix('(')
            .and_then(|rest| rest.strip_suffix(')'))
            .ok_or_else(|| Error::InvalidTriple(format!("missing parentheses in {s:?}")))?;
        let parts: Vec<&str> = inner.split(", ").collect();
        match parts.as_slice() {
            [head, relation, tail] => Triple::new(head, relation, tail),
            _ => Err(Error::InvalidTriple(format!(
                "expected 3 fields, found {} in {s:?}",
                parts.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    #[default]
    Tsv,
    Jsonl,
}

impl FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            other => Err(Error::InvalidArgument(format!("unknown triple format {other:?}"))),
        }
    }
}

/// A triple reached during hop expansion, with the first hop that reached it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HopHit {
    pub ordinal: usize,
    pub hop: u32,
}

/// Immutable, indexed triple collection.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    /// Normalized (head, tail) per ordinal.
    endpoints: Vec<(String, String)>,
    entity_index: HashMap<String, Vec<usize>>,
    source_digest: String,
    duplicate_count: usize,
}

impl KnowledgeGraph {
    /// Reads and indexes a triple stream. Duplicates (after normalization)
    /// keep their first occurrence.
    pub fn ingest<R: Read>(source: R, format: TripleFormat) -> Result<Self> {
        let mut reader = BufReader::new(DigestReader::new(source));
        let mut builder = GraphBuilder::default();
        let mut line = String::new();
        let mut line_no = 0;
        loop {
            line.clear();
            line_no += 1;
            let n = reader.read_line(&mut line).map_err(|e| match e.kind() {
                std::io::ErrorKind::InvalidData => Error::Parse {
                    line: line_no,
                    reason: "invalid UTF-8".into(),
                },
                _ => Error::Io(e),
            })?;
            if n == 0 {
                break;
            }
            let record = line.trim_end_matches(['\n', '\r']);
            if let Some(triple) = parse_record(record, format, line_no)? {
                builder.push(triple);
            }
        }
        let digest = hex::encode(reader.into_inner().hasher.finalize());
        builder.finish(digest)
    }

    /// Builds a graph from in-memory triples. The digest covers the canonical
    /// TSV rendering of the input.
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Result<Self> {
        let mut hasher = Sha256::new();
        let mut builder = GraphBuilder::default();
        for t in triples {
            hasher.update(format!("{}\t{}\t{}\n", t.head, t.relation, t.tail).as_bytes());
            builder.push(t);
        }
        builder.finish(hex::encode(hasher.finalize()))
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, ordinal: usize) -> &Triple {
        &self.triples[ordinal]
    }

    pub fn entity_count(&self) -> usize {
        self.entity_index.len()
    }

    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicate_count
    }

    /// Ordinals of triples whose head or tail normalizes to `label`.
    pub fn lookup(&self, label: &str) -> &[usize] {
        self.lookup_normalized(&normalize(label))
    }

    fn lookup_normalized(&self, key: &str) -> &[usize] {
        self.entity_index.get(key).map_or(&[], Vec::as_slice)
    }

    /// Ordinals (ascending) of triples with a head or tail in `entities`.
    pub fn entity_triples(&self, entities: &[EntityLabel]) -> Vec<usize> {
        let mut out: Vec<usize> = entities
            .iter()
            .flat_map(|e| self.lookup_normalized(e.normalized()).iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Frontier expansion over `hops` steps: hop 1 is `entity_triples`,
    /// each later hop adds the triples touching any head or tail seen so far.
    /// Returned in ordinal order.
    pub fn expand_hops(&self, entities: &[EntityLabel], hops: u32) -> Vec<HopHit> {
        let mut seen_labels: HashSet<&str> = HashSet::new();
        let mut frontier: Vec<&str> = Vec::new();
        for e in entities {
            if let Some((key, _)) = self.entity_index.get_key_value(e.normalized()) {
                if seen_labels.insert(key.as_str()) {
                    frontier.push(key.as_str());
                }
            }
        }

        let mut reached: HashMap<usize, u32> = HashMap::new();
        for hop in 1..=hops {
            if frontier.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for label in frontier {
                for &ord in self.lookup_normalized(label) {
                    if reached.contains_key(&ord) {
                        continue;
                    }
                    reached.insert(ord, hop);
                    let (head, tail) = &self.endpoints[ord];
                    for endpoint in [head.as_str(), tail.as_str()] {
                        if seen_labels.insert(endpoint) {
                            next.push(endpoint);
                        }
                    }
                }
            }
            frontier = next;
        }

        let mut hits: Vec<HopHit> = reached
            .into_iter()
            .map(|(ordinal, hop)| HopHit { ordinal, hop })
            .collect();
        hits.sort_unstable();
        hits
    }
}

fn parse_record(record: &str, format: TripleFormat, line: usize) -> Result<Option<Triple>> {
    let parse_err = |reason: String| Error::Parse { line, reason };
    match format {
        TripleFormat::Tsv => {
            if record.trim().is_empty() || record.starts_with('#') {
                return Ok(None);
            }
            let fields: Vec<&str> = record.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            Triple::new(fields[0], fields[1], fields[2])
                .map(Some)
                .map_err(|e| parse_err(e.to_string()))
        }
        TripleFormat::Jsonl => {
            if record.trim().is_empty() {
                return Ok(None);
            }
            #[derive(Deserialize)]
            struct Record {
                head: String,
                relation: String,
                tail: String,
            }
            let r: Record = serde_json::from_str(record).map_err(|e| parse_err(e.to_string()))?;
            Triple::new(&r.head, &r.relation, &r.tail)
                .map(Some)
                .map_err(|e| parse_err(e.to_string()))
        }
    }
}

#[derive(Default)]
struct GraphBuilder {
    triples: Vec<Triple>,
    endpoints: Vec<(String, String)>,
    seen: HashSet<(String, String, String)>,
    entity_index: HashMap<String, Vec<usize>>,
    duplicates: usize,
}

impl GraphBuilder {
    fn push(&mut self, triple: Triple) {
        let head = normalize(&triple.head);
        let tail = normalize(&triple.tail);
        let key = (head.clone(), normalize(&triple.relation), tail.clone());
        if !self.seen.insert(key) {
            self.duplicates += 1;
            return;
        }
        let ordinal = self.triples.len();
        self.entity_index.entry(head.clone()).or_default().push(ordinal);
        if tail != head {
            self.entity_index.entry(tail.clone()).or_default().push(ordinal);
        }
        self.endpoints.push((head, tail));
        self.triples.push(triple);
    }

    fn finish(self, source_digest: String) -> Result<KnowledgeGraph> {
        if self.triples.is_empty() {
            return Err(Error::EmptyKnowledgeBase);
        }
        if self.duplicates > 0 {
            log::warn!("dropped {} duplicate triples", self.duplicates);
        }
        Ok(KnowledgeGraph {
            triples: self.triples,
            endpoints: self.endpoints,
            entity_index: self.entity_index,
            source_digest,
            duplicate_count: self.duplicates,
        })
    }
}

/// Hashes bytes as they are read.
struct DigestReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R> DigestReader<R> {
    fn new(inner: R) -> Self {
        Self {
            inner,
            hasher: Sha256::new(),
        }
    }
}

impl<R: Read> Read for DigestReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}
