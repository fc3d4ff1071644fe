//! Synthetic fixtures: a planted-relevance benchmark with analytically
//! placed embeddings, and a scale graph for throughput runs.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::{Embedding, PrecomputedEmbedder, VectorRecord};
use crate::error::Result;
use crate::eval::Relevance;
use crate::filter::{mask_entities, Query, DEFAULT_MASK_TOKEN};
use crate::kg::{KnowledgeGraph, Triple};

/// Cosine band for planted relevant triples.
pub const PLANTED_RELEVANT: (f64, f64) = (0.82, 0.98);
/// Cosine band for distractors.
pub const PLANTED_DISTRACTOR: (f64, f64) = (-0.4, 0.45);

pub struct PlantedBenchmark {
    pub kg: KnowledgeGraph,
    pub queries: Vec<Query>,
    pub provider: PrecomputedEmbedder,
    pub relevance: Relevance,
}

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub queries: usize,
    /// Distractor triples attached to every query entity.
    pub distractors: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            queries: 100,
            distractors: 10,
            dim: 64,
            seed: 7,
        }
    }
}

/// Builds a benchmark where query `i` has `i % 10` relevant triples with
/// cosine to its masked question inside [`PLANTED_RELEVANT`] and
/// `spec.distractors` others inside [`PLANTED_DISTRACTOR`]. Every tenth
/// query (zero relevant triples) is classed `spatial`, the rest `planted`.
pub fn planted_benchmark(spec: PlantedSpec) -> Result<PlantedBenchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut triples = Vec::new();
    let mut queries = Vec::with_capacity(spec.queries);
    let mut records = Vec::new();
    let mut relevance: Relevance = HashMap::new();

    for qi in 0..spec.queries {
        let entity = format!("Entity {qi:04}");
        let question = format!("Which fact number {qi} about {entity} answers this?");
        let query = Query::new(format!("q{qi:04}"), question, &[entity.as_str()])
            .with_class(if qi % 10 == 0 { "spatial" } else { "planted" });
        let masked = mask_entities(&query.question, &query.entities, DEFAULT_MASK_TOKEN);
        let anchor = random_unit(&mut rng, spec.dim);
        records.push(VectorRecord {
            key: masked,
            vector: Embedding::new(anchor.clone())?,
        });

        let relevant_count = qi % 10;
        let mut relevant = HashSet::new();
        for j in 0..relevant_count + spec.distractors {
            let is_relevant = j < relevant_count;
            let (lo, hi) = if is_relevant { PLANTED_RELEVANT } else { PLANTED_DISTRACTOR };
            let cos = rng.random_range(lo..=hi);
            let kind = if is_relevant { "relevant" } else { "distractor" };
            let triple = Triple::new(&entity, &format!("{kind} relation {j}"), &format!("value {qi}-{j}"))?;
            records.push(VectorRecord {
                key: triple.to_string(),
                vector: Embedding::new(at_cosine(&mut rng, &anchor, cos))?,
            });
            if is_relevant {
                relevant.insert(triple.clone());
            }
            triples.push(triple);
        }
        relevance.insert(query.id.clone(), relevant);
        queries.push(query);
    }

    Ok(PlantedBenchmark {
        kg: KnowledgeGraph::from_triples(triples)?,
        queries,
        provider: PrecomputedEmbedder::from_records(records)?,
        relevance,
    })
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A unit vector whose cosine with unit `anchor` is `cos`.
fn at_cosine<R: Rng>(rng: &mut R, anchor: &[f64], cos: f64) -> Vec<f64> {
    loop {
        let mut w = random_unit(rng, anchor.len());
        let proj: f64 = w.iter().zip(anchor).map(|(a, b)| a * b).sum();
        w.iter_mut().zip(anchor).for_each(|(x, a)| *x -= proj * a);
        let n = norm(&w);
        if n > 1e-3 {
            let sin = (1.0 - cos * cos).sqrt();
            return anchor.iter().zip(&w).map(|(a, x)| cos * a + sin * x / n).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const RELATIONS: &[&str] = &[
    "spouse", "place of birth", "occupation", "country of citizenship", "educated at", "member of", "award received",
    "position held", "sibling", "child", "father", "mother", "located in", "used for", "capable of", "part of",
    "has property", "made of", "at location", "is a", "related to", "desires", "causes", "has a", "date of birth",
    "date of death", "genre", "instrument", "employer", "religion",
];

/// Writes `n` distinct TSV triples over `n / 4` entities, mimicking an
/// entity-centric knowledge base.
pub fn write_scale_tsv<W: Write>(out: &mut W, n: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = (n / 4).max(2);
    let mut seen = HashSet::with_capacity(n);
    writeln!(out, "# synthetic knowledge base, {n} triples")?;
    while seen.len() < n {
        let head = rng.random_range(0..entities);
        let tail = rng.random_range(0..entities);
        let rel = *RELATIONS.choose(&mut rng).expect("non-empty");
        if head == tail || !seen.insert((head, rel, tail)) {
            continue;
        }
        writeln!(out, "Entity {head}\t{rel}\tEntity {tail}")?;
    }
    Ok(())
}

/// Queries naming one or two random entities of a [`write_scale_tsv`] graph.
pub fn scale_queries(count: usize, triples: usize, seed: u64) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entities = (triples / 4).max(2);
    (0..count)
        .map(|i| {
            let a = format!("Entity {}", rng.random_range(0..entities));
            let b = format!("Entity {}", rng.random_range(0..entities));
            let rel = *RELATIONS.choose(&mut rng).expect("non-empty");
            Query::new(format!("s{i:04}"), format!("What is the {rel} of {a}, seen next to {b}?"), &[a.as_str(), b.as_str()])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, EmbeddingProvider};
    use crate::kg::TripleFormat;

    #[test]
    fn planted_cosines_land_in_bands() {
        let bench = planted_benchmark(PlantedSpec {
            queries: 12,
            ..PlantedSpec::default()
        })
        .unwrap();
        for q in &bench.queries {
            let masked = mask_entities(&q.question, &q.entities, DEFAULT_MASK_TOKEN);
            let qv = bench.provider.embed(&masked).unwrap();
            let rel = &bench.relevance[&q.id];
            for ord in bench.kg.entity_triples(&q.entities) {
                let t = bench.kg.triple(ord);
                let c = cosine(&qv, &bench.provider.embed(&t.to_string()).unwrap()).unwrap();
                if rel.contains(t) {
                    assert!(c > 0.8, "{c}");
                } else {
                    assert!(c < 0.5, "{c}");
                }
            }
        }
    }

    #[test]
    fn scale_tsv_has_requested_size() {
        let mut buf = Vec::new();
        write_scale_tsv(&mut buf, 500, 1).unwrap();
        let kg = KnowledgeGraph::ingest(buf.as_slice(), TripleFormat::Tsv).unwrap();
        assert_eq!(kg.len(), 500);
        assert_eq!(kg.duplicate_count(), 0);
    }
}
