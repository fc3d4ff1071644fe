//! Shared fixtures for the criterion benchmarks under `benches/`.

use kgctx::synth::{scale_queries, write_scale_tsv};
use kgctx::{KnowledgeGraph, Query, TripleFormat};

/// Synthetic graph as TSV bytes, ready for [`KnowledgeGraph::ingest`].
pub fn scale_tsv(triples: usize, seed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    write_scale_tsv(&mut buf, triples, seed).expect("writing to memory");
    buf
}

/// Ingested scale graph plus `queries` queries over it.
pub fn scale_fixture(triples: usize, queries: usize, seed: u64) -> (KnowledgeGraph, Vec<Query>) {
    let kg = KnowledgeGraph::ingest(scale_tsv(triples, seed).as_slice(), TripleFormat::Tsv).expect("synthetic graph parses");
    (kg, scale_queries(queries, triples, seed + 1))
}
