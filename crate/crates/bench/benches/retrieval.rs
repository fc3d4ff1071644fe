use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use kgctx::synth::{planted_benchmark, PlantedSpec};
use kgctx::{retrieve, select_context, score_candidates, HashEmbedder, KnowledgeGraph, Memoized, RetrievalConfig, SelectionMode, TripleFormat};
use kgctx_bench::{scale_fixture, scale_tsv};

const TRIPLES: usize = 100_000;

fn ingest(c: &mut Criterion) {
    let tsv = scale_tsv(TRIPLES, 11);
    let mut group = c.benchmark_group("ingest");
    group.sample_size(10);
    group.throughput(Throughput::Elements(TRIPLES as u64));
    group.bench_function("tsv_100k", |b| {
        b.iter(|| KnowledgeGraph::ingest(black_box(tsv.as_slice()), TripleFormat::Tsv).unwrap())
    });
    group.finish();
}

fn retrieval(c: &mut Criterion) {
    let (kg, queries) = scale_fixture(TRIPLES, 100, 11);
    let provider = Memoized::new(HashEmbedder::new(256, 0).unwrap());
    let mut group = c.benchmark_group("retrieve");
    group.throughput(Throughput::Elements(queries.len() as u64));
    for hops in [1, 2] {
        let config = RetrievalConfig { hops, ..RetrievalConfig::default() };
        group.bench_function(format!("100_queries_{hops}_hop"), |b| {
            b.iter(|| {
                for q in &queries {
                    black_box(retrieve(&kg, q, &config, &provider).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let bench = planted_benchmark(PlantedSpec { queries: 10, distractors: 500, ..PlantedSpec::default() }).unwrap();
    let query = &bench.queries[9];
    let hits = bench.kg.expand_hops(&query.entities, 2);
    let candidates: Vec<_> = hits.iter().map(|h| (bench.kg.triple(h.ordinal), h.hop)).collect();
    let masked = kgctx::mask_entities(&query.question, &query.entities, "<MASK>");
    let scored = score_candidates(&masked, &candidates, &bench.provider, &bench.provider).unwrap();

    let mut group = c.benchmark_group("select_context");
    for (name, config) in [
        ("dynamic", RetrievalConfig::default()),
        ("fixed_k5", RetrievalConfig { mode: SelectionMode::Fixed, top_k: 5, ..RetrievalConfig::default() }),
    ] {
        group.bench_function(name, |b| {
            b.iter_batched(|| scored.clone(), |s| select_context(&query.id, s, &config), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, ingest, retrieval, selection);
criterion_main!(benches);
