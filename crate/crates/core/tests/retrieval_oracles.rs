mod common;

use std::collections::{BTreeSet, HashSet};

use common::*;
use kgctx::embedding::VectorRecord;
use kgctx::eval::bench_sweep;
use kgctx::synth::{planted_benchmark, PlantedSpec};
use kgctx::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels(names: &[String]) -> Vec<EntityLabel> {
    names.iter().map(|n| EntityLabel::new(n.as_str())).collect()
}

#[test]
fn entity_triples_agree_with_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let triples = random_triples(&mut rng, 10_000, 3_000);
    let kg = KnowledgeGraph::from_triples(triples.clone()).unwrap();
    assert_eq!(kg.len(), triples.len());
    for _ in 0..200 {
        let count = rng.random_range(0..6);
        let entities = random_entities(&mut rng, 3_000, count);
        let expected: Vec<usize> = scan_entity_triples(&triples, &entities).into_keys().collect();
        assert_eq!(kg.entity_triples(&labels(&entities)), expected, "{entities:?}");
    }
}

#[test]
fn index_lookup_present_and_absent() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let triples = random_triples(&mut rng, 500, 200);
    let kg = KnowledgeGraph::from_triples(triples.clone()).unwrap();
    for t in &triples {
        assert!(!kg.lookup(&t.head).is_empty());
        assert!(!kg.lookup(&t.tail.to_uppercase()).is_empty());
    }
    assert!(kg.lookup("Node 999999").is_empty());
    assert!(kg.lookup("spouse").is_empty());
}

#[test]
fn one_hop_equals_entity_triples_and_hops_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(1..400);
        let ents = rng.random_range(2..200);
        let triples = random_triples(&mut rng, n, ents);
        let kg = KnowledgeGraph::from_triples(triples).unwrap();
        let entities = labels(&random_entities(&mut rng, ents, 2));
        let one: Vec<usize> = kg.expand_hops(&entities, 1).iter().map(|h| h.ordinal).collect();
        assert_eq!(one, kg.entity_triples(&entities));
        let mut prev: BTreeSet<usize> = BTreeSet::new();
        for k in 1..6 {
            let cur: BTreeSet<usize> = kg.expand_hops(&entities, k).iter().map(|h| h.ordinal).collect();
            assert!(prev.is_subset(&cur));
            prev = cur;
        }
    }
}

#[test]
fn chain_expansion_matches_bfs() {
    let triples = vec![
        Triple::new("A", "r1", "B").unwrap(),
        Triple::new("B", "r2", "C").unwrap(),
        Triple::new("C", "r3", "D").unwrap(),
    ];
    let kg = KnowledgeGraph::from_triples(triples.clone()).unwrap();
    let a = vec!["A".to_owned()];
    for k in [1, 2, 10] {
        let got: Vec<(usize, u32)> = kg.expand_hops(&labels(&a), k).iter().map(|h| (h.ordinal, h.hop)).collect();
        let want: Vec<(usize, u32)> = bfs_hops(&triples, &a, k).into_iter().collect();
        assert_eq!(got, want, "k={k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn masking_matches_substring_oracle(
        words in proptest::collection::vec(prop_oneof![
            Just("who".to_owned()), Just("is".to_owned()), Just("R.Madhavan".to_owned()),
            Just("R. Madhavan".to_owned()), Just("Ann".to_owned()), Just("Anna".to_owned()),
            Just("ann  marie".to_owned()), Just("Marie".to_owned()), Just("<MASK>".to_owned()),
            Just("?".to_owned()), Just(",".to_owned()), Just("of".to_owned()),
        ], 0..12),
        seps in proptest::collection::vec(prop_oneof![Just(" "), Just("  "), Just(""), Just("\t")], 12),
        ents in proptest::collection::vec(prop_oneof![
            Just("R. Madhavan".to_owned()), Just("Ann".to_owned()), Just("Ann Marie".to_owned()),
            Just("marie".to_owned()), Just("of".to_owned()), Just("Nobody".to_owned()),
        ], 0..4),
    ) {
        let mut question = String::new();
        for (w, s) in words.iter().zip(&seps) {
            question.push_str(w);
            question.push_str(s);
        }
        let got = mask_entities(&question, &labels(&ents), "<MASK>");
        prop_assert_eq!(&got, &oracle_mask(&question, &ents, "<MASK>"));
        prop_assert_eq!(mask_entities(&got, &labels(&ents), "<MASK>"), got);
    }
}

#[test]
fn scores_match_recomputed_cosines() {
    let provider = HashEmbedder::new(128, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let triples = random_triples(&mut rng, 10, 8);
    let candidates: Vec<(&Triple, u32)> = triples.iter().map(|t| (t, 1)).collect();
    let question = "What is the <MASK> part of?";
    let scored = score_candidates(question, &candidates, &provider, &provider).unwrap();
    assert_eq!(scored.len(), 10);
    let q = provider.embed(question).unwrap();
    for (s, t) in scored.iter().zip(&triples) {
        assert_eq!(&s.triple, t);
        let v = provider.embed(&t.to_string()).unwrap();
        assert!((s.score - oracle_cosine(q.values(), v.values())).abs() < 1e-12);
    }
}

fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredTriple> {
    (0..n)
        .map(|i| ScoredTriple {
            triple: Triple::new(&format!("h{}", rng.random_range(0..30)), "r", &format!("t{i}")).unwrap(),
            // Coarse grid so ties happen.
            score: (rng.random_range(-20..=20) as f64) / 20.0,
            hop: rng.random_range(1..3),
        })
        .collect()
}

#[test]
fn fixed_selection_is_sort_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scored = random_scored(&mut rng, 100);
    let bundle = select_context("q", scored.clone(), &RetrievalConfig::fixed(5));
    assert_eq!(bundle.selected, sorted_oracle(&scored)[..5].to_vec());
    let min_selected = bundle.selected.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    let chosen: HashSet<String> = bundle.triples().map(|t| t.to_string()).collect();
    for s in &scored {
        if !chosen.contains(&s.triple.to_string()) {
            assert!(s.score <= min_selected);
        }
    }
}

#[test]
fn dynamic_selection_is_monotone_in_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let scored = random_scored(&mut rng, 40);
        let (l1, l2) = {
            let a = rng.random_range(-1.0..=1.0);
            let b = rng.random_range(-1.0..=1.0);
            if a <= b { (a, b) } else { (b, a) }
        };
        let low: HashSet<String> = select_context("q", scored.clone(), &RetrievalConfig::dynamic(l1))
            .triples()
            .map(ToString::to_string)
            .collect();
        let high = select_context("q", scored, &RetrievalConfig::dynamic(l2));
        assert!(high.selected.iter().all(|s| s.score >= l2));
        assert!(high.triples().all(|t| low.contains(&t.to_string())));
    }
}

#[test]
fn masking_makes_retrieval_independent_of_entity_surface_form() {
    let kg = KnowledgeGraph::from_triples([
        Triple::new("R.Madhavan", "spouse", "Sarita Birje").unwrap(),
        Triple::new("R.Madhavan", "occupation", "actor").unwrap(),
        Triple::new("Sarita Birje", "occupation", "costume designer").unwrap(),
    ])
    .unwrap();
    let provider = HashEmbedder::default();
    let a = Query::new("q", "Who is the spouse of R.Madhavan?", &["R.Madhavan"]);
    let b = Query::new("q", "Who is the spouse of r. madhavan?", &["R. Madhavan"]);
    for config in [RetrievalConfig::dynamic(-1.0), RetrievalConfig::fixed(2)] {
        let ba = retrieve(&kg, &a, &config, &provider).unwrap();
        let bb = retrieve(&kg, &b, &config, &provider).unwrap();
        assert_eq!(serde_json::to_string(&ba).unwrap(), serde_json::to_string(&bb).unwrap());
        assert_eq!(ba.candidate_count, 3);
    }
}

/// Unit vector at angle `theta` from e0 within the (e0, e_axis) plane.
fn planar(dim: usize, axis: usize, cos: f64) -> Embedding {
    let mut v = vec![0.0; dim];
    v[0] = cos;
    v[axis] = (1.0 - cos * cos).sqrt();
    Embedding::new(v).unwrap()
}

#[test]
fn planted_seven_are_exactly_the_dynamic_context() {
    let dim = 32;
    let mut triples = Vec::new();
    let mut records = vec![VectorRecord {
        key: "Which awards did <MASK> win?".into(),
        vector: planar(dim, 1, 1.0),
    }];
    for i in 0..7 {
        let t = Triple::new("Kangana Ranaut", &format!("award received {i}"), &format!("award {i}")).unwrap();
        records.push(VectorRecord {
            key: t.to_string(),
            vector: planar(dim, 1 + i, 0.81 + 0.02 * i as f64),
        });
        triples.push(t);
    }
    for i in 0..9 {
        let t = Triple::new("Kangana Ranaut", &format!("other fact {i}"), &format!("value {i}")).unwrap();
        records.push(VectorRecord {
            key: t.to_string(),
            vector: planar(dim, 10 + i, -0.3 + 0.08 * i as f64),
        });
        triples.push(t);
    }
    let kg = KnowledgeGraph::from_triples(triples.clone()).unwrap();
    let provider = PrecomputedEmbedder::from_records(records).unwrap();
    let query = Query::new("q", "Which awards did Kangana Ranaut win?", &["Kangana Ranaut"]);

    let dynamic = retrieve(&kg, &query, &RetrievalConfig::dynamic(0.8), &provider).unwrap();
    let got: HashSet<&Triple> = dynamic.triples().collect();
    let planted: HashSet<&Triple> = triples[..7].iter().collect();
    assert_eq!(got, planted);
    assert_eq!(dynamic.candidate_count, 16);

    let fixed = retrieve(&kg, &query, &RetrievalConfig::fixed(5), &provider).unwrap();
    assert_eq!(fixed.len(), 5);
    assert!(fixed.triples().all(|t| planted.contains(t)));
}

#[test]
fn second_hop_triple_needs_two_hops() {
    let dim = 4;
    let chain = [
        Triple::new("A", "r1", "B").unwrap(),
        Triple::new("B", "r2", "C").unwrap(),
        Triple::new("C", "r3", "D").unwrap(),
    ];
    let q = planar(dim, 1, 1.0);
    let records = vec![
        VectorRecord { key: "What does <MASK> lead to?".into(), vector: q.clone() },
        VectorRecord { key: chain[0].to_string(), vector: planar(dim, 1, 0.1) },
        VectorRecord { key: chain[1].to_string(), vector: q },
        VectorRecord { key: chain[2].to_string(), vector: planar(dim, 2, 0.2) },
    ];
    let provider = PrecomputedEmbedder::from_records(records).unwrap();
    let kg = KnowledgeGraph::from_triples(chain.clone()).unwrap();
    let query = Query::new("q", "What does A lead to?", &["A"]);
    let k1 = retrieve(&kg, &query, &RetrievalConfig::dynamic(0.8).with_hops(1), &provider).unwrap();
    assert!(k1.is_empty());
    let k2 = retrieve(&kg, &query, &RetrievalConfig::dynamic(0.8).with_hops(2), &provider).unwrap();
    assert_eq!(k2.selected.len(), 1);
    assert_eq!(k2.selected[0].triple, chain[1]);
    assert_eq!(k2.selected[0].hop, 2);
    assert!((k2.selected[0].score - 1.0).abs() < 1e-12);
}

#[test]
fn region_candidates_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 6;
    let triples: Vec<Triple> = (0..50)
        .map(|i| Triple::new(&format!("object {i}"), "used for", &format!("purpose {i}")).unwrap())
        .collect();
    let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let records: Vec<VectorRecord> = triples
        .iter()
        .map(|t| VectorRecord { key: t.to_string(), vector: Embedding::new(rand_vec(&mut rng)).unwrap() })
        .collect();
    let provider = PrecomputedEmbedder::from_records(records).unwrap();
    let quads = split_quadrants(64, 48).unwrap();
    let mut regions: Vec<patch::RegionEmbedding> = quads
        .iter()
        .map(|r| patch::RegionEmbedding { region: *r, vector: Embedding::new(rand_vec(&mut rng)).unwrap() })
        .collect();
    let lambda = 0.5;

    let brute = |regions: &[patch::RegionEmbedding]| -> Vec<(String, f64)> {
        let mut best: std::collections::BTreeMap<String, f64> = Default::default();
        for r in regions {
            for t in &triples {
                let v = provider.embed(&t.to_string()).unwrap();
                let c = oracle_cosine(r.vector.values(), v.values());
                if c >= lambda {
                    let e = best.entry(t.to_string()).or_insert(c);
                    *e = e.max(c);
                }
            }
        }
        best.into_iter().collect()
    };
    let run = |regions: Vec<patch::RegionEmbedding>| -> Vec<(String, f64)> {
        let image = ImageDescriptor { id: "im".into(), width: 64, height: 48, patch_embeddings: Some(regions), boxes: None };
        let mut out: Vec<(String, f64)> = region_candidates(&image, &triples, &provider, lambda)
            .unwrap()
            .into_iter()
            .map(|s| (s.triple.to_string(), s.score))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    };

    let expected = brute(&regions);
    assert!(!expected.is_empty());
    let got = run(regions.clone());
    assert_eq!(got.len(), expected.len());
    for (g, e) in got.iter().zip(&expected) {
        assert_eq!(g.0, e.0);
        assert!((g.1 - e.1).abs() < 1e-12);
    }

    regions.reverse();
    assert_eq!(run(regions.clone()), got, "region order must not matter");

    let fewer: HashSet<String> = run(regions[..2].to_vec()).into_iter().map(|(k, _)| k).collect();
    let all: HashSet<String> = got.into_iter().map(|(k, _)| k).collect();
    assert!(fewer.is_subset(&all));
}

#[test]
fn empty_relevance_gives_empty_dynamic_and_full_fixed_contexts() {
    let bench = planted_benchmark(PlantedSpec { queries: 30, ..PlantedSpec::default() }).unwrap();
    let spatial: Vec<Query> = bench
        .queries
        .iter()
        .filter(|q| bench.relevance[&q.id].is_empty())
        .cloned()
        .collect();
    assert_eq!(spatial.len(), 3);
    for q in &spatial {
        let d = retrieve(&bench.kg, q, &RetrievalConfig::dynamic(0.8), &bench.provider).unwrap();
        assert!(d.is_empty());
        let f = retrieve(&bench.kg, q, &RetrievalConfig::fixed(5), &bench.provider).unwrap();
        assert_eq!(f.len(), 5);
    }
}

#[test]
fn top_k_sweep_has_one_row_per_setting_and_is_reproducible() {
    let bench = planted_benchmark(PlantedSpec { queries: 40, ..PlantedSpec::default() }).unwrap();
    let configs: Vec<RetrievalConfig> = [1, 3, 5, 7, 9].into_iter().map(RetrievalConfig::fixed).collect();
    let a = bench_sweep(&bench.kg, &bench.queries, &bench.provider, &configs, Some(&bench.relevance)).unwrap();
    assert_eq!(a.rows.len(), 5);
    let ks: Vec<Option<usize>> = a.rows.iter().map(|r| r.top_k).collect();
    assert_eq!(ks, [Some(1), Some(3), Some(5), Some(7), Some(9)]);
    let b = bench_sweep(&bench.kg, &bench.queries, &bench.provider, &configs, Some(&bench.relevance)).unwrap();
    assert_eq!(a.without_timing().to_csv().unwrap(), b.without_timing().to_csv().unwrap());
    assert_eq!(
        serde_json::to_string(&a.without_timing()).unwrap(),
        serde_json::to_string(&b.without_timing()).unwrap()
    );
    // spatial/planted breakdown present for every config
    assert_eq!(a.per_class.len(), 10);
}

#[test]
fn bench_reports_exact_match_with_answerer() {
    let bench = planted_benchmark(PlantedSpec { queries: 10, ..PlantedSpec::default() }).unwrap();
    let queries: Vec<Query> = bench
        .queries
        .iter()
        .map(|q| q.clone().with_answer(if bench.relevance[&q.id].is_empty() { "none" } else { "some" }))
        .collect();
    let answer = |_: &Query, b: &ContextBundle| if b.is_empty() { "None".to_owned() } else { "some".to_owned() };
    let report = eval::bench_sweep_with(
        &bench.kg,
        &queries,
        &bench.provider,
        &[RetrievalConfig::dynamic(0.8), RetrievalConfig::fixed(5)],
        None,
        Some(&answer),
    )
    .unwrap();
    assert_eq!(report.rows[0].exact_match, Some(1.0));
    assert_eq!(report.rows[1].exact_match, Some(0.9));
    assert_eq!(report.rows[0].precision, None);
}

#[test]
fn contrastive_loss_falls_as_temperature_rises() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    while checked < 100 {
        let dim = 5;
        let v = |rng: &mut ChaCha8Rng| Embedding::new((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let anchor = v(&mut rng);
        let positive = v(&mut rng);
        let negatives: Vec<Embedding> = (0..4).map(|_| v(&mut rng)).collect();
        let pos = cosine(&anchor, &positive).unwrap();
        if negatives.iter().any(|n| cosine(&anchor, n).unwrap() >= pos) {
            continue;
        }
        let loss_at = |tau: f64| {
            contrastive_loss(&ContrastiveBatch::new(anchor.clone(), positive.clone(), negatives.clone(), tau).unwrap()).unwrap()
        };
        let (lo, hi) = (rng.random_range(-1.0..1.0), rng.random_range(1.0..2.0));
        assert!(loss_at(hi) < loss_at(lo));
        checked += 1;
    }
}

#[test]
fn contrastive_loss_symmetries() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let v = |rng: &mut ChaCha8Rng| Embedding::new((0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let anchor = v(&mut rng);
        let positive = v(&mut rng);
        let mut negatives: Vec<Embedding> = (0..5).map(|_| v(&mut rng)).collect();
        let tau = rng.random_range(-1.0..2.0);
        let base = contrastive_loss(&ContrastiveBatch::new(anchor.clone(), positive.clone(), negatives.clone(), tau).unwrap()).unwrap();
        assert!(base >= 0.0);

        negatives.rotate_left(2);
        let permuted = contrastive_loss(&ContrastiveBatch::new(anchor.clone(), positive.clone(), negatives.clone(), tau).unwrap()).unwrap();
        assert!((base - permuted).abs() < 1e-12);

        let c = rng.random_range(0.1..10.0);
        let scaled_anchor = Embedding::new(anchor.values().iter().map(|x| x * c).collect()).unwrap();
        let scaled = contrastive_loss(&ContrastiveBatch::new(scaled_anchor, positive, negatives, tau).unwrap()).unwrap();
        assert!((base - scaled).abs() < 1e-12);
    }
}
