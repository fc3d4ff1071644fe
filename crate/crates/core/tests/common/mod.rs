//! Independent oracles and random fixtures shared by integration tests.
//! Nothing here calls into the index, selection or masking code paths.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use kgctx::{ScoredTriple, Triple};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Label normalization restated from its definition.
pub fn oracle_normalize(s: &str) -> String {
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut lowered = String::new();
    for c in collapsed.chars() {
        lowered.extend(c.to_lowercase());
    }
    lowered.replace(". ", ".")
}

/// Random entity surface form: case and spacing variants of `E{n}` style
/// names, some with a period so both "X. Y" and "X.Y" forms appear.
pub fn entity_name<R: Rng>(rng: &mut R, id: usize) -> String {
    let base = if id % 3 == 0 {
        format!("St. Node{id}")
    } else {
        format!("Node {id}")
    };
    match rng.random_range(0..4) {
        0 => base,
        1 => base.to_uppercase(),
        2 => base.replace(". ", ".").replace(' ', "  "),
        _ => format!(" {} ", base.to_lowercase()),
    }
}

/// Distinct triples over `entities` labels (self-loops allowed).
pub fn random_triples<R: Rng>(rng: &mut R, n: usize, entities: usize) -> Vec<Triple> {
    const RELATIONS: &[&str] = &["spouse", "born in", "part of", "used for", "located in", "child", "employer", "genre"];
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < n * 20 {
        attempts += 1;
        let (h, t) = (rng.random_range(0..entities), rng.random_range(0..entities));
        let r = *RELATIONS.choose(rng).unwrap();
        if !seen.insert((h, r, t)) {
            continue;
        }
        let head = entity_name(rng, h);
        let tail = entity_name(rng, t);
        out.push(Triple::new(&head, r, &tail).unwrap());
    }
    out
}

/// Random entity query labels: mostly present entities, some absent.
pub fn random_entities<R: Rng>(rng: &mut R, entities: usize, count: usize) -> Vec<String> {
    (0..count)
        .map(|_| {
            if rng.random_bool(0.1) {
                format!("Missing {}", rng.random_range(0..1000))
            } else {
                let id = rng.random_range(0..entities);
                entity_name(rng, id)
            }
        })
        .collect()
}

/// Linear scan: indices of triples whose head or tail matches an entity.
pub fn scan_entity_triples(triples: &[Triple], entities: &[String]) -> BTreeMap<usize, ()> {
    let keys: HashSet<String> = entities.iter().map(|e| oracle_normalize(e)).collect();
    triples
        .iter()
        .enumerate()
        .filter(|(_, t)| keys.contains(&oracle_normalize(&t.head)) || keys.contains(&oracle_normalize(&t.tail)))
        .map(|(i, _)| (i, ()))
        .collect()
}

/// Label graph with normalized endpoints, built once per triple list.
pub struct OracleGraph {
    endpoints: Vec<(String, String)>,
    adjacency: HashMap<String, Vec<usize>>,
}

impl OracleGraph {
    pub fn new(triples: &[Triple]) -> Self {
        let endpoints: Vec<(String, String)> =
            triples.iter().map(|t| (oracle_normalize(&t.head), oracle_normalize(&t.tail))).collect();
        let mut adjacency: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, (h, t)) in endpoints.iter().enumerate() {
            adjacency.entry(h.clone()).or_default().push(i);
            if t != h {
                adjacency.entry(t.clone()).or_default().push(i);
            }
        }
        Self { endpoints, adjacency }
    }

    /// Breadth-first search over labels. A triple is within `k` hops when
    /// one of its endpoints lies at label distance `< k` from the start
    /// set; its hop is that distance plus one.
    pub fn hops(&self, entities: &[String], k: u32) -> BTreeMap<usize, u32> {
        let mut dist: HashMap<&str, u32> = HashMap::new();
        let mut queue = VecDeque::new();
        let keys: Vec<String> = entities.iter().map(|e| oracle_normalize(e)).collect();
        for key in &keys {
            if let Some((label, _)) = self.adjacency.get_key_value(key.as_str()) {
                if !dist.contains_key(label.as_str()) {
                    dist.insert(label, 0);
                    queue.push_back(label.as_str());
                }
            }
        }
        let mut out = BTreeMap::new();
        while let Some(label) = queue.pop_front() {
            let d = dist[label];
            if d >= k {
                break;
            }
            for &i in &self.adjacency[label] {
                out.entry(i).or_insert(d + 1);
                let (h, t) = &self.endpoints[i];
                for next in [h.as_str(), t.as_str()] {
                    if !dist.contains_key(next) {
                        dist.insert(next, d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        out
    }
}

pub fn bfs_hops(triples: &[Triple], entities: &[String], k: u32) -> BTreeMap<usize, u32> {
    OracleGraph::new(triples).hops(entities, k)
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Full sort by (score desc, triple text asc, hop asc).
pub fn sorted_oracle(scored: &[ScoredTriple]) -> Vec<ScoredTriple> {
    let mut all = scored.to_vec();
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.triple.to_string().cmp(&b.triple.to_string()))
            .then_with(|| a.hop.cmp(&b.hop))
    });
    all
}

/// Masking restated as a brute-force search over source substrings:
/// entities longest first, leftmost non-overlapping matches whose
/// normalized text equals the entity key and that are not flanked by
/// alphanumerics or inside an existing mask token.
pub fn oracle_mask(question: &str, entities: &[String], mask: &str) -> String {
    let chars: Vec<(usize, char)> = question.char_indices().collect();
    let bounds: Vec<usize> = chars.iter().map(|(i, _)| *i).chain(std::iter::once(question.len())).collect();
    let mut taken: Vec<(usize, usize)> = question.match_indices(mask).map(|(i, m)| (i, i + m.len())).collect();
    let protected = taken.len();

    let mut keys: Vec<String> = entities.iter().map(|e| oracle_normalize(e)).filter(|k| !k.is_empty()).collect();
    keys.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
    keys.dedup();

    for key in &keys {
        let mut si = 0;
        while si < chars.len() {
            let mut matched = None;
            if !chars[si].1.is_whitespace() {
                for ei in si + 1..=chars.len() {
                    let (s, e) = (bounds[si], bounds[ei]);
                    let slice = &question[s..e];
                    if slice.ends_with(char::is_whitespace) {
                        continue;
                    }
                    if oracle_normalize(slice) == *key {
                        matched = Some((ei, s, e));
                        break;
                    }
                }
            }
            if let Some((ei, s, e)) = matched {
                let before_ok = !question[..s].chars().next_back().is_some_and(char::is_alphanumeric);
                let after_ok = !question[e..].chars().next().is_some_and(char::is_alphanumeric);
                let free = taken.iter().all(|&(a, b)| b <= s || e <= a);
                if before_ok && after_ok && free {
                    taken.push((s, e));
                    si = ei;
                    continue;
                }
            }
            si += 1;
        }
    }

    let mut spans: Vec<(usize, usize)> = taken[protected..].to_vec();
    spans.sort();
    let mut out = String::new();
    let mut cursor = 0;
    for (s, e) in spans {
        out.push_str(&question[cursor..s]);
        out.push_str(mask);
        cursor = e;
    }
    out.push_str(&question[cursor..]);
    out
}

/// Template name, freshly rendered prompt and stored golden text for the
/// shared prompt fixture.
pub fn golden_prompts() -> Vec<(&'static str, String, String)> {
    use kgctx::{render_prompt, serialize_triples, PromptTemplate, Query, TemplateName, DEFAULT_SEP};

    let query = Query::new("q1", "Who is to the right of R.Madhavan?", &["Kangana Ranaut", "R. Madhavan"]);
    let triples = [
        Triple::new("R.Madhavan", "spouse", "Sarita Birje").unwrap(),
        Triple::new("Kangana Ranaut", "award received", "National Film Award for Best Actress").unwrap(),
    ];
    let context = serialize_triples(&triples, DEFAULT_SEP).unwrap();
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    TemplateName::ALL
        .iter()
        .map(|&name| {
            let template = PromptTemplate::builtin(name);
            let ctx = (name == TemplateName::ZeroShotKnowledge).then_some(context.as_str());
            let rendered = render_prompt(&template, &query, ctx).unwrap();
            let golden = std::fs::read_to_string(dir.join(format!("{}.txt", name.as_str()))).unwrap();
            (name.as_str(), rendered, golden)
        })
        .collect()
}
