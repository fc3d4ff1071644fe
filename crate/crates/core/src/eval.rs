//! Exact-match scoring and fixed-vs-dynamic retrieval sweeps.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::filter::{retrieve, ContextBundle, Query, RetrievalConfig, SelectionMode};
use crate::kg::{KnowledgeGraph, Triple};

/// Key used in per-class tables for queries without a class.
pub const UNCLASSIFIED: &str = "unclassified";

/// Lowercase, collapse whitespace, trim, strip trailing `.`, `!`, `?`.
pub fn normalize_answer(answer: &str) -> String {
    let collapsed = answer.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_end_matches(['.', '!', '?']).trim_end().to_owned()
}

pub fn exact_match(predicted: &str, gold: &str) -> bool {
    normalize_answer(predicted) == normalize_answer(gold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub query_id: String,
    pub predicted: String,
    pub gold: String,
    pub question_class: Option<String>,
    pub matched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub correct: usize,
    pub total: usize,
    pub rate: f64,
}

impl ClassScore {
    fn from_counts(correct: usize, total: usize) -> Self {
        Self {
            correct,
            total,
            rate: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sorted by query id.
    pub records: Vec<EvalRecord>,
    /// Micro average over all records.
    pub overall: ClassScore,
    /// Unweighted mean of per-class rates.
    pub macro_rate: f64,
    pub per_class: BTreeMap<String, ClassScore>,
}

pub fn evaluate(predictions: &[Prediction], queries: &[Query]) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::NoPredictions);
    }
    let mut by_id: HashMap<&str, &Query> = HashMap::with_capacity(queries.len());
    for q in queries {
        if by_id.insert(&q.id, q).is_some() {
            return Err(Error::DuplicateQuery(q.id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(predictions.len());
    for p in predictions {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicateQuery(p.id.clone()));
        }
        let query = by_id.get(p.id.as_str()).ok_or_else(|| Error::UnknownQuery(p.id.clone()))?;
        let gold = query.gold_answer.clone().ok_or_else(|| Error::MissingGold(p.id.clone()))?;
        records.push(EvalRecord {
            query_id: p.id.clone(),
            matched: exact_match(&p.predicted, &gold),
            predicted: p.predicted.clone(),
            gold,
            question_class: query.question_class.clone(),
        });
    }
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));

    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let key = r.question_class.clone().unwrap_or_else(|| UNCLASSIFIED.to_owned());
        let entry = counts.entry(key).or_default();
        entry.0 += usize::from(r.matched);
        entry.1 += 1;
    }
    let per_class: BTreeMap<String, ClassScore> = counts
        .into_iter()
        .map(|(k, (c, t))| (k, ClassScore::from_counts(c, t)))
        .collect();
    let correct = records.iter().filter(|r| r.matched).count();
    let macro_rate = per_class.values().map(|s| s.rate).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport {
        overall: ClassScore::from_counts(correct, records.len()),
        macro_rate,
        per_class,
        records,
    })
}

/// Planted or annotated relevant triples per query id.
pub type Relevance = HashMap<String, HashSet<Triple>>;

/// Micro-averaged retrieval counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl RetrievalCounts {
    pub fn add(&mut self, selected: &HashSet<&Triple>, relevant: Option<&HashSet<Triple>>) {
        let tp = relevant.map_or(0, |rel| selected.iter().filter(|t| rel.contains(**t)).count());
        self.true_positive += tp;
        self.false_positive += selected.len() - tp;
        self.false_negative += relevant.map_or(0, HashSet::len) - tp;
    }

    /// 1.0 when nothing was selected.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    /// 1.0 when nothing was relevant.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config: String,
    pub mode: SelectionMode,
    pub lambda: Option<f64>,
    pub top_k: Option<usize>,
    pub hops: u32,
    pub queries: usize,
    /// Present only when an answer function was supplied.
    pub exact_match: Option<f64>,
    pub mean_context: f64,
    pub median_context: f64,
    pub empty_fraction: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchClassRow {
    pub config: String,
    pub class: String,
    pub queries: usize,
    pub exact_match: Option<f64>,
    pub mean_context: f64,
    pub empty_fraction: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub per_class: Vec<BenchClassRow>,
}

impl BenchReport {
    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "config", "mode", "lambda", "top_k", "hops", "queries", "exact_match", "mean_context", "median_context",
            "empty_fraction", "precision", "recall", "f1", "wall_ms",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.config.clone(),
                r.mode.to_string(),
                opt(r.lambda),
                opt(r.top_k),
                r.hops.to_string(),
                r.queries.to_string(),
                opt(r.exact_match),
                r.mean_context.to_string(),
                r.median_context.to_string(),
                r.empty_fraction.to_string(),
                opt(r.precision),
                opt(r.recall),
                opt(r.f1),
                format!("{:.3}", r.wall_ms),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    /// One `(config, class, metric, value)` row per measurement.
    pub fn to_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["config", "class", "metric", "value"]).map_err(csv_err)?;
        let mut emit = |config: &str, class: &str, metric: &str, value: Option<f64>| {
            value.map_or(Ok(()), |v| w.write_record([config, class, metric, &v.to_string()]))
        };
        for r in &self.rows {
            for (metric, value) in [
                ("exact_match", r.exact_match),
                ("mean_context", Some(r.mean_context)),
                ("median_context", Some(r.median_context)),
                ("empty_fraction", Some(r.empty_fraction)),
                ("precision", r.precision),
                ("recall", r.recall),
                ("f1", r.f1),
            ] {
                emit(&r.config, "all", metric, value).map_err(csv_err)?;
            }
        }
        for c in &self.per_class {
            for (metric, value) in [
                ("exact_match", c.exact_match),
                ("mean_context", Some(c.mean_context)),
                ("empty_fraction", Some(c.empty_fraction)),
                ("precision", c.precision),
                ("recall", c.recall),
                ("f1", c.f1),
            ] {
                emit(&c.config, &c.class, metric, value).map_err(csv_err)?;
            }
        }
        finish_csv(w)
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Answers a query from its retrieved context (a model, or a stand-in).
pub type Answerer<'a> = &'a (dyn Fn(&Query, &ContextBundle) -> String + Sync);

/// Runs every query under every config and aggregates context-size and,
/// when `relevance` is given, retrieval precision/recall.
pub fn bench_sweep(
    kg: &KnowledgeGraph,
    queries: &[Query],
    provider: &dyn EmbeddingProvider,
    configs: &[RetrievalConfig],
    relevance: Option<&Relevance>,
) -> Result<BenchReport> {
    bench_sweep_with(kg, queries, provider, configs, relevance, None)
}

pub fn bench_sweep_with(
    kg: &KnowledgeGraph,
    queries: &[Query],
    provider: &dyn EmbeddingProvider,
    configs: &[RetrievalConfig],
    relevance: Option<&Relevance>,
    answerer: Option<Answerer<'_>>,
) -> Result<BenchReport> {
    if configs.is_empty() {
        return Err(Error::InvalidArgument("bench sweep needs at least one config".into()));
    }
    let mut ordered: Vec<&Query> = queries.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut rows = Vec::with_capacity(configs.len());
    let mut per_class = Vec::new();
    for config in configs {
        let label = config.label();
        let started = Instant::now();
        let mut all = Accumulator::default();
        let mut classes: BTreeMap<String, Accumulator> = BTreeMap::new();
        for query in &ordered {
            let bundle = retrieve(kg, query, config, provider).map_err(|e| Error::Bench {
                query: query.id.clone(),
                config: label.clone(),
                source: Box::new(e),
            })?;
            let matched = match (answerer, &query.gold_answer) {
                (Some(answer), Some(gold)) => Some(exact_match(&answer(query, &bundle), gold)),
                _ => None,
            };
            let relevant = relevance.map(|r| r.get(&query.id));
            all.add(&bundle, matched, relevant);
            let class = query.question_class.clone().unwrap_or_else(|| UNCLASSIFIED.to_owned());
            classes.entry(class).or_default().add(&bundle, matched, relevant);
        }
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        let (lambda, top_k) = match config.mode {
            SelectionMode::Dynamic => (Some(config.lambda), None),
            SelectionMode::Fixed => (None, Some(config.top_k)),
        };
        rows.push(BenchRow {
            config: label.clone(),
            mode: config.mode,
            lambda,
            top_k,
            hops: config.hops,
            queries: all.sizes.len(),
            exact_match: all.exact_match(),
            mean_context: all.mean_size(),
            median_context: all.median_size(),
            empty_fraction: all.empty_fraction(),
            precision: all.counts.map(|c| c.precision()),
            recall: all.counts.map(|c| c.recall()),
            f1: all.counts.map(|c| c.f1()),
            wall_ms,
        });
        for (class, acc) in classes {
            per_class.push(BenchClassRow {
                config: label.clone(),
                class,
                queries: acc.sizes.len(),
                exact_match: acc.exact_match(),
                mean_context: acc.mean_size(),
                empty_fraction: acc.empty_fraction(),
                precision: acc.counts.map(|c| c.precision()),
                recall: acc.counts.map(|c| c.recall()),
                f1: acc.counts.map(|c| c.f1()),
            });
        }
    }
    Ok(BenchReport { rows, per_class })
}

#[derive(Default)]
struct Accumulator {
    sizes: Vec<usize>,
    matched: Vec<bool>,
    counts: Option<RetrievalCounts>,
}

impl Accumulator {
    fn add(&mut self, bundle: &ContextBundle, matched: Option<bool>, relevant: Option<Option<&HashSet<Triple>>>) {
        self.sizes.push(bundle.len());
        if let Some(m) = matched {
            self.matched.push(m);
        }
        if let Some(relevant) = relevant {
            let selected: HashSet<&Triple> = bundle.triples().collect();
            self.counts.get_or_insert_with(RetrievalCounts::default).add(&selected, relevant);
        }
    }

    fn exact_match(&self) -> Option<f64> {
        (!self.matched.is_empty()).then(|| self.matched.iter().filter(|m| **m).count() as f64 / self.matched.len() as f64)
    }

    fn mean_size(&self) -> f64 {
        if self.sizes.is_empty() {
            return 0.0;
        }
        self.sizes.iter().sum::<usize>() as f64 / self.sizes.len() as f64
    }

    fn median_size(&self) -> f64 {
        let mut s = self.sizes.clone();
        s.sort_unstable();
        match s.len() {
            0 => 0.0,
            n if n % 2 == 1 => s[n / 2] as f64,
            n => (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0,
        }
    }

    fn empty_fraction(&self) -> f64 {
        if self.sizes.is_empty() {
            return 0.0;
        }
        self.sizes.iter().filter(|s| **s == 0).count() as f64 / self.sizes.len() as f64
    }
}
