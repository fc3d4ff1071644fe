use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kgctx::align::{read_training_jsonl, TrainOutcome};
use kgctx::assembly::{assemble_input, render_prompt, serialize_context, PromptTemplate, Segment, TemplateName};
use kgctx::eval::{bench_sweep, evaluate, Prediction, Relevance};
use kgctx::patch::read_image_embeddings;
use kgctx::synth::{planted_benchmark, PlantedSpec};
use kgctx::{
    retrieve, retrieve_for_image, train_head, ContextBundle, EmbeddingProvider, ImageDescriptor, KnowledgeGraph,
    ProjectionHead, Query, RetrievalConfig, RunManifest, Triple,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{BenchArgs, EvalArgs, GraphArgs, IngestArgs, PromptArgs, RetrieveArgs, TrainAlignArgs};
use crate::io::{self, usage, Inputs};
use crate::settings::{retrieval_config, FileConfig, ProviderSettings};

pub fn ingest(args: &IngestArgs) -> Result<()> {
    let started = io::now();
    let kg = io::load_graph(&args.graph)?;
    println!("triples: {}, entities: {}", kg.len(), kg.entity_count());
    if kg.duplicate_count() > 0 {
        eprintln!("skipped {} duplicate triples", kg.duplicate_count());
    }
    if let Some(cache) = &args.cache {
        let mut out = io::create(cache)?;
        for t in kg.triples() {
            writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
        }
        out.flush()?;
    }
    let mut inputs = Inputs::default();
    inputs.add(&args.graph.triples)?;
    let manifest = RunManifest::new(
        "ingest",
        json!({ "format": io::triple_format(&args.graph.triples, args.graph.format) }),
        inputs.into_map(),
        None,
        started,
    );
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), args.cache.as_deref()))
}

fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let mut queries: Vec<Query> = io::read_jsonl(path)?;
    let mut seen = HashSet::new();
    for q in &queries {
        q.validate()?;
        if !seen.insert(q.id.as_str()) {
            bail!("duplicate query id {:?} in {}", q.id, path.display());
        }
    }
    queries.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(queries)
}

#[derive(Serialize)]
struct RetrievedRecord<'a> {
    #[serde(flatten)]
    bundle: &'a ContextBundle,
    context: String,
    manifest_id: &'a str,
}

/// Entity expansion for labeled queries; region matching for queries that
/// carry no entities but have region embeddings for their image.
fn retrieve_one(
    kg: &KnowledgeGraph,
    query: &Query,
    config: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
    images: &HashMap<String, ImageDescriptor>,
    image_lambda: f64,
) -> kgctx::Result<ContextBundle> {
    let image = query.image.as_ref().and_then(|id| images.get(id));
    match image {
        Some(image) if query.entities.is_empty() => {
            retrieve_for_image(kg.triples(), image, query, config, image_lambda, provider, provider)
        }
        _ => retrieve(kg, query, config, provider),
    }
}

pub fn retrieve_cmd(args: &RetrieveArgs) -> Result<()> {
    let started = io::now();
    io::require_file(&args.queries)?;
    io::require_file(&args.graph.triples)?;
    let file = FileConfig::load(args.selection.config.as_ref())?;
    let config = retrieval_config(&file, &args.selection)?;
    let settings = ProviderSettings::resolve(&file, &args.provider)?;
    let image_lambda = args.image_lambda.or(file.image_lambda).unwrap_or(config.lambda);
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }

    let kg = io::load_graph(&args.graph)?;
    let queries = load_queries(&args.queries)?;
    let provider = settings.build()?;
    let images = match &args.images {
        Some(p) => read_image_embeddings(io::open(p)?).with_context(|| format!("loading {}", p.display()))?,
        None => HashMap::new(),
    };

    let mut inputs = Inputs::default();
    inputs.add(&args.graph.triples)?;
    inputs.add(&args.queries)?;
    inputs.add_opt(args.selection.config.as_ref())?;
    inputs.add_opt(settings.vectors.as_ref())?;
    inputs.add_opt(args.images.as_ref())?;
    let manifest = RunManifest::new(
        "retrieve",
        json!({
            "retrieval": config,
            "embedding": settings,
            "image_lambda": args.images.as_ref().map(|_| image_lambda),
            "sep": args.sep,
        }),
        inputs.into_map(),
        settings.seed,
        started,
    );

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<kgctx::Result<ContextBundle>> = pool.install(|| {
        queries
            .par_iter()
            .map(|q| retrieve_one(&kg, q, &config, &provider, &images, image_lambda))
            .collect()
    });

    let mut out = io::output(args.out.as_deref())?;
    let mut failures = 0;
    for (query, result) in queries.iter().zip(results) {
        let written = result.and_then(|bundle| {
            let context = serialize_context(&bundle, &args.sep)?;
            let record = RetrievedRecord { bundle: &bundle, context, manifest_id: &manifest.manifest_id };
            Ok(serde_json::to_string(&record)?)
        });
        match written {
            Ok(line) => writeln!(out, "{line}")?,
            Err(e) => {
                failures += 1;
                eprintln!("query {}: {e}", query.id);
            }
        }
    }
    out.flush()?;
    drop(out);
    log::info!("{} embeddings cached", provider.cached());
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), args.out.as_deref()))?;
    if failures > 0 {
        bail!("{failures} of {} queries failed", queries.len());
    }
    Ok(())
}

#[derive(Deserialize)]
struct RelevanceLine {
    id: String,
    triples: Vec<String>,
}

fn load_relevance(path: &Path) -> Result<Relevance> {
    let lines: Vec<RelevanceLine> = io::read_jsonl(path)?;
    let mut out = Relevance::new();
    for line in lines {
        let triples = line
            .triples
            .iter()
            .map(|t| t.parse::<Triple>())
            .collect::<kgctx::Result<HashSet<_>>>()
            .with_context(|| format!("relevance for {}", line.id))?;
        out.insert(line.id, triples);
    }
    Ok(out)
}

fn default_sweep() -> Vec<RetrievalConfig> {
    let mut configs = vec![RetrievalConfig::default()];
    configs.extend([1, 3, 5, 7, 9].map(RetrievalConfig::fixed));
    configs
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let started = io::now();
    let configs = match &args.sweep {
        Some(p) => io::read_json::<Vec<RetrievalConfig>>(p)?,
        None => default_sweep(),
    };
    if configs.is_empty() {
        return Err(usage("sweep file lists no configs"));
    }
    for c in &configs {
        c.validate().map_err(|e| usage(format!("sweep config {}: {e}", c.label())))?;
    }

    let mut inputs = Inputs::default();
    inputs.add_opt(args.sweep.as_ref())?;
    let report = if let Some(n) = args.planted {
        let spec = PlantedSpec { queries: n, seed: args.provider.seed.unwrap_or(PlantedSpec::default().seed), ..PlantedSpec::default() };
        let planted = planted_benchmark(spec)?;
        bench_sweep(&planted.kg, &planted.queries, &planted.provider, &configs, Some(&planted.relevance))?
    } else {
        let (triples, queries) = (args.triples.as_ref().expect("clap"), args.queries.as_ref().expect("clap"));
        io::require_file(triples)?;
        io::require_file(queries)?;
        let settings = ProviderSettings::resolve(&FileConfig::default(), &args.provider)?;
        let kg = io::load_graph(&GraphArgs { triples: triples.clone(), format: args.format })?;
        let queries_list = load_queries(queries)?;
        let relevance = args.relevance.as_deref().map(load_relevance).transpose()?;
        inputs.add(triples)?;
        inputs.add(queries)?;
        inputs.add_opt(args.relevance.as_ref())?;
        inputs.add_opt(settings.vectors.as_ref())?;
        let provider = settings.build()?;
        bench_sweep(&kg, &queries_list, &provider, &configs, relevance.as_ref())?
    };
    let report = if args.no_timing { report.without_timing() } else { report };

    let manifest = RunManifest::new(
        "bench",
        json!({ "configs": configs, "planted": args.planted, "provider": args.provider.provider, "dim": args.provider.dim }),
        inputs.into_map(),
        args.provider.seed,
        started,
    );
    io::write_text(&args.out, &report.to_csv()?)?;
    if let Some(p) = &args.json {
        io::write_json(p, &json!({ "manifest_id": manifest.manifest_id, "report": report }))?;
    }
    if let Some(p) = &args.per_class {
        io::write_text(p, &report.to_long_csv()?)?;
    }
    for row in &report.rows {
        let f1 = row.f1.map_or_else(|| "-".to_owned(), |f| format!("{f:.3}"));
        println!("{:<32} mean_context={:.2} empty={:.2} f1={f1}", row.config, row.mean_context, row.empty_fraction);
    }
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), Some(&args.out)))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let started = io::now();
    let queries = load_queries(&args.queries)?;
    let predictions: Vec<Prediction> = io::read_jsonl(&args.predictions)?;
    let report = evaluate(&predictions, &queries)?;

    let mut inputs = Inputs::default();
    inputs.add(&args.queries)?;
    inputs.add(&args.predictions)?;
    let manifest = RunManifest::new("eval", json!({}), inputs.into_map(), None, started);
    io::write_json(&args.out, &json!({ "manifest_id": manifest.manifest_id, "report": report }))?;
    if let Some(p) = &args.csv {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(["class", "correct", "total", "rate"])?;
        for (class, score) in &report.per_class {
            w.write_record([class.clone(), score.correct.to_string(), score.total.to_string(), score.rate.to_string()])?;
        }
        w.write_record([
            "overall".to_owned(),
            report.overall.correct.to_string(),
            report.overall.total.to_string(),
            report.overall.rate.to_string(),
        ])?;
        w.flush()?;
    }
    println!(
        "exact match: {:.4} ({}/{}), macro over classes: {:.4}",
        report.overall.rate, report.overall.correct, report.overall.total, report.macro_rate
    );
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), Some(&args.out)))
}

#[derive(Deserialize)]
struct BundleLine {
    id: String,
    context: String,
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    id: &'a str,
    template: &'static str,
    prompt: String,
}

#[derive(Serialize)]
struct AssembledRecord<'a> {
    id: &'a str,
    rendered: String,
    segments: Vec<Segment>,
}

pub fn prompt(args: &PromptArgs) -> Result<()> {
    let started = io::now();
    let base = TemplateName::from(args.template);
    let template_for = |q: &Query| -> PromptTemplate {
        let spatial = q.question_class.as_ref().is_some_and(|c| args.spatial_classes.contains(c));
        PromptTemplate::builtin(if spatial { TemplateName::SpatialNormalized } else { base })
    };
    let mut inputs = Inputs::default();
    let mut out = io::output(args.out.as_deref())?;

    if let Some(question) = &args.question {
        let entities: Vec<&str> = args.entities.iter().map(String::as_str).collect();
        let query = Query::new("q", question.as_str(), &entities);
        if args.assemble {
            let input = assemble_input("img", &query, args.context.as_deref().unwrap_or(""), &args.sep);
            writeln!(out, "{}", input.rendered)?;
        } else {
            let text = render_prompt(&PromptTemplate::builtin(base), &query, args.context.as_deref())?;
            write!(out, "{text}")?;
        }
    } else {
        let path = args.queries.as_ref().expect("clap");
        let queries = load_queries(path)?;
        inputs.add(path)?;
        let contexts: BTreeMap<String, String> = match &args.bundles {
            Some(p) => {
                inputs.add(p)?;
                io::read_jsonl::<BundleLine>(p)?.into_iter().map(|b| (b.id, b.context)).collect()
            }
            None => BTreeMap::new(),
        };
        for q in &queries {
            let context = contexts.get(&q.id).map(String::as_str);
            if args.bundles.is_some() && context.is_none() {
                bail!("no bundle for query {:?}", q.id);
            }
            let line = if args.assemble {
                let image = q.image.clone().unwrap_or_else(|| q.id.clone());
                let input = assemble_input(&image, q, context.unwrap_or(""), &args.sep);
                serde_json::to_string(&AssembledRecord { id: &q.id, rendered: input.rendered, segments: input.segments })?
            } else {
                let template = template_for(q);
                let prompt = render_prompt(&template, q, context).map_err(|e| anyhow!("query {}: {e}", q.id))?;
                serde_json::to_string(&PromptRecord { id: &q.id, template: template.name.as_str(), prompt })?
            };
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    drop(out);

    let manifest = RunManifest::new(
        "prompt",
        json!({
            "template": base.as_str(),
            "spatial_classes": args.spatial_classes,
            "assemble": args.assemble,
            "sep": args.sep,
        }),
        inputs.into_map(),
        None,
        started,
    );
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), args.out.as_deref()))
}

/// Saved projection head.
#[derive(Debug, Serialize, Deserialize)]
pub struct HeadFile {
    pub dim_out: usize,
    pub dim_in: usize,
    pub tau: f64,
    /// Row-major, `dim_out` rows of `dim_in` values.
    pub weights: Vec<Vec<f64>>,
}

pub fn train_align(args: &TrainAlignArgs) -> Result<()> {
    let started = io::now();
    if !(args.lr.is_finite() && args.lr > 0.0) {
        return Err(usage("--lr must be a positive number"));
    }
    if !args.tau.is_finite() {
        return Err(usage("--tau must be finite"));
    }
    let data = read_training_jsonl(io::open(&args.data)?, args.tau).with_context(|| format!("reading {}", args.data.display()))?;
    let first = data.first().ok_or_else(|| anyhow!("{} holds no training instances", args.data.display()))?;
    let (dim_out, dim_in) = (first.anchor.dim(), first.positive.dim());

    let mut inputs = Inputs::default();
    inputs.add(&args.data)?;
    inputs.add_opt(args.init.as_ref())?;
    let (initial, init_label) = match (&args.init, args.seed) {
        (Some(p), _) => {
            let saved: HeadFile = io::read_json(p)?;
            (ProjectionHead::from_rows(&saved.weights)?, "file")
        }
        (None, Some(seed)) => (ProjectionHead::random(dim_out, dim_in, seed), "random"),
        (None, None) if dim_out == dim_in => (ProjectionHead::identity(dim_in), "identity"),
        (None, None) => return Err(usage(format!("{dim_out}x{dim_in} head is not square; pass --seed or --init"))),
    };
    let manifest = RunManifest::new(
        "train-align",
        json!({ "steps": args.steps, "lr": args.lr, "tau": args.tau, "init": init_label }),
        inputs.into_map(),
        args.seed,
        started,
    );

    let TrainOutcome { head, trace } = train_head(&data, initial, args.steps, args.lr)?;
    io::write_json(
        &args.out,
        &HeadFile { dim_out: head.dim_out(), dim_in: head.dim_in(), tau: args.tau, weights: head.to_rows() },
    )?;
    if let Some(p) = &args.trace {
        let mut w = csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(["step", "loss"])?;
        for (step, loss) in trace.iter().enumerate() {
            w.write_record([step.to_string(), loss.to_string()])?;
        }
        w.flush()?;
    }
    println!(
        "mean loss: {:.6} -> {:.6} over {} steps",
        trace[0],
        trace[trace.len() - 1],
        args.steps
    );
    io::finish_manifest(manifest, io::manifest_path(args.manifest.as_deref(), Some(&args.out)))
}
