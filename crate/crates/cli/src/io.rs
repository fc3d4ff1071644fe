use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kgctx::manifest::file_digest;
use kgctx::{KnowledgeGraph, RunManifest, TripleFormat};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::args::{FormatArg, GraphArgs};

/// Bad invocation rather than bad data; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("input file not found: {}", path.display())))
    }
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    require_file(path)?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

/// Parses one value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), idx + 1))?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// File when a path is given, stdout otherwise.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn triple_format(path: &Path, explicit: Option<FormatArg>) -> TripleFormat {
    match explicit {
        Some(f) => f.into(),
        None if path.extension().is_some_and(|e| e == "jsonl") => TripleFormat::Jsonl,
        None => TripleFormat::Tsv,
    }
}

pub fn load_graph(args: &GraphArgs) -> Result<KnowledgeGraph> {
    let format = triple_format(&args.triples, args.format);
    let reader = open(&args.triples)?;
    KnowledgeGraph::ingest(reader, format).with_context(|| format!("ingesting {}", args.triples.display()))
}

/// Input path -> digest, for the run manifest.
#[derive(Debug, Default)]
pub struct Inputs(BTreeMap<String, String>);

impl Inputs {
    pub fn add(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path).with_context(|| format!("hashing {}", path.display()))?;
        self.0.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn add_opt(&mut self, path: Option<&PathBuf>) -> Result<()> {
        match path {
            Some(p) => self.add(p),
            None => Ok(()),
        }
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        self.0
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `--manifest` when given, else next to the main output.
pub fn manifest_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut name = o.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        })
    })
}

pub fn finish_manifest(mut manifest: RunManifest, path: Option<PathBuf>) -> Result<()> {
    manifest.finished_at = Some(now());
    match path {
        Some(p) => {
            write_json(&p, &manifest)?;
            log::info!("manifest {} written to {}", manifest.manifest_id, p.display());
        }
        None => log::info!("manifest {} not written (no output path)", manifest.manifest_id),
    }
    Ok(())
}
