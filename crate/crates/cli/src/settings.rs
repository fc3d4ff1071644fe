//! Retrieval and provider settings merged from a config file and flags.

use std::path::PathBuf;

use anyhow::{Context, Result};
use kgctx::embedding::DEFAULT_HASH_DIM;
use kgctx::{EmbeddingProvider, HashEmbedder, Memoized, PrecomputedEmbedder, RemoteEmbedder, RetrievalConfig, SelectionMode};
use serde::{Deserialize, Serialize};

use crate::args::{ProviderArg, ProviderArgs, SelectionArgs};
use crate::io::{self, usage};

/// Flat config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub hops: Option<u32>,
    pub mode: Option<SelectionMode>,
    pub top_k: Option<usize>,
    pub mask_token: Option<String>,
    pub provider: Option<ProviderArg>,
    pub vectors: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub image_lambda: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            Some(p) => io::read_json(p),
            None => Ok(Self::default()),
        }
    }
}

pub fn retrieval_config(file: &FileConfig, flags: &SelectionArgs) -> Result<RetrievalConfig> {
    let defaults = RetrievalConfig::default();
    let config = RetrievalConfig {
        lambda: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        hops: flags.hops.or(file.hops).unwrap_or(defaults.hops),
        mode: flags.mode.map(Into::into).or(file.mode).unwrap_or(defaults.mode),
        top_k: flags.top_k.or(file.top_k).unwrap_or(defaults.top_k),
        mask_token: flags.mask_token.clone().or_else(|| file.mask_token.clone()).unwrap_or(defaults.mask_token),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// Provider choice as recorded in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct ProviderSettings {
    pub provider: ProviderArg,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProviderSettings {
    pub fn resolve(file: &FileConfig, flags: &ProviderArgs) -> Result<Self> {
        let vectors = flags.vectors.clone().or_else(|| file.vectors.clone());
        let endpoint = flags.endpoint.clone().or_else(|| file.endpoint.clone());
        let provider = flags.provider.or(file.provider).unwrap_or(if vectors.is_some() {
            ProviderArg::Precomputed
        } else {
            ProviderArg::Hash
        });
        let dim = flags.dim.or(file.dim);
        let seed = flags.seed.or(file.seed);
        let settings = match provider {
            ProviderArg::Hash => Self {
                provider,
                vectors: None,
                endpoint: None,
                dim: Some(dim.unwrap_or(DEFAULT_HASH_DIM)),
                seed: Some(seed.unwrap_or(0)),
            },
            ProviderArg::Precomputed => Self {
                provider,
                vectors: Some(vectors.ok_or_else(|| usage("--provider precomputed needs --vectors"))?),
                endpoint: None,
                dim: None,
                seed: None,
            },
            ProviderArg::Remote => Self {
                provider,
                vectors: None,
                endpoint: Some(endpoint.ok_or_else(|| usage("--provider remote needs --endpoint or KGCTX_EMBED_URL"))?),
                dim: Some(dim.ok_or_else(|| usage("--provider remote needs --dim"))?),
                seed: None,
            },
        };
        Ok(settings)
    }

    /// Builds the provider with a per-run cache in front of it.
    pub fn build(&self) -> Result<Memoized<Box<dyn EmbeddingProvider>>> {
        let inner: Box<dyn EmbeddingProvider> = match self.provider {
            ProviderArg::Hash => Box::new(
                HashEmbedder::new(self.dim.unwrap_or(DEFAULT_HASH_DIM), self.seed.unwrap_or(0))
                    .map_err(|e| usage(e.to_string()))?,
            ),
            ProviderArg::Precomputed => {
                let path = self.vectors.as_ref().expect("resolved");
                let reader = io::open(path)?;
                Box::new(PrecomputedEmbedder::from_jsonl(reader).with_context(|| format!("loading {}", path.display()))?)
            }
            ProviderArg::Remote => Box::new(RemoteEmbedder::new(
                self.endpoint.clone().expect("resolved"),
                self.dim.expect("resolved"),
            )?),
        };
        Ok(Memoized::new(inner))
    }
}
