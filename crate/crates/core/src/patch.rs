//! Image-side candidate generation for images without entity labels.
//!
//! Each region of an image (a quadrant or a detected object box) carries an
//! externally computed embedding. Triples are scored against every region,
//! kept when they reach the threshold in at least one region, and merged
//! with their best score.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::filter::{mask_entities, rank_order, score_candidates, select_context, ContextBundle, Query, RetrievalConfig, ScoredTriple};
use crate::kg::Triple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionSource {
    Quadrant,
    BoundingBox,
    FullImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub source: RegionSource,
}

impl Region {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.x < other.x + other.w && other.x < self.x + self.w && self.y < other.y + other.h && other.y < self.y + self.h
    }
}

/// Splits an image into four quadrants at `(width / 2, height / 2)`; the
/// right and bottom quadrants take the odd pixel.
pub fn split_quadrants(width: u32, height: u32) -> Result<[Region; 4]> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidRegion(format!("cannot split {width}x{height} image into quadrants")));
    }
    let (left, top) = (width / 2, height / 2);
    let (right, bottom) = (width - left, height - top);
    let q = |x, y, w, h| Region {
        x,
        y,
        w,
        h,
        source: RegionSource::Quadrant,
    };
    Ok([q(0, 0, left, top), q(left, 0, right, top), q(0, top, left, bottom), q(left, top, right, bottom)])
}

/// The whole image as a single region.
pub fn full_image(width: u32, height: u32) -> Region {
    Region {
        x: 0,
        y: 0,
        w: width,
        h: height,
        source: RegionSource::FullImage,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEmbedding {
    #[serde(flatten)]
    pub region: Region,
    pub vector: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageDescriptor {
    #[serde(rename = "image_id")]
    pub id: String,
    pub width: u32,
    pub height: u32,
    /// Embedded regions; required for retrieval.
    #[serde(default, rename = "regions", skip_serializing_if = "Option::is_none")]
    pub patch_embeddings: Option<Vec<RegionEmbedding>>,
    /// Object boxes without embeddings (detector output awaiting encoding).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<Region>>,
}

impl ImageDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidRegion(format!("image {:?} has zero size", self.id)));
        }
        let embedded = self.patch_embeddings.iter().flatten().map(|r| &r.region);
        for region in embedded.chain(self.boxes.iter().flatten()) {
            if !region.fits(self.width, self.height) {
                return Err(Error::InvalidRegion(format!(
                    "{region:?} outside {}x{} image {:?}",
                    self.width, self.height, self.id
                )));
            }
        }
        Ok(())
    }
}

/// Raw JSONL row for image embeddings. Width and height are optional; when
/// missing they are taken as the bounding extent of the regions.
#[derive(Deserialize)]
struct ImageRecord {
    image_id: String,
    #[serde(default)]
    width: Option<u32>,
    #[serde(default)]
    height: Option<u32>,
    regions: Vec<RegionEmbedding>,
}

/// Reads image-embedding JSONL rows keyed by image id.
pub fn read_image_embeddings<R: Read>(source: R) -> Result<HashMap<String, ImageDescriptor>> {
    let mut out = HashMap::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: idx + 1, reason };
        let rec: ImageRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let extent = |f: fn(&Region) -> u64| rec.regions.iter().map(|r| f(&r.region)).max().unwrap_or(0);
        let width = rec.width.unwrap_or(extent(|r| u64::from(r.x) + u64::from(r.w)) as u32);
        let height = rec.height.unwrap_or(extent(|r| u64::from(r.y) + u64::from(r.h)) as u32);
        let image = ImageDescriptor {
            id: rec.image_id,
            width,
            height,
            patch_embeddings: Some(rec.regions),
            boxes: None,
        };
        image.validate().map_err(|e| parse_err(e.to_string()))?;
        out.insert(image.id.clone(), image);
    }
    Ok(out)
}

/// Triples reaching `lambda` against at least one region, each with its
/// best region score. Sorted by descending score, then triple text.
pub fn region_candidates(
    image: &ImageDescriptor,
    triples: &[Triple],
    triple_provider: &dyn EmbeddingProvider,
    lambda: f64,
) -> Result<Vec<ScoredTriple>> {
    let regions = match &image.patch_embeddings {
        Some(r) if !r.is_empty() => r,
        _ => return Err(Error::MissingImageEmbeddings),
    };
    image.validate()?;
    if triples.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = triples.iter().map(Triple::to_string).collect();
    let vectors = crate::filter::embed_annotated(triple_provider, &texts)?;

    let mut best: Vec<Option<f64>> = vec![None; triples.len()];
    for region in regions {
        for (slot, (vector, text)) in best.iter_mut().zip(vectors.iter().zip(&texts)) {
            let score = cosine(&region.vector, vector).map_err(|e| Error::Scoring {
                triple: text.clone(),
                source: Box::new(e),
            })?;
            if score >= lambda && slot.is_none_or(|s| score > s) {
                *slot = Some(score);
            }
        }
    }

    let mut keyed: Vec<(String, ScoredTriple)> = best
        .into_iter()
        .zip(triples.iter().zip(texts))
        .filter_map(|(score, (triple, text))| {
            score.map(|score| {
                (
                    text,
                    ScoredTriple {
                        triple: triple.clone(),
                        score,
                        hop: 1,
                    },
                )
            })
        })
        .collect();
    keyed.sort_by(rank_order);
    Ok(keyed.into_iter().map(|(_, s)| s).collect())
}

/// Retrieval for an unlabeled image: region matching over `triples`
/// (typically the whole graph) at `image_lambda` replaces entity expansion,
/// then the question-side filter runs as usual.
pub fn retrieve_for_image(
    triples: &[Triple],
    image: &ImageDescriptor,
    query: &Query,
    config: &RetrievalConfig,
    image_lambda: f64,
    question_provider: &dyn EmbeddingProvider,
    triple_provider: &dyn EmbeddingProvider,
) -> Result<ContextBundle> {
    config.validate()?;
    query.validate()?;
    let image_hits = region_candidates(image, triples, triple_provider, image_lambda)?;
    let candidates: Vec<(&Triple, u32)> = image_hits.iter().map(|s| (&s.triple, s.hop)).collect();
    let masked = mask_entities(&query.question, &query.entities, &config.mask_token);
    let scored = score_candidates(&masked, &candidates, question_provider, triple_provider)?;
    Ok(select_context(&query.id, scored, config))
}
