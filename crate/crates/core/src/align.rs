//! Image–triple contrastive alignment.
//!
//! The loss for one anchor `a` (image or patch embedding), one relevant
//! triple `t+` and irrelevant triples `t_j` is
//!
//! ```text
//! L = -log( exp(s(a, t+) e^tau) / (exp(s(a, t+) e^tau) + sum_j exp(s(a, t_j) e^tau)) )
//! ```
//!
//! with `s` the cosine similarity. Training adjusts a linear projection
//! applied to the triple-side vectors; `tau` is fixed.

use std::io::{BufRead, BufReader, Read};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub anchor: Embedding,
    pub positive: Embedding,
    pub negatives: Vec<Embedding>,
    pub tau: f64,
}

impl ContrastiveBatch {
    pub fn new(anchor: Embedding, positive: Embedding, negatives: Vec<Embedding>, tau: f64) -> Result<Self> {
        let batch = Self {
            anchor,
            positive,
            negatives,
            tau,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(Error::InvalidArgument("contrastive batch needs at least one negative".into()));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidArgument("temperature must be finite".into()));
        }
        let dim = self.positive.dim();
        for v in &self.negatives {
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
        }
        Ok(())
    }

    fn triple_side(&self) -> impl Iterator<Item = &Embedding> {
        std::iter::once(&self.positive).chain(&self.negatives)
    }
}

/// JSONL training row; temperature is supplied by the caller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub anchor: Embedding,
    pub positive: Embedding,
    pub negatives: Vec<Embedding>,
}

pub fn read_training_jsonl<R: Read>(source: R, tau: f64) -> Result<Vec<ContrastiveBatch>> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse { line: idx + 1, reason };
        let inst: TrainingInstance = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let batch = ContrastiveBatch::new(inst.anchor, inst.positive, inst.negatives, tau).map_err(|e| parse_err(e.to_string()))?;
        out.push(batch);
    }
    Ok(out)
}

/// Linear map applied to triple-side vectors, stored as a
/// `dim_out x dim_in` matrix so that `project(v) = W v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    weights: DMatrix<f64>,
}

impl ProjectionHead {
    pub fn from_matrix(weights: DMatrix<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("projection weights must be finite".into()));
        }
        Ok(Self { weights })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weights: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim_out: usize, dim_in: usize) -> Self {
        Self {
            weights: DMatrix::zeros(dim_out, dim_in),
        }
    }

    /// Uniform entries in `[-1, 1] / sqrt(dim_in)` from a ChaCha8 stream.
    pub fn random(dim_out: usize, dim_in: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (dim_in.max(1) as f64).sqrt();
        Self {
            weights: DMatrix::from_fn(dim_out, dim_in, |_, _| rng.random_range(-1.0..=1.0) * scale),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn dim_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.weights.nrows()
    }

    pub fn project(&self, v: &Embedding) -> Result<DVector<f64>> {
        if v.dim() != self.dim_in() {
            return Err(Error::DimMismatch {
                expected: self.dim_in(),
                actual: v.dim(),
            });
        }
        Ok(&self.weights * DVector::from_column_slice(v.values()))
    }

    /// Row-major weights, for serialization.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.weights.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim_out = rows.len();
        let dim_in = rows.first().map_or(0, Vec::len);
        if dim_out == 0 || dim_in == 0 || rows.iter().any(|r| r.len() != dim_in) {
            return Err(Error::InvalidArgument("projection rows must be non-empty and rectangular".into()));
        }
        Self::from_matrix(DMatrix::from_fn(dim_out, dim_in, |i, j| rows[i][j]))
    }
}

/// Logits `cos(anchor, v) * e^tau` and the cosine parts needed for the
/// gradient.
struct Similarity {
    cos: f64,
    /// d cos / d projected vector
    grad: DVector<f64>,
}

fn similarity(anchor: &DVector<f64>, projected: &DVector<f64>) -> Result<Similarity> {
    if anchor.len() != projected.len() {
        return Err(Error::DimMismatch {
            expected: anchor.len(),
            actual: projected.len(),
        });
    }
    let (na, np) = (anchor.norm(), projected.norm());
    if na == 0.0 || np == 0.0 {
        return Err(Error::ZeroVector);
    }
    let cos = anchor.dot(projected) / (na * np);
    let grad = anchor / (na * np) - projected * (cos / (np * np));
    Ok(Similarity { cos, grad })
}

/// `-log softmax(z)[0]`, computed without overflow and with full
/// precision when the positive logit dominates.
fn neg_log_softmax_first(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let first = logits[0];
    let loss = if first >= max {
        logits[1..].iter().map(|z| (z - first).exp()).sum::<f64>().ln_1p()
    } else {
        max + sum.ln() - first
    };
    (loss.max(0.0), probs)
}

/// Loss with raw (unprojected) triple-side vectors.
pub fn contrastive_loss(batch: &ContrastiveBatch) -> Result<f64> {
    batch.validate()?;
    let anchor = DVector::from_column_slice(batch.anchor.values());
    let scale = batch.tau.exp();
    let logits = batch
        .triple_side()
        .map(|v| Ok(similarity(&anchor, &DVector::from_column_slice(v.values()))?.cos * scale))
        .collect::<Result<Vec<f64>>>()?;
    Ok(neg_log_softmax_first(&logits).0)
}

/// Loss after projecting the triple side through `head`.
pub fn projected_loss(batch: &ContrastiveBatch, head: &ProjectionHead) -> Result<f64> {
    Ok(loss_gradient(batch, head)?.0)
}

/// Loss and its analytic gradient with respect to the head weights.
pub fn loss_gradient(batch: &ContrastiveBatch, head: &ProjectionHead) -> Result<(f64, DMatrix<f64>)> {
    batch.validate()?;
    let anchor = DVector::from_column_slice(batch.anchor.values());
    let scale = batch.tau.exp();
    let mut sims = Vec::with_capacity(batch.negatives.len() + 1);
    let mut inputs = Vec::with_capacity(batch.negatives.len() + 1);
    for v in batch.triple_side() {
        let projected = head.project(v)?;
        sims.push(similarity(&anchor, &projected)?);
        inputs.push(DVector::from_column_slice(v.values()));
    }
    let logits: Vec<f64> = sims.iter().map(|s| s.cos * scale).collect();
    let (loss, probs) = neg_log_softmax_first(&logits);

    let mut grad = DMatrix::zeros(head.dim_out(), head.dim_in());
    for (i, (sim, input)) in sims.iter().zip(&inputs).enumerate() {
        let dl_dz = probs[i] - if i == 0 { 1.0 } else { 0.0 };
        grad += (&sim.grad * (dl_dz * scale)) * input.transpose();
    }
    Ok((loss, grad))
}

pub fn mean_loss(dataset: &[ContrastiveBatch], head: &ProjectionHead) -> Result<f64> {
    let mut total = 0.0;
    for batch in dataset {
        total += projected_loss(batch, head)?;
    }
    Ok(total / dataset.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: ProjectionHead,
    /// Mean loss before each step, plus the final mean loss: `steps + 1`
    /// entries.
    pub trace: Vec<f64>,
}

/// Full-batch gradient descent on the mean loss over `dataset`.
pub fn train_head(
    dataset: &[ContrastiveBatch],
    initial: ProjectionHead,
    steps: usize,
    learning_rate: f64,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let n = dataset.len() as f64;
    let mut head = initial;
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut loss = 0.0;
        let mut grad = DMatrix::zeros(head.dim_out(), head.dim_in());
        for batch in dataset {
            let (l, g) = loss_gradient(batch, &head)?;
            loss += l;
            if step < steps {
                grad += g;
            }
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.push(loss);
        if step == steps {
            break;
        }
        if learning_rate != 0.0 {
            head.weights -= grad * (learning_rate / n);
            if head.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Diverged { step });
            }
        }
        log::debug!("step {step}: mean loss {loss:.6}");
    }
    Ok(TrainOutcome { head, trace })
}
