//! Symmetric in-batch contrastive objective over paired embeddings.
//!
//! For a batch of N pairs, row i of each side is the positive for row i of
//! the other side and every cross row is a negative. One direction scores
//! anchors against all candidates under a temperature-scaled softmax; the
//! final loss averages both directions.

use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::numerics::{Graph, NodeId, NumericsError, Tensor};

/// A batch of paired embeddings. Rows are expected unit-norm when produced by
/// the encoder's word embedding, but the loss accepts raw embeddings too.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    /// `[N, dim]` embeddings of the English-side IPA.
    pub z_e: Tensor,
    /// `[N, dim]` embeddings of the target-side IPA.
    pub z_t: Tensor,
    pub temperature: f64,
    /// Provenance of each row, carried through reports.
    pub pair_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// English rows as anchors, target rows as candidates.
    EnglishToTarget,
    /// Target rows as anchors, English rows as candidates.
    TargetToEnglish,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContrastiveError {
    NonPositiveTemperature,
    EmptyBatch,
    DimMismatch,
    Numerics(NumericsError),
}

impl fmt::Display for ContrastiveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContrastiveError::NonPositiveTemperature => {
                write!(f, "temperature must be positive")
            }
            ContrastiveError::EmptyBatch => write!(f, "batch has no pairs"),
            ContrastiveError::DimMismatch => {
                write!(f, "pair sides disagree in shape")
            }
            ContrastiveError::Numerics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ContrastiveError {}

impl From<NumericsError> for ContrastiveError {
    fn from(e: NumericsError) -> Self {
        ContrastiveError::Numerics(e)
    }
}

impl PairBatch {
    pub fn new(z_e: Tensor, z_t: Tensor, temperature: f64) -> Result<Self, ContrastiveError> {
        let pair_ids = (0..z_e.rows()).collect();
        let batch = Self {
            z_e,
            z_t,
            temperature,
            pair_ids,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<(), ContrastiveError> {
        if !(self.temperature > 0.0) {
            return Err(ContrastiveError::NonPositiveTemperature);
        }
        if self.z_e.rows() == 0 {
            return Err(ContrastiveError::EmptyBatch);
        }
        if self.z_e.shape() != self.z_t.shape() {
            return Err(ContrastiveError::DimMismatch);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.z_e.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sides(&self, direction: Direction) -> (&Tensor, &Tensor) {
        match direction {
            Direction::EnglishToTarget => (&self.z_e, &self.z_t),
            Direction::TargetToEnglish => (&self.z_t, &self.z_e),
        }
    }
}

/// One direction of the objective:
/// `(1/N) Σ_i -log softmax(⟨anchor_i, candidate_·⟩ / τ)[i]`,
/// computed with max-subtracted log-sum-exp.
pub fn info_nce(batch: &PairBatch, direction: Direction) -> Result<f64, ContrastiveError> {
    batch.validate()?;
    let (anchors, candidates) = batch.sides(direction);
    let (n, dim) = (anchors.rows(), anchors.cols());
    let inv_tau = 1.0 / batch.temperature;
    let mut loss = 0.0;
    let mut row = alloc::vec![0.0; n];
    for i in 0..n {
        for (k, slot) in row.iter_mut().enumerate() {
            let mut dot = 0.0;
            for d in 0..dim {
                dot += anchors.at(i, d) * candidates.at(k, d);
            }
            *slot = dot * inv_tau;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = math::ln(row.iter().map(|&l| math::exp(l - max)).sum::<f64>()) + max;
        loss += lse - row[i];
    }
    Ok(loss / n as f64)
}

/// Average of both directions.
pub fn ipac_loss(batch: &PairBatch) -> Result<f64, ContrastiveError> {
    let e2t = info_nce(batch, Direction::EnglishToTarget)?;
    let t2e = info_nce(batch, Direction::TargetToEnglish)?;
    Ok(0.5 * (e2t + t2e))
}

/// Verification oracle: the same quantity via explicit per-element loops and
/// the literal softmax ratio, no vectorized shortcuts and no log-sum-exp
/// stabilisation. Intended for small batches.
pub fn brute_force_info_nce(
    batch: &PairBatch,
    direction: Direction,
) -> Result<f64, ContrastiveError> {
    batch.validate()?;
    let (anchors, candidates) = batch.sides(direction);
    let n = anchors.rows();
    let dim = anchors.cols();
    let mut total = 0.0;
    for i in 0..n {
        let mut positive = 0.0;
        for d in 0..dim {
            positive += anchors.at(i, d) * candidates.at(i, d);
        }
        let positive_exp = math::exp(positive / batch.temperature);
        let mut denom = 0.0;
        for k in 0..n {
            let mut dot = 0.0;
            for d in 0..dim {
                dot += anchors.at(i, d) * candidates.at(k, d);
            }
            denom += math::exp(dot / batch.temperature);
        }
        total += -math::ln(positive_exp / denom);
    }
    Ok(total / n as f64)
}

/// Differentiable single-direction loss on stacked embedding nodes:
/// cross-entropy of the scaled similarity matrix against the diagonal.
pub fn info_nce_graph(
    g: &mut Graph,
    z_e: NodeId,
    z_t: NodeId,
    temperature: f64,
    direction: Direction,
) -> Result<NodeId, ContrastiveError> {
    if !(temperature > 0.0) {
        return Err(ContrastiveError::NonPositiveTemperature);
    }
    let (anchors, candidates) = match direction {
        Direction::EnglishToTarget => (z_e, z_t),
        Direction::TargetToEnglish => (z_t, z_e),
    };
    let n = g.value(anchors).rows();
    if n == 0 {
        return Err(ContrastiveError::EmptyBatch);
    }
    if g.value(anchors).shape() != g.value(candidates).shape() {
        return Err(ContrastiveError::DimMismatch);
    }
    let cand_t = g.transpose(candidates)?;
    let sims = g.matmul(anchors, cand_t)?;
    let logits = g.scale(sims, 1.0 / temperature)?;
    let targets: Vec<usize> = (0..n).collect();
    Ok(g.cross_entropy(logits, &targets)?)
}

/// Differentiable symmetric loss.
pub fn ipac_loss_graph(
    g: &mut Graph,
    z_e: NodeId,
    z_t: NodeId,
    temperature: f64,
) -> Result<NodeId, ContrastiveError> {
    let e2t = info_nce_graph(g, z_e, z_t, temperature, Direction::EnglishToTarget)?;
    let t2e = info_nce_graph(g, z_e, z_t, temperature, Direction::TargetToEnglish)?;
    let sum = g.add(e2t, t2e)?;
    Ok(g.scale(sum, 0.5)?)
}
