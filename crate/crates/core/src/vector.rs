//! Dense embedding vectors and exact similarity ranking.
//!
//! Everything here is generic over [`Scalar`] so the same ranking code runs on
//! `f32` stores and `f64` stores. The engine itself uses `f64` (see
//! [`crate::Embedding`]).

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VectorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
}

/// Fixed-dimension embedding produced by an embedding provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector<S> {
    values: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    pub fn new(values: Vec<S>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.is_zero())
    }

    pub fn norm(&self) -> S {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn scaled(&self, alpha: S) -> Self {
        Self::new(self.values.iter().map(|v| *v * alpha).collect())
    }

    pub fn cast<T: Scalar>(&self) -> EmbeddingVector<T> {
        EmbeddingVector::new(
            self.values
                .iter()
                .map(|v| T::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        )
    }
}

impl<S: Scalar> From<Vec<S>> for EmbeddingVector<S> {
    fn from(values: Vec<S>) -> Self {
        Self::new(values)
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`.
pub fn cosine<S: Scalar>(u: &EmbeddingVector<S>, v: &EmbeddingVector<S>) -> Result<S, VectorError> {
    if u.dim() != v.dim() {
        return Err(VectorError::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let nu = u.norm();
    let nv = v.norm();
    if nu.is_zero() || nv.is_zero() {
        return Err(VectorError::ZeroVector);
    }
    let c = dot(u.values(), v.values()) / (nu * nv);
    // rounding can push |c| a hair past 1
    Ok(c.max(-S::one()).min(S::one()))
}

/// Ordering used for every ranked list: similarity descending, then smaller id.
pub fn rank_order<S: Scalar>(a: &(u64, S), b: &(u64, S)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Exhaustive top-k scan. Candidates are `(id, vector)`; ties on similarity go
/// to the smaller id.
pub fn top_k<'a, S, I>(
    query: &EmbeddingVector<S>,
    candidates: I,
    k: usize,
) -> Result<Vec<(u64, S)>, VectorError>
where
    S: Scalar,
    I: IntoIterator<Item = (u64, &'a EmbeddingVector<S>)>,
{
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut scored = Vec::new();
    for (id, v) in candidates {
        scored.push((id, cosine(query, v)?));
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}
