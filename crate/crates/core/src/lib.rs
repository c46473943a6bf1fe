//! Product-listing equivalence: question-guided evidence gathering with a
//! reusable store of past reasoning, plus rule and single-prompt baselines.

pub mod agents;
pub mod clock;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod rules;
pub mod scenario;
pub mod scalar;
pub mod settings;
pub mod traces;
pub mod vector;
pub mod provider;
pub mod review;

/// Embedding type used by providers, the trace store and the pipeline.
pub type Embedding = vector::EmbeddingVector<f64>;
/// Half-size vectors for callers that keep large corpora in memory.
pub type Embedding32 = vector::EmbeddingVector<f32>;
